"""Chance-constrained dispatch built on the hybrid output model.

The program decides a base-case dispatch and AGC participation factors.
Output chance constraints are enforced as boxes tightened by a multiple of
the propagated output standard deviation; generator limits are tightened in
proportion to each machine's share of the total fluctuation.  The resulting
smooth NLP goes to the interior-point solver in :mod:`gpopf.ipm`.

A deterministic AC optimal power flow over the full network equations lives
here as well; it prices individual scenarios and anchors comparisons.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ipm
from .acpf import case_loads, evaluate_outputs, injections, solve_acpf
from .dataset import UncertaintySpec, sigma_d
from .grid import GridCase, IoSchema, build_admittance, io_schema
from .models import (HybridModel, model_mean_hessian, model_mean_jacobian,
                     model_var_gradient, predict_model)
from .uncertainty import (Margins, compute_margins, fluctuation_signs,
                          input_distribution, normal_quantile, ta1_propagate)

# keeps sqrt(var) differentiable when a variance underflows to zero; the
# bias is conservative (margins only grow)
VAR_EPS = 1e-18

ETA_LADDER = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)


class InfeasibleError(RuntimeError):
    """Raised when the requested dispatch problem cannot be feasible."""


@dataclass
class NlpProblem:
    """Smooth program over z = [p_g (all generators), alpha].

    ``objective`` returns (value, gradient); ``eq`` and ``ineq`` return
    (values, jacobian).  ``lb``/``ub`` are simple bounds on z.  Hand-built
    programs may leave the grid fields empty.
    """

    n: int
    n_g: int
    objective: Callable
    eq: Callable
    ineq: Callable
    lb: np.ndarray
    ub: np.ndarray
    z0: np.ndarray | None = None
    base_mva: float = 1.0
    case: GridCase | None = None
    model: HybridModel | None = None
    spec: UncertaintySpec | None = None
    eps_y: float = 0.025
    eps_pg: float = 0.001
    eta: float = 1.0
    y_min: np.ndarray | None = None
    y_max: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def start(self) -> np.ndarray:
        if self.z0 is not None:
            return np.asarray(self.z0, dtype=float).copy()
        return np.zeros(self.n)


@dataclass
class DispatchSolution:
    p_g: np.ndarray          # MW
    alpha: np.ndarray
    cost: float              # expected cost, $/h
    kkt_residual: float
    iterations: int
    status: str
    mu_y: np.ndarray
    sigma_y: np.ndarray
    var_y: np.ndarray
    margins: Margins | None
    eta: float = 1.0
    solve_seconds: float = 0.0
    raw_z: np.ndarray | None = None    # solver vector, useful as a warm start


def expected_cost(p_g, alpha, sigma_d, coeffs):
    """Expected quadratic generation cost under affine recourse.

    ``sigma_d`` may be a covariance matrix, a vector of variances, or the
    trace itself.  Returns (value, gradient) with the gradient stacked over
    [p_g, alpha]; units follow whatever the caller passes in.
    """
    p_g = np.asarray(p_g, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    c2, c1, c0 = (np.asarray(c, dtype=float) for c in coeffs)
    s = np.asarray(sigma_d, dtype=float)
    tr = float(np.trace(s)) if s.ndim == 2 else float(np.sum(s))
    value = float(np.sum(c2 * (p_g**2 + tr * alpha**2) + c1 * p_g + c0))
    grad = np.concatenate([2.0 * c2 * p_g + c1, 2.0 * tr * c2 * alpha])
    return value, grad


def output_limits(case: GridCase, schema: IoSchema):
    """Box limits per model output row; flow rows run from 0 to the rating."""
    v_lo = np.array([case.buses[i].v_min for i in schema.v_bus_idx])
    v_hi = np.array([case.buses[i].v_max for i in schema.v_bus_idx])
    q_lo = np.array([case.generators[k].q_min for k in schema.qg_gen_idx])
    q_hi = np.array([case.generators[k].q_max for k in schema.qg_gen_idx])
    s_hi = np.array([ln.s_max for ln in case.lines])
    y_min = np.concatenate([v_lo, q_lo, np.zeros(len(case.lines))])
    y_max = np.concatenate([v_hi, q_hi, s_hi])
    return y_min, y_max


def proportional_dispatch(case: GridCase, demand: float) -> np.ndarray:
    """Fill all machines from p_min toward demand in proportion to headroom."""
    p_min = np.array([g.p_min for g in case.generators])
    p_max = np.array([g.p_max for g in case.generators])
    span = p_max - p_min
    total = span.sum()
    if total <= 0.0:
        return p_min.copy()
    frac = (demand - p_min.sum()) / total
    return p_min + np.clip(frac, 0.0, 1.0) * span


def _check_eps(name: str, eps: float) -> None:
    if not 0.0 < eps <= 0.5:
        raise ValueError("%s must lie in (0, 0.5], got %g" % (name, eps))


def assemble_nlp(case: GridCase, model: HybridModel, spec: UncertaintySpec,
                 eps_y: float = 0.025, eps_pg: float = 0.001,
                 eta: float = 1.0) -> NlpProblem:
    """Build the tightened-box dispatch program for one case and model.

    Decision vector: base-case set points of every generator followed by
    the participation factors.  Two equalities (lossless power balance and
    the participation simplex), then per output an upper and a lower
    tightened box and per generator a tightened capacity pair.  Flow
    magnitudes only get the physical lower bound, never a tightened one.
    ``eta`` scales every margin; 0 recovers the plain deterministic boxes.
    """
    schema = io_schema(case)
    if (tuple(model.input_names) != tuple(schema.input_names)
            or tuple(model.output_names) != tuple(schema.output_names)):
        raise ValueError("model schema does not match case %r" % case.case_id)
    _check_eps("eps_y", eps_y)
    _check_eps("eps_pg", eps_pg)
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1], got %g" % eta)

    gens = case.generators
    n_g = len(gens)
    n_y = schema.n_y
    n = 2 * n_g
    base = case.base_mva
    coeffs = (np.array([g.c2 for g in gens]), np.array([g.c1 for g in gens]),
              np.array([g.c0 for g in gens]))
    p_min = np.array([g.p_min for g in gens])
    p_max = np.array([g.p_max for g in gens])

    var_d = sigma_d(case, schema, spec) ** 2
    tr_d = float(var_d.sum())
    sqrt_tr = np.sqrt(tr_d)
    tau_y = normal_quantile(1.0 - eps_y)
    tau_pg = normal_quantile(1.0 - eps_pg)
    y_min, y_max = output_limits(case, schema)
    flow_row = np.array([nm.startswith("s:") for nm in schema.output_names])
    demand = float(sum(b.p_load - b.p_res for b in case.buses))

    # aggregate reserve needed by the tightened capacity rows
    reserve = eta * tau_pg * sqrt_tr
    if p_max.sum() - reserve < demand or p_min.sum() + reserve > demand:
        raise InfeasibleError(
            "case %r cannot hold the requested reserve: capacity [%g, %g] "
            "versus net demand %g with margin %g" % (
                case.case_id, p_min.sum(), p_max.sum(), demand, reserve))

    gen_cols = np.array(schema.gen_input_idx, dtype=int)
    n_load = len(schema.load_bus_idx)
    signs = fluctuation_signs(n_load, len(schema.res_bus_idx))
    sv = signs * var_d
    x_tail = np.concatenate([
        np.array([case.buses[i].p_load for i in schema.load_bus_idx]),
        np.array([case.buses[i].p_res for i in schema.res_bus_idx]),
    ])
    n_gin = gen_cols.size

    def input_cov(alpha_in):
        # build_input_cov without the simplex check; iterates live off it
        t = np.vstack([np.outer(alpha_in, signs), np.eye(var_d.size)])
        return (t * var_d) @ t.T

    cache: dict = {}

    def moments(z):
        key = z.tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        p = z[:n_g]
        alpha_in = z[n_g:][gen_cols]
        x = np.concatenate([p[gen_cols], x_tail])
        cov = input_cov(alpha_in)

        mu2, var_gp = predict_model(model, x)
        mu = mu2[0]
        # the propagated quadratic form uses the full mean jacobian
        # (surrogate plus residual); splitting the two drops their
        # cross-covariance and mis-sizes the margins
        jac_full = model_mean_jacobian(model, x)

        w_g, w_d = jac_full[:, :n_gin], jac_full[:, n_gin:]
        var = var_gp[0] + np.einsum("ij,jk,ik->i", jac_full, cov, jac_full)
        coef = 2.0 * (tr_d * (w_g @ alpha_in) + w_d @ sv)
        dvar_da = coef[:, None] * w_g
        dvar_dx = model_var_gradient(model, x)
        cu = jac_full @ cov
        for i in range(n_y):
            dvar_dx[i] += 2.0 * (model_mean_hessian(model, x, i) @ cu[i])

        dmu = np.zeros((n_y, n))
        dmu[:, gen_cols] = jac_full[:, :n_gin]
        dvar = np.zeros((n_y, n))
        dvar[:, gen_cols] = dvar_dx[:, :n_gin]
        dvar[:, n_g + gen_cols] = dvar_da
        out = (mu, dmu, var, dvar)
        if len(cache) >= 8:
            cache.clear()
        cache[key] = out
        return out

    tr_mw = tr_d * base**2
    # money per base_mva^2 keeps gradients O(1); raw dollars next to
    # per-unit constraints stall the quasi-Newton updates
    obj_scale = base**2

    def objective(z):
        value, grad = expected_cost(z[:n_g] * base, z[n_g:], tr_mw, coeffs)
        grad[:n_g] *= base
        return value / obj_scale, grad / obj_scale

    j_eq = np.zeros((2, n))
    j_eq[0, :n_g] = 1.0
    j_eq[1, n_g:] = 1.0

    def eq(z):
        return np.array([z[:n_g].sum() - demand,
                         z[n_g:].sum() - 1.0]), j_eq

    pg_margin = eta * tau_pg * sqrt_tr

    def ineq(z):
        mu, dmu, var, dvar = moments(z)
        sig = np.sqrt(var + VAR_EPS)
        dsig = dvar / (2.0 * sig[:, None])
        lam = eta * tau_y * sig
        dlam = eta * tau_y * dsig

        c_up = y_max - mu - lam
        j_up = -dmu - dlam
        c_lo = mu - y_min - np.where(flow_row, 0.0, lam)
        j_lo = dmu - np.where(flow_row[:, None], 0.0, dlam)

        p, alpha = z[:n_g], z[n_g:]
        c_pg_up = p_max - p - pg_margin * alpha
        c_pg_lo = p - p_min - pg_margin * alpha
        j_pg_up = np.hstack([-np.eye(n_g), -pg_margin * np.eye(n_g)])
        j_pg_lo = np.hstack([np.eye(n_g), -pg_margin * np.eye(n_g)])

        return (np.concatenate([c_up, c_lo, c_pg_up, c_pg_lo]),
                np.vstack([j_up, j_lo, j_pg_up, j_pg_lo]))

    lb = np.concatenate([np.full(n_g, -np.inf), np.zeros(n_g)])
    z0 = np.concatenate([proportional_dispatch(case, demand),
                         np.full(n_g, 1.0 / n_g)])
    return NlpProblem(n=n, n_g=n_g, objective=objective, eq=eq, ineq=ineq,
                      lb=lb, ub=np.full(n, np.inf), z0=z0, base_mva=base,
                      case=case, model=model, spec=spec, eps_y=eps_y,
                      eps_pg=eps_pg, eta=eta, y_min=y_min, y_max=y_max,
                      meta={"obj_scale": obj_scale})


def _project_simplex(alpha: np.ndarray) -> np.ndarray:
    clipped = np.clip(alpha, 0.0, None)
    total = clipped.sum()
    if total <= 0.0:
        return np.full(alpha.size, 1.0 / alpha.size)
    return clipped / total


def solve_nlp(problem: NlpProblem, tol: float = 1e-5,
              max_iter: int = 300) -> DispatchSolution:
    """Run the interior-point solver and package a dispatch solution.

    For grid-backed problems the participation factors are projected onto
    the simplex (a move within solver tolerance) and the reported moments,
    margins and cost are re-evaluated at that point.
    """
    t0 = time.perf_counter()
    res = ipm.minimize(problem.objective, problem.start(), eq=problem.eq,
                       ineq=problem.ineq, lb=problem.lb, ub=problem.ub,
                       tol=tol, max_iter=max_iter)
    elapsed = time.perf_counter() - t0
    obj_scale = problem.meta.get("obj_scale", 1.0)
    n_g = problem.n_g
    p_pu = res.z[:n_g].copy()
    alpha = res.z[n_g:].copy()

    if problem.model is None:
        return DispatchSolution(
            p_g=p_pu * problem.base_mva, alpha=alpha, cost=res.f * obj_scale,
            kkt_residual=res.kkt, iterations=res.iterations,
            status=res.status, mu_y=np.zeros(0), sigma_y=np.zeros(0),
            var_y=np.zeros(0), margins=None, eta=problem.eta,
            solve_seconds=elapsed, raw_z=res.z)

    case, model, spec = problem.case, problem.model, problem.spec
    alpha_s = _project_simplex(alpha)
    if res.status == ipm.STATUS_OPTIMAL:
        alpha = alpha_s
    schema = io_schema(case)
    var_d = sigma_d(case, schema, spec) ** 2
    dist = input_distribution(case, schema, spec, p_pu, alpha_s)
    mom = ta1_propagate(model, dist)
    margins = compute_margins(mom.var_y, alpha_s, var_d,
                              problem.eps_y, problem.eps_pg)
    if problem.eta != 1.0:
        margins = Margins(lambda_y=problem.eta * margins.lambda_y,
                          lambda_pg=problem.eta * margins.lambda_pg,
                          tau_y=problem.eta * margins.tau_y,
                          tau_pg=problem.eta * margins.tau_pg)
    cost, _ = problem.objective(np.concatenate([p_pu, alpha]))
    return DispatchSolution(
        p_g=p_pu * problem.base_mva, alpha=alpha, cost=cost * obj_scale,
        kkt_residual=res.kkt, iterations=res.iterations, status=res.status,
        mu_y=mom.mu_y, sigma_y=np.sqrt(mom.var_y), var_y=mom.var_y,
        margins=margins, eta=problem.eta, solve_seconds=elapsed, raw_z=res.z)


def solve_ccopf(case: GridCase, model: HybridModel, spec: UncertaintySpec,
                eps_y: float = 0.025, eps_pg: float = 0.001,
                tol: float = 1e-5, max_iter: int = 300) -> DispatchSolution:
    """Solve the chance-constrained dispatch, with a margin homotopy fallback.

    The full-margin program is attempted cold first.  If the solver does
    not certify optimality, the margins are grown from zero to full scale
    over three steps, warm-starting each stage on the previous primal
    point.
    """
    problem = assemble_nlp(case, model, spec, eps_y=eps_y, eps_pg=eps_pg)
    sol = solve_nlp(problem, tol=tol, max_iter=max_iter)
    if sol.status == ipm.STATUS_OPTIMAL:
        return sol

    z = problem.start()
    for eta in ETA_LADDER:
        stage = assemble_nlp(case, model, spec, eps_y=eps_y, eps_pg=eps_pg,
                             eta=eta)
        stage.z0 = z
        sol = solve_nlp(stage, tol=tol, max_iter=max_iter)
        if sol.status != ipm.STATUS_OPTIMAL:
            return sol
        z = np.concatenate([sol.p_g / case.base_mva, sol.alpha])
    return sol


def solution_to_dict(sol: DispatchSolution) -> dict:
    """JSON-ready view of a dispatch solution (stable across reruns)."""
    margins = None
    if sol.margins is not None:
        margins = {
            "lambda_y": sol.margins.lambda_y.tolist(),
            "lambda_pg": sol.margins.lambda_pg.tolist(),
            "tau_y": sol.margins.tau_y,
            "tau_pg": sol.margins.tau_pg,
        }
    return {
        "p_g": sol.p_g.tolist(),
        "alpha": sol.alpha.tolist(),
        "cost": sol.cost,
        "kkt_residual": sol.kkt_residual,
        "iterations": sol.iterations,
        "status": sol.status,
        "mu_y": sol.mu_y.tolist(),
        "sigma_y": sol.sigma_y.tolist(),
        "margins": margins,
        "eta": sol.eta,
    }


def solution_from_dict(doc: dict) -> DispatchSolution:
    """Inverse of ``solution_to_dict`` (timing and warm start not kept)."""
    margins = None
    if doc.get("margins"):
        m = doc["margins"]
        margins = Margins(lambda_y=np.asarray(m["lambda_y"], dtype=float),
                          lambda_pg=np.asarray(m["lambda_pg"], dtype=float),
                          tau_y=float(m["tau_y"]), tau_pg=float(m["tau_pg"]))
    sigma_y = np.asarray(doc["sigma_y"], dtype=float)
    return DispatchSolution(
        p_g=np.asarray(doc["p_g"], dtype=float),
        alpha=np.asarray(doc["alpha"], dtype=float),
        cost=float(doc["cost"]),
        kkt_residual=float(doc["kkt_residual"]),
        iterations=int(doc["iterations"]),
        status=str(doc["status"]),
        mu_y=np.asarray(doc["mu_y"], dtype=float),
        sigma_y=sigma_y,
        var_y=sigma_y**2,
        margins=margins,
        eta=float(doc.get("eta", 1.0)),
    )


def solve_det_acopf(case: GridCase, p_fluct=None, q_fluct=None,
                    tol: float = 1e-5, max_iter: int = 400,
                    z0=None) -> DispatchSolution:
    """Deterministic AC optimal power flow over the full network equations.

    Variables are bus angles (slack fixed), voltage magnitudes at non-
    generator buses (generator buses hold their set points), and generator
    set points.  Power balance at every bus is enforced exactly; line
    flows are limited through their squared apparent power at both ends.
    ``p_fluct``/``q_fluct`` optionally shift the nodal demand (per unit,
    positive raises it) so single scenarios can be priced.
    """
    base = case.base_mva
    nb = case.n_bus
    gens = case.generators
    n_g = len(gens)
    g_mat, b_mat = build_admittance(case)
    ybus = g_mat + 1j * b_mat
    pl, ql, pr, qr = case_loads(case)
    p_fix = pr - pl
    q_fix = qr - ql
    if p_fluct is not None:
        p_fix = p_fix - np.asarray(p_fluct, dtype=float)
    if q_fluct is not None:
        q_fix = q_fix - np.asarray(q_fluct, dtype=float)

    gb = np.array([case.bus_index(g.bus) for g in gens])
    if len(set(gb.tolist())) != n_g:
        raise ValueError("expected at most one generator per bus")
    slack_bus = gb[case.slack_gen]
    th_cols = np.array([i for i in range(nb) if i != slack_bus])
    vm_cols = np.array([i for i in range(nb) if i not in set(gb.tolist())])
    n_th, n_vm = th_cols.size, vm_cols.size
    n = n_th + n_vm + 2 * n_g

    v_fix = np.ones(nb)
    v_fix[gb] = [g.v_set for g in gens]
    cg = np.zeros((nb, n_g))
    cg[gb, np.arange(n_g)] = 1.0

    f_idx = np.array([case.bus_index(ln.from_bus) for ln in case.lines])
    t_idx = np.array([case.bus_index(ln.to_bus) for ln in case.lines])
    nl = len(case.lines)
    ys = np.array([1.0 / complex(ln.r, ln.x) for ln in case.lines])
    bc = np.array([ln.b_shunt for ln in case.lines])
    rows = np.arange(nl)
    cf = np.zeros((nl, nb))
    ct = np.zeros((nl, nb))
    cf[rows, f_idx] = 1.0
    ct[rows, t_idx] = 1.0
    yf = np.zeros((nl, nb), dtype=complex)
    yt = np.zeros((nl, nb), dtype=complex)
    yf[rows, f_idx] = ys + 0.5j * bc
    yf[rows, t_idx] = -ys
    yt[rows, t_idx] = ys + 0.5j * bc
    yt[rows, f_idx] = -ys
    s_max2 = np.array([ln.s_max**2 for ln in case.lines])

    def unpack(w):
        theta = np.zeros(nb)
        theta[th_cols] = w[:n_th]
        vm = v_fix.copy()
        vm[vm_cols] = w[n_th:n_th + n_vm]
        p = w[n_th + n_vm:n_th + n_vm + n_g]
        q = w[n_th + n_vm + n_g:]
        return theta, vm, p, q

    def bus_voltage(w):
        theta, vm, p, q = unpack(w)
        return vm * np.exp(1j * theta), vm, p, q

    coeffs = (np.array([g.c2 for g in gens]), np.array([g.c1 for g in gens]),
              np.array([g.c0 for g in gens]))
    p_sl = slice(n_th + n_vm, n_th + n_vm + n_g)
    obj_scale = base**2

    def objective(w):
        p_mw = w[p_sl] * base
        value = float(np.sum(coeffs[0] * p_mw**2 + coeffs[1] * p_mw
                             + coeffs[2]))
        grad = np.zeros(n)
        grad[p_sl] = base * (2.0 * coeffs[0] * p_mw + coeffs[1])
        return value / obj_scale, grad / obj_scale

    def eq(w):
        volt, vm, p, q = bus_voltage(w)
        ibus = ybus @ volt
        s_bus = volt * np.conj(ibus)
        c = np.concatenate([s_bus.real - cg @ p - p_fix,
                            s_bus.imag - cg @ q - q_fix])
        ds_dva = 1j * volt[:, None] * np.conj(np.diag(ibus)
                                              - ybus * volt[None, :])
        e_unit = volt / vm
        ds_dvm = (volt[:, None] * np.conj(ybus * e_unit[None, :])
                  + np.diag(np.conj(ibus) * e_unit))
        zg = np.zeros((nb, n_g))
        jac = np.vstack([
            np.hstack([ds_dva.real[:, th_cols], ds_dvm.real[:, vm_cols],
                       -cg, zg]),
            np.hstack([ds_dva.imag[:, th_cols], ds_dvm.imag[:, vm_cols],
                       zg, -cg]),
        ])
        return c, jac

    def ineq(w):
        volt, vm, _, _ = bus_voltage(w)
        e_unit = volt / vm
        c_rows = []
        j_rows = []
        for conn, ymat, idx in ((cf, yf, f_idx), (ct, yt, t_idx)):
            i_br = ymat @ volt
            v_end = volt[idx]
            s_br = v_end * np.conj(i_br)
            ds_dva = 1j * (np.conj(i_br)[:, None] * conn * volt[None, :]
                           - v_end[:, None] * np.conj(ymat * volt[None, :]))
            ds_dvm = (np.conj(i_br)[:, None] * conn * e_unit[None, :]
                      + v_end[:, None] * np.conj(ymat * e_unit[None, :]))
            dmag = 2.0 * (s_br.real[:, None] * ds_dva.real
                          + s_br.imag[:, None] * ds_dva.imag)
            dmag_v = 2.0 * (s_br.real[:, None] * ds_dvm.real
                            + s_br.imag[:, None] * ds_dvm.imag)
            c_rows.append(s_max2 - (s_br.real**2 + s_br.imag**2))
            j_rows.append(np.hstack([-dmag[:, th_cols], -dmag_v[:, vm_cols],
                                     np.zeros((nl, 2 * n_g))]))
        return np.concatenate(c_rows), np.vstack(j_rows)

    lb = np.concatenate([
        np.full(n_th, -np.inf),
        np.array([case.buses[i].v_min for i in vm_cols]),
        np.array([g.p_min for g in gens]),
        np.array([g.q_min for g in gens]),
    ])
    ub = np.concatenate([
        np.full(n_th, np.inf),
        np.array([case.buses[i].v_max for i in vm_cols]),
        np.array([g.p_max for g in gens]),
        np.array([g.q_max for g in gens]),
    ])
    if z0 is None:
        demand = float((pl - pr).sum()) if p_fluct is None else float(-p_fix.sum())
        z0 = np.concatenate([np.zeros(n_th), np.ones(n_vm),
                             proportional_dispatch(case, demand),
                             np.zeros(n_g)])

    t0 = time.perf_counter()
    res = ipm.minimize(objective, z0, eq=eq, ineq=ineq, lb=lb, ub=ub,
                       tol=tol, max_iter=max_iter)
    elapsed = time.perf_counter() - t0
    _, _, p_opt, _ = unpack(res.z)

    schema = io_schema(case)
    mu_y = np.zeros(schema.n_y)
    if res.status == ipm.STATUS_OPTIMAL and p_fluct is None:
        pf = solve_acpf(case, injections(case, p_gen=p_opt))
        mu_y = evaluate_outputs(case, pf, schema)
    return DispatchSolution(
        p_g=p_opt * base, alpha=np.full(n_g, 1.0 / n_g),
        cost=res.f * obj_scale,
        kkt_residual=res.kkt, iterations=res.iterations, status=res.status,
        mu_y=mu_y, sigma_y=np.zeros(schema.n_y), var_y=np.zeros(schema.n_y),
        margins=None, eta=0.0, solve_seconds=elapsed, raw_z=res.z)
