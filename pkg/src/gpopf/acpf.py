"""Newton-Raphson AC power flow in polar form, plus branch flows and model outputs.

This is the physics oracle for the whole package: datasets, Monte-Carlo
validation and the deterministic OPF all evaluate grid states through it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import GridCase, IoSchema


class PowerFlowError(RuntimeError):
    """Raised when Newton-Raphson fails to converge or the Jacobian is singular."""

    def __init__(self, msg: str, iterations: int = 0, max_mismatch: float = float("nan")):
        super().__init__(msg)
        self.iterations = iterations
        self.max_mismatch = max_mismatch


@dataclass(frozen=True)
class Injections:
    """Scheduled injections in per-unit.

    ``p_gen`` is aligned with ``case.generators``; the slack entry is only a
    schedule (the slack machine absorbs the residual imbalance and losses).
    Load/RES arrays are aligned with ``case.buses``.
    """

    p_gen: np.ndarray
    p_load: np.ndarray
    q_load: np.ndarray
    p_res: np.ndarray
    q_res: np.ndarray


@dataclass(frozen=True)
class PfSolution:
    v: np.ndarray          # bus voltage magnitudes
    theta: np.ndarray      # bus voltage angles, radians
    p_gen: np.ndarray      # realized generator active output (slack from the network)
    q_gen: np.ndarray      # realized generator reactive output
    iterations: int
    max_mismatch: float


def case_loads(case: GridCase) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Forecast (p_load, q_load, p_res, q_res) arrays aligned with case.buses."""
    pl = np.array([b.p_load for b in case.buses])
    ql = np.array([b.q_load for b in case.buses])
    pr = np.array([b.p_res for b in case.buses])
    qr = np.array([b.q_res for b in case.buses])
    return pl, ql, pr, qr


def injections(case: GridCase, p_gen=None, p_load=None, q_load=None,
               p_res=None, q_res=None) -> Injections:
    """Assemble an Injections record, defaulting to the case forecast.

    When ``p_gen`` is omitted the forecast net load is shared among the
    machines proportionally to p_max.
    """
    pl, ql, pr, qr = case_loads(case)
    pl = pl if p_load is None else np.asarray(p_load, dtype=float)
    ql = ql if q_load is None else np.asarray(q_load, dtype=float)
    pr = pr if p_res is None else np.asarray(p_res, dtype=float)
    qr = qr if q_res is None else np.asarray(q_res, dtype=float)
    if p_gen is None:
        net = pl.sum() - pr.sum()
        pmax = np.array([g.p_max for g in case.generators])
        p_gen = net * pmax / pmax.sum()
    return Injections(np.asarray(p_gen, dtype=float), pl, ql, pr, qr)


@lru_cache(maxsize=8)
def _ybus(case: GridCase) -> np.ndarray:
    from .grid import build_admittance
    G, B = build_admittance(case)
    return G + 1j * B


def _bus_sets(case: GridCase) -> tuple[int, np.ndarray, np.ndarray]:
    """(slack position, PV positions, PQ positions), all as bus indices."""
    pos = {bid: i for i, bid in enumerate(case.bus_ids)}
    slack = next(i for i, b in enumerate(case.buses) if b.kind == "slack")
    gen_pos = {pos[g.bus] for g in case.generators}
    pv = np.array(sorted(gen_pos - {slack}), dtype=int)
    pq = np.array(sorted(set(range(case.n_bus)) - gen_pos), dtype=int)
    return slack, pv, pq


def power_injections(case: GridCase, v: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Net active/reactive power injected into the network at each bus."""
    V = v * np.exp(1j * theta)
    S = V * np.conj(_ybus(case) @ V)
    return S.real, S.imag


def _scheduled(case: GridCase, inj: Injections) -> tuple[np.ndarray, np.ndarray]:
    p = -inj.p_load + inj.p_res
    q = -inj.q_load + inj.q_res
    pos = {bid: i for i, bid in enumerate(case.bus_ids)}
    for k, g in enumerate(case.generators):
        p[pos[g.bus]] += inj.p_gen[k]
    return p, q


def solve_acpf(case: GridCase, inj: Injections, tol: float = 1e-8,
               max_iter: int = 20) -> PfSolution:
    """Newton-Raphson power flow from a flat start.

    Raises PowerFlowError on non-convergence (with the final mismatch) or on a
    singular Jacobian (with the iteration index).
    """
    slack, pv, pq = _bus_sets(case)
    pvpq = np.concatenate([pv, pq])
    Y = _ybus(case)
    n = case.n_bus

    v = np.ones(n)
    pos = {bid: i for i, bid in enumerate(case.bus_ids)}
    for g in case.generators:
        v[pos[g.bus]] = g.v_set
    theta = np.zeros(n)

    p_sched, q_sched = _scheduled(case, inj)

    def mismatch(v, theta):
        P, Q = power_injections(case, v, theta)
        return np.concatenate([(P - p_sched)[pvpq], (Q - q_sched)[pq]])

    f = mismatch(v, theta)
    it = 0
    while np.max(np.abs(f)) > tol:
        if it >= max_iter:
            raise PowerFlowError(
                f"power flow did not converge in {max_iter} iterations "
                f"(mismatch {np.max(np.abs(f)):.3e})",
                iterations=it, max_mismatch=float(np.max(np.abs(f))))
        V = v * np.exp(1j * theta)
        I = Y @ V
        dV = np.diag(V)
        dI = np.diag(I)
        dVn = np.diag(V / v)
        dS_dth = 1j * dV @ np.conj(dI - Y @ dV)
        dS_dvm = dVn @ np.conj(dI) + dV @ np.conj(Y @ dVn)
        J = np.block([
            [dS_dth[np.ix_(pvpq, pvpq)].real, dS_dvm[np.ix_(pvpq, pq)].real],
            [dS_dth[np.ix_(pq, pvpq)].imag, dS_dvm[np.ix_(pq, pq)].imag],
        ])
        try:
            dx = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            raise PowerFlowError(f"singular power-flow Jacobian at iteration {it}",
                                 iterations=it,
                                 max_mismatch=float(np.max(np.abs(f)))) from None
        if not np.all(np.isfinite(dx)):
            raise PowerFlowError(f"non-finite Newton step at iteration {it}",
                                 iterations=it,
                                 max_mismatch=float(np.max(np.abs(f))))
        theta[pvpq] -= dx[: pvpq.size]
        v[pq] -= dx[pvpq.size:]
        if np.any(v <= 0):
            raise PowerFlowError(f"voltage collapse (v <= 0) at iteration {it}",
                                 iterations=it,
                                 max_mismatch=float(np.max(np.abs(f))))
        f = mismatch(v, theta)
        it += 1

    P, Q = power_injections(case, v, theta)
    p_gen = inj.p_gen.copy()
    q_gen = np.zeros(len(case.generators))
    for k, g in enumerate(case.generators):
        i = pos[g.bus]
        q_gen[k] = Q[i] + inj.q_load[i] - inj.q_res[i]
        if i == slack:
            p_gen[k] = P[i] + inj.p_load[i] - inj.p_res[i]
    return PfSolution(v=v, theta=theta, p_gen=p_gen, q_gen=q_gen,
                      iterations=it, max_mismatch=float(np.max(np.abs(f))))


def branch_flows(case: GridCase, sol: PfSolution):
    """Per-line complex flows at both ends and the apparent-power magnitudes.

    Returns (p_f, q_f, p_t, q_t, s), where s is the larger of the two end
    magnitudes (the limit-relevant loading of the line).
    """
    pos = {bid: i for i, bid in enumerate(case.bus_ids)}
    V = sol.v * np.exp(1j * sol.theta)
    nl = len(case.lines)
    S_f = np.zeros(nl, dtype=complex)
    S_t = np.zeros(nl, dtype=complex)
    for l, ln in enumerate(case.lines):
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        y = 1.0 / complex(ln.r, ln.x)
        ysh = 0.5j * ln.b_shunt
        S_f[l] = V[i] * np.conj((y + ysh) * V[i] - y * V[j])
        S_t[l] = V[j] * np.conj((y + ysh) * V[j] - y * V[i])
    s = np.maximum(np.abs(S_f), np.abs(S_t))
    return S_f.real, S_f.imag, S_t.real, S_t.imag, s


def evaluate_outputs(case: GridCase, sol: PfSolution, schema: IoSchema) -> np.ndarray:
    """Stack the model output vector [v block | q_g block | s block]."""
    *_, s = branch_flows(case, sol)
    v = sol.v[list(schema.v_bus_idx)]
    qg = sol.q_gen[list(schema.qg_gen_idx)]
    return np.concatenate([v, qg, s])
