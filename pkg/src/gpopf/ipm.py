"""Primal-dual interior-point solver for smooth nonlinear programs.

Solves

    minimize f(z)   subject to   c_E(z) = 0,   c_I(z) >= 0,   lb <= z <= ub

with slack variables on the general inequalities and a logarithmic barrier
on both the slacks and the variable bounds, so every callable is only ever
evaluated strictly inside the bounds.  Search directions come from the
reduced symmetric primal-dual system; the Lagrangian Hessian is a damped
BFGS estimate, which keeps the reduced matrix positive definite without
inertia bookkeeping.  Steps are globalized by an l1-penalty merit function
with Armijo backtracking behind a fraction-to-boundary limit, and a
Gauss-Newton restoration loop handles line-search breakdowns far from
feasibility.  Everything is deterministic.

Callables follow one convention: ``fun(z) -> (value, gradient)``,
``eq(z) -> (c_E, J_E)`` and ``ineq(z) -> (c_I, J_I)`` with Jacobians of
shape (m, n).  Multipliers reported in the result belong to the Lagrangian

    L = f - y_eq' c_E - y_ineq' c_I - z_lb' (z - lb) - z_ub' (ub - z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"

MU_INIT = 0.1
KAPPA_EPS = 10.0        # barrier subproblem converged below KAPPA_EPS * mu
TAU_MIN = 0.99          # fraction-to-boundary floor
KAPPA_SIGMA = 1e10      # dual safeguard corridor around mu / primal
ARMIJO_C1 = 1e-4
ALPHA_MIN = 1e-12
BOUND_PUSH = 1e-2
S_MAX = 100.0           # multiplier scale cap in the error norms
DELTA_W = (0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6)
DELTA_C = 1e-8
MAX_RESTORATIONS = 5


@dataclass
class IpmResult:
    z: np.ndarray
    f: float
    status: str
    iterations: int
    kkt: float
    y_eq: np.ndarray
    y_ineq: np.ndarray
    z_lb: np.ndarray
    z_ub: np.ndarray


class _Eval:
    """All problem data at one point."""

    __slots__ = ("z", "f", "g", "c_e", "j_e", "c_i", "j_i", "ok")

    def __init__(self, fun, eq, ineq, z, n):
        self.z = z
        f, g = fun(z)
        self.f = float(f)
        self.g = np.asarray(g, dtype=float).reshape(n)
        if eq is not None:
            c, j = eq(z)
            self.c_e = np.atleast_1d(np.asarray(c, dtype=float))
            self.j_e = np.asarray(j, dtype=float).reshape(self.c_e.size, n)
        else:
            self.c_e = np.zeros(0)
            self.j_e = np.zeros((0, n))
        if ineq is not None:
            c, j = ineq(z)
            self.c_i = np.atleast_1d(np.asarray(c, dtype=float))
            self.j_i = np.asarray(j, dtype=float).reshape(self.c_i.size, n)
        else:
            self.c_i = np.zeros(0)
            self.j_i = np.zeros((0, n))
        self.ok = (np.isfinite(self.f) and np.all(np.isfinite(self.g))
                   and np.all(np.isfinite(self.c_e))
                   and np.all(np.isfinite(self.j_e))
                   and np.all(np.isfinite(self.c_i))
                   and np.all(np.isfinite(self.j_i)))


def _push_inside(z, lb, ub):
    """Move the start strictly inside the bounds."""
    z = np.asarray(z, dtype=float).copy()
    for j in range(z.size):
        lo, hi = lb[j], ub[j]
        pad_l = BOUND_PUSH * max(1.0, abs(lo)) if np.isfinite(lo) else 0.0
        pad_u = BOUND_PUSH * max(1.0, abs(hi)) if np.isfinite(hi) else 0.0
        if np.isfinite(lo) and np.isfinite(hi):
            pad_l = min(pad_l, 0.25 * (hi - lo))
            pad_u = min(pad_u, 0.25 * (hi - lo))
        if np.isfinite(lo):
            z[j] = max(z[j], lo + pad_l)
        if np.isfinite(hi):
            z[j] = min(z[j], hi - pad_u)
    return z


def _max_step(val, dval, tau):
    """Largest alpha in (0, 1] with val + alpha dval >= (1 - tau) val."""
    neg = dval < 0.0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * val[neg] / dval[neg])))


def _scaled_norms(y_parts):
    total = sum(np.sum(np.abs(p)) for p in y_parts)
    count = sum(p.size for p in y_parts)
    s_d = max(S_MAX, total / max(1, count)) / S_MAX
    return s_d


def _grad_lagrangian(ev, y_e, y_i, w_l, w_u):
    r = ev.g.copy()
    if y_e.size:
        r -= ev.j_e.T @ y_e
    if y_i.size:
        r -= ev.j_i.T @ y_i
    return r - w_l + w_u


def kkt_error(fun, z, y_eq=None, y_ineq=None, z_lb=None, z_ub=None,
              eq=None, ineq=None, lb=None, ub=None):
    """Scaled first-order KKT residual at an arbitrary point.

    Stationarity and complementarity are divided by the average multiplier
    magnitude once it exceeds 100, matching the solver's own convergence
    measure; feasibility is absolute.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    ev = _Eval(fun, eq, ineq, z, n)
    y_e = np.zeros(ev.c_e.size) if y_eq is None else np.asarray(y_eq, float)
    y_i = np.zeros(ev.c_i.size) if y_ineq is None else np.asarray(y_ineq, float)
    w_l = np.zeros(n) if z_lb is None else np.asarray(z_lb, float)
    w_u = np.zeros(n) if z_ub is None else np.asarray(z_ub, float)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)

    s_d = _scaled_norms([y_e, y_i, w_l, w_u])
    s_c = _scaled_norms([y_i, w_l, w_u])
    err = np.max(np.abs(_grad_lagrangian(ev, y_e, y_i, w_l, w_u))) / s_d
    if ev.c_e.size:
        err = max(err, np.max(np.abs(ev.c_e)))
    if ev.c_i.size:
        err = max(err, np.max(np.abs(np.minimum(ev.c_i, 0.0))))
        err = max(err, np.max(np.abs(ev.c_i * y_i)) / s_c)
    fin_l = np.isfinite(lb)
    fin_u = np.isfinite(ub)
    if fin_l.any():
        err = max(err, np.max(np.abs((z - lb)[fin_l] * w_l[fin_l])) / s_c)
    if fin_u.any():
        err = max(err, np.max(np.abs((ub - z)[fin_u] * w_u[fin_u])) / s_c)
    return float(err)


def _barrier_error(ev, s, y_e, y_i, w_l, w_u, lb, ub, fin_l, fin_u, mu):
    """Optimality error of the barrier subproblem at parameter mu."""
    s_d = _scaled_norms([y_e, y_i, w_l, w_u])
    s_c = _scaled_norms([y_i, w_l, w_u])
    err = np.max(np.abs(_grad_lagrangian(ev, y_e, y_i, w_l, w_u))) / s_d
    if ev.c_e.size:
        err = max(err, np.max(np.abs(ev.c_e)))
    if s.size:
        err = max(err, np.max(np.abs(ev.c_i - s)))
        err = max(err, np.max(np.abs(s * y_i - mu)) / s_c)
    if fin_l.any():
        comp = (ev.z - lb)[fin_l] * w_l[fin_l] - mu
        err = max(err, np.max(np.abs(comp)) / s_c)
    if fin_u.any():
        comp = (ub - ev.z)[fin_u] * w_u[fin_u] - mu
        err = max(err, np.max(np.abs(comp)) / s_c)
    return float(err)


def _kkt_at(ev, s, y_e, y_i, w_l, w_u, lb, ub, fin_l, fin_u):
    """Slack-free KKT error (mu = 0) used for termination and best-iterate."""
    s_d = _scaled_norms([y_e, y_i, w_l, w_u])
    s_c = _scaled_norms([y_i, w_l, w_u])
    err = np.max(np.abs(_grad_lagrangian(ev, y_e, y_i, w_l, w_u))) / s_d
    if ev.c_e.size:
        err = max(err, np.max(np.abs(ev.c_e)))
    if ev.c_i.size:
        err = max(err, np.max(np.abs(np.minimum(ev.c_i, 0.0))))
        err = max(err, np.max(np.abs(ev.c_i * y_i)) / s_c)
    if fin_l.any():
        err = max(err, np.max(np.abs((ev.z - lb)[fin_l] * w_l[fin_l])) / s_c)
    if fin_u.any():
        err = max(err, np.max(np.abs((ub - ev.z)[fin_u] * w_u[fin_u])) / s_c)
    return float(err)


def _merit(ev, s, lb, ub, fin_l, fin_u, mu, nu):
    t = ev.f
    if s.size:
        t -= mu * np.sum(np.log(s))
        t += nu * np.sum(np.abs(ev.c_i - s))
    if fin_l.any():
        t -= mu * np.sum(np.log((ev.z - lb)[fin_l]))
    if fin_u.any():
        t -= mu * np.sum(np.log((ub - ev.z)[fin_u]))
    if ev.c_e.size:
        t += nu * np.sum(np.abs(ev.c_e))
    return t


def _restore(fun, eq, ineq, z, lb, ub, n, max_steps=40):
    """Gauss-Newton descent on the squared constraint violation."""
    pad_l = np.where(np.isfinite(lb), 1e-9 * np.maximum(1.0, np.abs(lb)), 0.0)
    pad_u = np.where(np.isfinite(ub), 1e-9 * np.maximum(1.0, np.abs(ub)), 0.0)

    def theta(ev):
        return 0.5 * (ev.c_e @ ev.c_e
                      + np.sum(np.minimum(ev.c_i, 0.0) ** 2))

    ev = _Eval(fun, eq, ineq, z, n)
    lam = 1e-6
    for _ in range(max_steps):
        th = theta(ev)
        if th < 1e-16:
            break
        active = ev.c_i < 0.0
        v = np.concatenate([ev.c_e, ev.c_i[active]])
        j = np.vstack([ev.j_e, ev.j_i[active]])
        step = np.linalg.solve(j.T @ j + lam * np.eye(n), -j.T @ v)
        z_t = np.clip(ev.z + step, lb + pad_l, ub - pad_u)
        trial = _Eval(fun, eq, ineq, z_t, n)
        if trial.ok and theta(trial) < th * (1.0 - 1e-4):
            ev = trial
            lam = max(lam / 3.0, 1e-10)
        else:
            lam *= 10.0
            if lam > 1e12:
                break
    return ev, theta(ev)


def minimize(fun, z0, eq=None, ineq=None, lb=None, ub=None,
             tol: float = 1e-8, max_iter: int = 200) -> IpmResult:
    """Solve the NLP from ``z0``; see the module docstring for conventions.

    Overflow in iterate arithmetic is silenced: non-finite trial points are
    rejected by the line search, which is the intended handling for
    pathological (e.g. unbounded) problems.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _minimize_impl(fun, z0, eq, ineq, lb, ub, tol, max_iter)


def _minimize_impl(fun, z0, eq, ineq, lb, ub, tol, max_iter) -> IpmResult:
    z0 = np.asarray(z0, dtype=float)
    n = z0.size
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if np.any(lb >= ub):
        raise ValueError("empty box: lb >= ub on some component")
    fin_l = np.isfinite(lb)
    fin_u = np.isfinite(ub)

    z = _push_inside(z0, lb, ub)
    ev = _Eval(fun, eq, ineq, z, n)
    if not ev.ok:
        raise ValueError("problem callables are not finite at the start")
    m_i = ev.c_i.size

    mu = MU_INIT
    mu_min = tol / 100.0
    s = np.maximum(ev.c_i, 1e-2)
    y_i = mu / s if m_i else np.zeros(0)
    w_l = np.where(fin_l, mu / np.maximum(z - lb, 1e-12), 0.0)
    w_u = np.where(fin_u, mu / np.maximum(ub - z, 1e-12), 0.0)
    if ev.c_e.size:
        rhs = ev.g - w_l + w_u - ev.j_i.T @ y_i
        y_e = np.linalg.lstsq(ev.j_e.T, rhs, rcond=None)[0]
        if not np.all(np.isfinite(y_e)) or np.max(np.abs(y_e), initial=0.0) > 1e3:
            y_e = np.zeros(ev.c_e.size)
    else:
        y_e = np.zeros(0)

    w_mat = np.eye(n)
    first_update = True
    nu = 1.0
    restorations = 0
    best = None

    def snapshot(err):
        return (err, ev.z.copy(), ev.f, y_e.copy(), y_i.copy(),
                w_l.copy(), w_u.copy())

    it = 0
    for it in range(1, max_iter + 1):
        err_0 = _kkt_at(ev, s, y_e, y_i, w_l, w_u, lb, ub, fin_l, fin_u)
        if best is None or err_0 < best[0]:
            best = snapshot(err_0)
        if err_0 <= tol:
            return IpmResult(z=ev.z.copy(), f=ev.f, status=STATUS_OPTIMAL,
                             iterations=it - 1, kkt=err_0, y_eq=y_e,
                             y_ineq=y_i, z_lb=w_l, z_ub=w_u)
        while mu > mu_min and _barrier_error(
                ev, s, y_e, y_i, w_l, w_u, lb, ub, fin_l, fin_u,
                mu) <= KAPPA_EPS * mu:
            mu = max(mu_min, min(0.2 * mu, mu ** 1.5))
            nu = 1.0

        # assemble the reduced primal-dual system
        d_l = np.where(fin_l, w_l / np.maximum(z - lb, 1e-300), 0.0)
        d_u = np.where(fin_u, w_u / np.maximum(ub - z, 1e-300), 0.0)
        r_i = ev.c_i - s
        sig = y_i / s if m_i else np.zeros(0)
        h_base = w_mat + np.diag(d_l + d_u)
        if m_i:
            h_base = h_base + ev.j_i.T @ (sig[:, None] * ev.j_i)

        bar_l = np.where(fin_l, mu / np.maximum(z - lb, 1e-300), 0.0)
        bar_u = np.where(fin_u, mu / np.maximum(ub - z, 1e-300), 0.0)
        phi = ev.g - bar_l + bar_u - ev.j_e.T @ y_e
        if m_i:
            phi = phi - ev.j_i.T @ (mu / s - sig * r_i)

        m_e = ev.c_e.size
        step = None
        for d_w in DELTA_W:
            for d_c in (0.0, DELTA_C):
                k = np.zeros((n + m_e, n + m_e))
                k[:n, :n] = h_base + d_w * np.eye(n)
                k[:n, n:] = ev.j_e.T
                k[n:, :n] = ev.j_e
                k[n:, n:] = -d_c * np.eye(m_e)
                rhs = np.concatenate([-phi, -ev.c_e])
                try:
                    sol = np.linalg.solve(k, rhs)
                except np.linalg.LinAlgError:
                    continue
                if not np.all(np.isfinite(sol)):
                    continue
                if np.linalg.norm(k @ sol - rhs) > 1e-8 * (
                        1.0 + np.linalg.norm(rhs)):
                    continue
                step = sol
                break
            if step is not None:
                break
        if step is None:
            if _feasible_now(ev):
                # nothing to restore at a feasible iterate; report the
                # stall honestly instead of blaming the constraints
                return _finish(best, STATUS_MAX_ITER, it)
            ev, s, y_e, y_i, w_l, w_u, z, ok = _enter_restoration(
                fun, eq, ineq, ev, lb, ub, n, mu, fin_l, fin_u)
            restorations += 1
            w_mat = np.eye(n)
            first_update = True
            if not ok or restorations > MAX_RESTORATIONS:
                return _finish(best, STATUS_INFEASIBLE, it)
            continue

        dz = step[:n]
        dy_e = -step[n:]
        big = 1e10 * (1.0 + np.max(np.abs(z)))
        dz_norm = np.max(np.abs(dz), initial=0.0)
        if dz_norm > big:
            dz = dz * (big / dz_norm)
            dy_e = dy_e * (big / dz_norm)
        ds = ev.j_i @ dz + r_i if m_i else np.zeros(0)
        dy_i = (mu / s - y_i - sig * ds) if m_i else np.zeros(0)
        dw_l = np.where(fin_l, bar_l - w_l - d_l * dz, 0.0)
        dw_u = np.where(fin_u, bar_u - w_u + d_u * dz, 0.0)

        tau = max(TAU_MIN, 1.0 - mu)
        alpha_max = 1.0
        if m_i:
            alpha_max = min(alpha_max, _max_step(s, ds, tau))
        if fin_l.any():
            alpha_max = min(alpha_max,
                            _max_step((z - lb)[fin_l], dz[fin_l], tau))
        if fin_u.any():
            alpha_max = min(alpha_max,
                            _max_step((ub - z)[fin_u], -dz[fin_u], tau))
        alpha_dual = 1.0
        if m_i:
            alpha_dual = min(alpha_dual, _max_step(y_i, dy_i, tau))
        if fin_l.any():
            alpha_dual = min(alpha_dual,
                             _max_step(w_l[fin_l], dw_l[fin_l], tau))
        if fin_u.any():
            alpha_dual = min(alpha_dual,
                             _max_step(w_u[fin_u], dw_u[fin_u], tau))

        # l1 merit: penalty weight must dominate the trial multipliers
        viol = np.sum(np.abs(ev.c_e)) + np.sum(np.abs(r_i))
        y_norm = 0.0
        if m_e:
            y_norm = max(y_norm, np.max(np.abs(y_e + dy_e)))
        if m_i:
            y_norm = max(y_norm, np.max(np.abs(y_i + dy_i)))
        d_phi_f = ev.g @ dz
        if m_i:
            d_phi_f -= mu * np.sum(ds / s)
        if fin_l.any():
            d_phi_f -= mu * np.sum(dz[fin_l] / (z - lb)[fin_l])
        if fin_u.any():
            d_phi_f += mu * np.sum(dz[fin_u] / (ub - z)[fin_u])
        nu = max(nu, 1.1 * y_norm + 0.1)
        if viol > 1e-14 and d_phi_f > 0.0:
            nu = max(nu, d_phi_f / (0.5 * viol))
        d_phi = d_phi_f - nu * viol
        if d_phi >= 0.0:
            d_phi = -1e-16

        phi_0 = _merit(ev, s, lb, ub, fin_l, fin_u, mu, nu)
        # below this, the predicted decrease drowns in rounding of phi_0
        noise = 100.0 * np.finfo(float).eps * (1.0 + abs(phi_0))
        alpha = alpha_max
        trial = None
        s_t = s
        while alpha >= ALPHA_MIN:
            z_t = z + alpha * dz
            s_t = s + alpha * ds
            cand = _Eval(fun, eq, ineq, z_t, n)
            if cand.ok:
                phi_t = _merit(cand, s_t, lb, ub, fin_l, fin_u, mu, nu)
                if phi_t <= phi_0 + ARMIJO_C1 * alpha * d_phi:
                    trial = cand
                    break
                if abs(alpha * d_phi) <= noise and phi_t <= phi_0 + noise:
                    trial = cand
                    break
            alpha *= 0.5
        if trial is None:
            if m_e + m_i == 0 or _feasible_now(ev):
                # nothing to restore; a dead line search means stagnation
                return _finish(best, STATUS_MAX_ITER, it)
            ev, s, y_e, y_i, w_l, w_u, z, ok = _enter_restoration(
                fun, eq, ineq, ev, lb, ub, n, mu, fin_l, fin_u)
            restorations += 1
            w_mat = np.eye(n)
            first_update = True
            if not ok or restorations > MAX_RESTORATIONS:
                return _finish(best, STATUS_INFEASIBLE, it)
            continue

        y_e = y_e + alpha * dy_e
        y_i_new = y_i + alpha_dual * dy_i
        w_l_new = w_l + alpha_dual * dw_l
        w_u_new = w_u + alpha_dual * dw_u
        # keep duals inside a wide corridor around mu / primal
        if m_i:
            y_i_new = np.clip(y_i_new, mu / (KAPPA_SIGMA * s_t),
                              KAPPA_SIGMA * mu / s_t)
        w_l_new = np.where(
            fin_l, np.clip(w_l_new, mu / (KAPPA_SIGMA
                                          * np.maximum(trial.z - lb, 1e-300)),
                           KAPPA_SIGMA * mu
                           / np.maximum(trial.z - lb, 1e-300)), 0.0)
        w_u_new = np.where(
            fin_u, np.clip(w_u_new, mu / (KAPPA_SIGMA
                                          * np.maximum(ub - trial.z, 1e-300)),
                           KAPPA_SIGMA * mu
                           / np.maximum(ub - trial.z, 1e-300)), 0.0)

        # damped BFGS update of the Lagrangian Hessian estimate
        s_k = trial.z - ev.z
        g_new = trial.g - trial.j_e.T @ y_e - trial.j_i.T @ y_i_new
        g_old = ev.g - ev.j_e.T @ y_e - ev.j_i.T @ y_i_new
        y_k = g_new - g_old
        s_bs = s_k @ w_mat @ s_k
        if s_k @ s_k > 1e-300 and s_bs > 1e-300:
            s_y = s_k @ y_k
            if first_update and s_y > 1e-12:
                gamma = (y_k @ y_k) / s_y
                if np.isfinite(gamma) and 1e-6 < gamma < 1e10:
                    w_mat = gamma * np.eye(n)
                    s_bs = s_k @ w_mat @ s_k
                first_update = False
            w_s = w_mat @ s_k
            if s_y < 0.2 * s_bs:
                theta = 0.8 * s_bs / (s_bs - s_y)
                y_k = theta * y_k + (1.0 - theta) * w_s
                s_y = s_k @ y_k
            if s_y > 1e-300:
                w_mat = (w_mat - np.outer(w_s, w_s) / s_bs
                         + np.outer(y_k, y_k) / s_y)
                w_mat = 0.5 * (w_mat + w_mat.T)

        ev = trial
        z = ev.z
        s = s_t
        y_i = y_i_new
        w_l = w_l_new
        w_u = w_u_new

    err_0 = _kkt_at(ev, s, y_e, y_i, w_l, w_u, lb, ub, fin_l, fin_u)
    if best is None or err_0 < best[0]:
        best = snapshot(err_0)
    if err_0 <= tol:
        return IpmResult(z=ev.z.copy(), f=ev.f, status=STATUS_OPTIMAL,
                         iterations=it, kkt=err_0, y_eq=y_e, y_ineq=y_i,
                         z_lb=w_l, z_ub=w_u)
    return _finish(best, STATUS_MAX_ITER, it)


def _feasible_now(ev, tol: float = 1e-8) -> bool:
    """True when the iterate satisfies the original constraints to ``tol``."""
    viol = np.max(np.abs(ev.c_e), initial=0.0)
    if ev.c_i.size:
        viol = max(viol, -float(np.min(ev.c_i)))
    return viol <= tol


def _enter_restoration(fun, eq, ineq, ev, lb, ub, n, mu, fin_l, fin_u):
    """Reduce constraint violation, then reset slacks and duals."""
    th_0 = 0.5 * (ev.c_e @ ev.c_e + np.sum(np.minimum(ev.c_i, 0.0) ** 2))
    ev2, th = _restore(fun, eq, ineq, ev.z, lb, ub, n)
    ok = th < max(1e-16, 0.9 * th_0) or th <= 1e-12
    z = ev2.z
    s = np.maximum(ev2.c_i, min(1e-2, mu)) if ev2.c_i.size else np.zeros(0)
    y_i = np.minimum(mu / s, 1e6) if s.size else np.zeros(0)
    w_l = np.where(fin_l, mu / np.maximum(z - lb, 1e-12), 0.0)
    w_u = np.where(fin_u, mu / np.maximum(ub - z, 1e-12), 0.0)
    y_e = np.zeros(ev2.c_e.size)
    return ev2, s, y_e, y_i, w_l, w_u, z, ok


def _finish(best, status, iterations):
    err, z, f, y_e, y_i, w_l, w_u = best
    return IpmResult(z=z, f=f, status=status, iterations=iterations,
                     kkt=err, y_eq=y_e, y_ineq=y_i, z_lb=w_l, z_ub=w_u)
