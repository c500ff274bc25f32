"""Interior-point solver checks against oracles and textbook problems."""

import numpy as np
import pytest

from gpopf.ipm import kkt_error, minimize


def quadratic(q_mat, q_vec):
    def fun(z):
        return 0.5 * z @ q_mat @ z + q_vec @ z, q_mat @ z + q_vec
    return fun


def affine_eq(a_mat, b_vec):
    def eq(z):
        return a_mat @ z - b_vec, a_mat.copy()
    return eq


def affine_ineq(g_mat, h_vec):
    def ineq(z):
        return g_mat @ z - h_vec, g_mat.copy()
    return ineq


def qp_oracle(q_mat, q_vec, a_mat, b_vec, g_mat, h_vec):
    """Global minimum of a strictly convex QP by active-set enumeration.

    For every subset of Gz >= h taken as equalities, solve the stationarity
    system and keep KKT-consistent candidates (dual feasible on the active
    rows, primal feasible on the rest).
    """
    n = q_mat.shape[0]
    m_e = a_mat.shape[0]
    m_i = g_mat.shape[0]
    best = None
    for mask in range(1 << m_i):
        act = [i for i in range(m_i) if mask >> i & 1]
        g_act = g_mat[act].reshape(len(act), n)
        k = np.block([
            [q_mat, -a_mat.T, -g_act.T],
            [a_mat, np.zeros((m_e, m_e)), np.zeros((m_e, len(act)))],
            [g_act, np.zeros((len(act), m_e)), np.zeros((len(act), len(act)))],
        ])
        rhs = np.concatenate([-q_vec, b_vec, h_vec[act]])
        try:
            sol = np.linalg.solve(k, rhs)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(sol)):
            continue
        # near-singular systems return junk without raising
        if np.linalg.norm(k @ sol - rhs) > 1e-8 * (1.0 + np.linalg.norm(rhs)):
            continue
        z = sol[:n]
        nu = sol[n + m_e:]
        if nu.size and nu.min() < -1e-9:
            continue
        rest = [i for i in range(m_i) if i not in act]
        if rest and (g_mat[rest] @ z - h_vec[rest]).min() < -1e-9:
            continue
        val = 0.5 * z @ q_mat @ z + q_vec @ z
        if best is None or val < best[0]:
            best = (val, z)
    assert best is not None, "oracle found no KKT point"
    return best[1]


def random_qp(seed, n=4, m_i=5):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    q_mat = m.T @ m + 0.5 * np.eye(n)
    q_vec = rng.normal(size=n)
    z_int = 0.5 * rng.normal(size=n)
    a_mat = rng.normal(size=(1, n))
    b_vec = a_mat @ z_int
    g_mat = rng.normal(size=(m_i, n))
    h_vec = g_mat @ z_int - rng.uniform(0.1, 1.0, size=m_i)
    return q_mat, q_vec, a_mat, b_vec, g_mat, h_vec


def test_qp_matches_active_set_oracle():
    for seed in range(20):
        q_mat, q_vec, a_mat, b_vec, g_mat, h_vec = random_qp(seed)
        want = qp_oracle(q_mat, q_vec, a_mat, b_vec, g_mat, h_vec)
        res = minimize(quadratic(q_mat, q_vec), np.zeros(4),
                       eq=affine_eq(a_mat, b_vec),
                       ineq=affine_ineq(g_mat, h_vec), tol=1e-9)
        assert res.status == "optimal", f"seed {seed}: {res.status}"
        assert np.max(np.abs(res.z - want)) < 1e-6, f"seed {seed}"


def test_qp_with_bounds_matches_oracle():
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        n = 3
        m = rng.normal(size=(n, n))
        q_mat = m.T @ m + 0.5 * np.eye(n)
        q_vec = rng.normal(size=n)
        z_int = 0.3 * rng.normal(size=n)
        a_mat = rng.normal(size=(1, n))
        b_vec = a_mat @ z_int
        lb = z_int - rng.uniform(0.2, 1.0, size=n)
        ub = z_int + rng.uniform(0.2, 1.0, size=n)
        g_all = np.vstack([np.eye(n), -np.eye(n)])
        h_all = np.concatenate([lb, -ub])
        want = qp_oracle(q_mat, q_vec, a_mat, b_vec, g_all, h_all)
        res = minimize(quadratic(q_mat, q_vec), z_int.copy(),
                       eq=affine_eq(a_mat, b_vec), lb=lb, ub=ub, tol=1e-9)
        assert res.status == "optimal", f"seed {seed}: {res.status}"
        assert np.max(np.abs(res.z - want)) < 1e-6, f"seed {seed}"


def test_equality_multiplier_convention():
    # min x^2 + y^2 subject to x + y = 1; grad f = y_eq * grad c at the
    # optimum (0.5, 0.5) gives y_eq = 1.
    res = minimize(quadratic(2.0 * np.eye(2), np.zeros(2)), np.zeros(2),
                   eq=affine_eq(np.array([[1.0, 1.0]]), np.array([1.0])),
                   tol=1e-10)
    assert res.status == "optimal"
    np.testing.assert_allclose(res.z, [0.5, 0.5], atol=1e-8)
    np.testing.assert_allclose(res.y_eq, [1.0], atol=1e-6)


def test_active_inequality_multiplier():
    # min (x+1)^2 subject to x >= 0 -> x* = 0 with multiplier 2.
    def fun(z):
        return (z[0] + 1.0) ** 2, np.array([2.0 * (z[0] + 1.0)])

    def ineq(z):
        return np.array([z[0]]), np.array([[1.0]])

    res = minimize(fun, np.array([2.0]), ineq=ineq, tol=1e-9)
    assert res.status == "optimal"
    assert abs(res.z[0]) < 1e-6
    assert abs(res.y_ineq[0] - 2.0) < 1e-5


def test_rosenbrock_unconstrained():
    def fun(z):
        x, y = z
        val = (1.0 - x) ** 2 + 100.0 * (y - x * x) ** 2
        grad = np.array([-2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                         200.0 * (y - x * x)])
        return val, grad

    res = minimize(fun, np.array([-1.2, 1.0]), tol=1e-8, max_iter=500)
    assert res.status == "optimal"
    np.testing.assert_allclose(res.z, [1.0, 1.0], atol=1e-5)


def test_four_variable_benchmark():
    # min x1 x4 (x1 + x2 + x3) + x3 with sum of squares fixed at 40, the
    # product at least 25, and all variables in [1, 5].
    def fun(z):
        x1, x2, x3, x4 = z
        val = x1 * x4 * (x1 + x2 + x3) + x3
        grad = np.array([x4 * (2.0 * x1 + x2 + x3), x1 * x4,
                         x1 * x4 + 1.0, x1 * (x1 + x2 + x3)])
        return val, grad

    def eq(z):
        return np.array([z @ z - 40.0]), 2.0 * z[None, :]

    def ineq(z):
        x1, x2, x3, x4 = z
        jac = np.array([[x2 * x3 * x4, x1 * x3 * x4, x1 * x2 * x4,
                         x1 * x2 * x3]])
        return np.array([x1 * x2 * x3 * x4 - 25.0]), jac

    res = minimize(fun, np.array([1.0, 5.0, 5.0, 1.0]), eq=eq, ineq=ineq,
                   lb=np.ones(4), ub=5.0 * np.ones(4), tol=1e-8,
                   max_iter=300)
    assert res.status == "optimal"
    want = np.array([1.0, 4.742999, 3.821150, 1.379408])
    np.testing.assert_allclose(res.z, want, atol=1e-3)
    assert abs(res.f - 17.0140173) < 1e-4


def test_unbounded_objective_hits_iteration_cap():
    def fun(z):
        with np.errstate(over="ignore"):
            return -float(z @ z), -2.0 * z

    res = minimize(fun, np.array([1.0, -1.0]), tol=1e-8, max_iter=40)
    assert res.status == "max_iter"
    assert np.all(np.isfinite(res.z))


def test_inconsistent_equalities_reported_infeasible():
    def eq(z):
        return np.array([z[0] - 1.0, z[0] + 1.0]), np.array([[1.0], [1.0]])

    res = minimize(quadratic(np.eye(1), np.zeros(1)), np.array([3.0]),
                   eq=eq, tol=1e-8, max_iter=100)
    assert res.status == "infeasible"


def test_bounds_strictly_respected_at_every_evaluation():
    seen = []

    def fun(z):
        seen.append(z.copy())
        return float(np.sum((z - 2.0) ** 2)), 2.0 * (z - 2.0)

    lb = np.zeros(2)
    ub = np.ones(2)
    res = minimize(fun, np.array([0.5, 0.2]), lb=lb, ub=ub, tol=1e-9)
    assert res.status == "optimal"
    np.testing.assert_allclose(res.z, [1.0, 1.0], atol=1e-6)
    pts = np.array(seen)
    assert pts.min() > 0.0
    assert pts.max() < 1.0


def test_kkt_error_recomputes_at_solution():
    q_mat, q_vec, a_mat, b_vec, g_mat, h_vec = random_qp(7)
    fun = quadratic(q_mat, q_vec)
    eq = affine_eq(a_mat, b_vec)
    ineq = affine_ineq(g_mat, h_vec)
    res = minimize(fun, np.zeros(4), eq=eq, ineq=ineq, tol=1e-9)
    assert res.status == "optimal"
    err = kkt_error(fun, res.z, y_eq=res.y_eq, y_ineq=res.y_ineq,
                    z_lb=res.z_lb, z_ub=res.z_ub, eq=eq, ineq=ineq)
    assert err <= 1e-9
    assert abs(err - res.kkt) < 1e-12


def test_deterministic_iterates():
    q_mat, q_vec, a_mat, b_vec, g_mat, h_vec = random_qp(3)
    runs = []
    for _ in range(2):
        res = minimize(quadratic(q_mat, q_vec), np.zeros(4),
                       eq=affine_eq(a_mat, b_vec),
                       ineq=affine_ineq(g_mat, h_vec), tol=1e-9)
        runs.append(res)
    assert runs[0].iterations == runs[1].iterations
    assert np.array_equal(runs[0].z, runs[1].z)
    assert np.array_equal(runs[0].y_eq, runs[1].y_eq)
