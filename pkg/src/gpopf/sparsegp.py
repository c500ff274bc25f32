"""Sparse variational GP with inducing points.

Approximates an exact GP with M pseudo-inputs Z, cutting training cost from
O(N^3) to dense-data O(N^2 M) here (the full collapsed bound is evaluated
exactly, which is fine at the data sizes this package targets) and prediction
to O(M^2) per point.  Hyperparameters maximise the collapsed variational
lower bound

    F = log N(y | 0, Q_nn + sn2 I) - tr(K_nn - Q_nn) / (2 sn2),

with Q_nn = K_nm K_mm^-1 K_mn, which never exceeds the exact log marginal
likelihood at the same hyperparameters.  The inducing posterior is

    mu_m = sn2^-1 K_mm G K_mn y,   A_m = K_mm G K_mm,
    G = (K_mm + sn2^-1 K_mn K_nm)^-1,

and predictions use the canonical form mean = k*' K_mm^-1 mu_m and
var = k** - k*' (K_mm^-1 - G) k*.  Inducing locations stay where the
selection strategy put them; only hyperparameters are optimised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .gp import (
    _ELL_BOUNDS,
    _SF2_BOUNDS,
    _SN2_BOUNDS,
    LOG_2PI,
    ExactGp,
    GpError,
    _initial_thetas,
    _unpack,
    chol_with_jitter,
    se_kernel,
    standardize_inputs,
)


def select_inducing(x, m: int, strategy: str = "kmeans", seed: int = 0):
    """Pick M inducing locations from N training inputs.

    ``kmeans`` clusters standardised inputs and returns the centroids mapped
    back to raw coordinates, ``random`` draws rows without replacement, and
    ``greedy-variance`` adds whichever point currently has the largest
    residual prior variance given the points already chosen (unit
    lengthscale in standardised coordinates; ties break to the lowest
    index).  All strategies are deterministic given the seed.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not 1 <= m <= n:
        raise GpError("need 1 <= m <= n inducing points, got m=%d, n=%d" % (m, n))
    rng = np.random.default_rng(seed)
    if strategy == "random":
        return x[rng.choice(n, size=m, replace=False)].copy()
    mean, scale = standardize_inputs(x)
    xs = (x - mean) / scale
    if strategy == "kmeans":
        if m == n:
            return x.copy()
        centroids, _ = kmeans2(xs, m, minit="++", seed=rng)
        return centroids * scale + mean
    if strategy == "greedy-variance":
        chosen = []
        # diag of the residual kernel after conditioning on the chosen set
        resid = np.ones(n)
        cross = np.zeros((m, n))
        for j in range(m):
            idx = int(np.argmax(resid))
            chosen.append(idx)
            k_new = se_kernel(xs[idx][None, :], xs, np.zeros(x.shape[1]), 0.0).ravel()
            if j > 0:
                c = cross[:j, idx]
                piv = np.sqrt(max(1.0 - c @ c, 1e-12))
                cross[j] = (k_new - c @ cross[:j]) / piv
            else:
                cross[0] = k_new
            resid = resid - cross[j] ** 2
            resid[chosen] = -np.inf
        return x[np.array(chosen)].copy()
    raise GpError("unknown inducing strategy %r" % strategy)


def elbo_and_grad(theta, xs, y, zs):
    """Collapsed variational bound and gradient in log space.

    Forms the dense model covariance ``Q + sn2 I`` directly, so cost is
    O(N^2 M) per call; the per-parameter traces reuse two precomputed
    M-sized projections of the dense weight matrix.
    """
    n, d = xs.shape
    log_ell, log_sf2, log_sn2 = _unpack(theta, d)
    sf2 = np.exp(log_sf2)
    sn2 = np.exp(log_sn2)
    k_mm = se_kernel(zs, zs, log_ell, log_sf2)
    k_mn = se_kernel(zs, xs, log_ell, log_sf2)
    l, _ = chol_with_jitter(k_mm)
    m_proj = cho_solve((l, True), k_mn)
    q = k_mn.T @ m_proj
    sigma = q + sn2 * np.eye(n)
    l_sig = cholesky(sigma, lower=True)
    beta = cho_solve((l_sig, True), y)
    tr_q = float(np.trace(q))
    log_n = (
        -0.5 * float(y @ beta)
        - float(np.sum(np.log(np.diag(l_sig))))
        - 0.5 * n * LOG_2PI
    )
    elbo = log_n - (n * sf2 - tr_q) / (2.0 * sn2)

    w = np.outer(beta, beta) - cho_solve((l_sig, True), np.eye(n))
    # tr(W dQ) and tr(dQ) reduce to elementwise sums against these
    g_mn = m_proj @ w + m_proj / sn2
    g_mm = g_mn @ m_proj.T
    ell = np.exp(log_ell)
    grad = np.empty(d + 2)
    for j in range(d):
        d_mn = k_mn * ((zs[:, j, None] - xs[None, :, j]) / ell[j]) ** 2
        d_mm = k_mm * ((zs[:, j, None] - zs[None, :, j]) / ell[j]) ** 2
        grad[j] = np.sum(d_mn * g_mn) - 0.5 * np.sum(d_mm * g_mm)
    grad[d] = np.sum(k_mn * g_mn) - 0.5 * np.sum(k_mm * g_mm) - n * sf2 / (2.0 * sn2)
    grad[d + 1] = 0.5 * sn2 * np.trace(w) + (n * sf2 - tr_q) / (2.0 * sn2)
    return elbo, grad


@dataclass(frozen=True)
class SparseGp:
    """Fitted sparse GP with cached factors for O(M^2) prediction."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    log_ell: np.ndarray
    log_sf2: float
    log_sn2: float
    zs: np.ndarray
    chol_kmm: np.ndarray
    chol_b: np.ndarray
    v: np.ndarray
    mu_m: np.ndarray
    a_m: np.ndarray
    elbo: float
    n_train: int

    @property
    def m(self) -> int:
        return self.zs.shape[0]

    @property
    def n_x(self) -> int:
        return self.zs.shape[1]


def _assemble(xs, y, zs, log_ell, log_sf2, log_sn2, x_mean, x_scale, elbo):
    sn = np.sqrt(np.exp(log_sn2))
    k_mm = se_kernel(zs, zs, log_ell, log_sf2)
    k_mn = se_kernel(zs, xs, log_ell, log_sf2)
    l, _ = chol_with_jitter(k_mm)
    a2 = solve_triangular(l, k_mn, lower=True) / sn
    b = np.eye(zs.shape[0]) + a2 @ a2.T
    l_b = cholesky(b, lower=True)
    c = solve_triangular(l_b, a2 @ y, lower=True) / sn
    v = solve_triangular(
        l.T, solve_triangular(l_b.T, c, lower=False), lower=False
    )
    mu_m = k_mm @ v
    l_inv = solve_triangular(l, np.eye(zs.shape[0]), lower=True)
    gamma = l_inv.T @ cho_solve((l_b, True), l_inv)
    a_m = k_mm @ gamma @ k_mm
    a_m = 0.5 * (a_m + a_m.T)
    return SparseGp(
        x_mean=x_mean,
        x_scale=x_scale,
        log_ell=np.asarray(log_ell, dtype=float).copy(),
        log_sf2=float(log_sf2),
        log_sn2=float(log_sn2),
        zs=zs,
        chol_kmm=l,
        chol_b=l_b,
        v=v,
        mu_m=mu_m,
        a_m=a_m,
        elbo=float(elbo),
        n_train=xs.shape[0],
    )


def train_sparse_gp(x, y, z=None, m: int = 10, strategy: str = "kmeans",
                    seed: int = 0) -> SparseGp:
    """Select inducing points (unless given) and fit hyperparameters by
    maximising the variational bound, with the same restart scheme as the
    exact model."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise GpError("x must be (n, d) with one target per row")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise GpError("training data contains non-finite values")
    if z is None:
        z = select_inducing(x, m, strategy=strategy, seed=seed)
    z = np.asarray(z, dtype=float)
    if z.shape[0] > x.shape[0]:
        raise GpError("more inducing points than training rows")
    n, d = x.shape
    x_mean, x_scale = standardize_inputs(x)
    xs = (x - x_mean) / x_scale
    zs = (z - x_mean) / x_scale

    def objective(theta):
        try:
            elbo, grad = elbo_and_grad(theta, xs, y, zs)
        except (GpError, np.linalg.LinAlgError):
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(elbo):
            return 1e25, np.zeros_like(theta)
        return -elbo, -grad

    bounds = [_ELL_BOUNDS] * d + [_SF2_BOUNDS, _SN2_BOUNDS]
    best = None
    for theta0 in _initial_thetas(xs, y, d, seed):
        theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= 1e24:
        raise GpError("bound optimisation failed on every restart")
    log_ell, log_sf2, log_sn2 = _unpack(best.x, d)
    return _assemble(xs, y, zs, log_ell, log_sf2, log_sn2, x_mean, x_scale,
                     -best.fun)


def sparse_from_hyper(x, y, z, log_ell, log_sf2, log_sn2) -> SparseGp:
    """Assemble a sparse model at fixed hyperparameters (no optimisation)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float)
    x_mean, x_scale = standardize_inputs(x)
    xs = (x - x_mean) / x_scale
    zs = (z - x_mean) / x_scale
    log_ell = np.asarray(log_ell, dtype=float)
    theta = np.concatenate([log_ell, [log_sf2, log_sn2]])
    elbo, _ = elbo_and_grad(theta, xs, y, zs)
    return _assemble(xs, y, zs, log_ell, log_sf2, log_sn2, x_mean, x_scale, elbo)


def predict_sparse(model: SparseGp, x, include_noise: bool = True):
    """Posterior mean and variance at query points, shape ``(q,)`` each."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    qs = (x - model.x_mean) / model.x_scale
    ks = se_kernel(qs, model.zs, model.log_ell, model.log_sf2)
    mean = ks @ model.v
    a = solve_triangular(model.chol_kmm, ks.T, lower=True)
    ab = solve_triangular(model.chol_b, a, lower=True)
    var = np.exp(model.log_sf2) - np.sum(a**2, axis=0) + np.sum(ab**2, axis=0)
    var = np.maximum(var, 0.0)
    if include_noise:
        var = var + np.exp(model.log_sn2)
    return mean, var


def sparse_mean_grad(model: SparseGp, x):
    """Gradient of the posterior mean at one raw-space point, shape (d,)."""
    x = np.asarray(x, dtype=float).ravel()
    qs = (x - model.x_mean) / model.x_scale
    ks = se_kernel(qs[None, :], model.zs, model.log_ell, model.log_sf2).ravel()
    ell2 = np.exp(2.0 * model.log_ell)
    diff = (model.zs - qs) / ell2
    grad_s = (model.v * ks) @ diff
    return grad_s / model.x_scale


def sparse_mean_hess(model: SparseGp, x):
    """Hessian of the posterior mean at one raw-space point, shape (d, d)."""
    x = np.asarray(x, dtype=float).ravel()
    qs = (x - model.x_mean) / model.x_scale
    ks = se_kernel(qs[None, :], model.zs, model.log_ell, model.log_sf2).ravel()
    ell2 = np.exp(2.0 * model.log_ell)
    diff = (model.zs - qs) / ell2
    w = model.v * ks
    hess_s = np.einsum("i,ij,ik->jk", w, diff, diff) - np.diag(w.sum() / ell2)
    return hess_s / np.outer(model.x_scale, model.x_scale)


def sparse_var_grad(model: SparseGp, x):
    """Gradient of the predictive variance at one raw-space point."""
    x = np.asarray(x, dtype=float).ravel()
    qs = (x - model.x_mean) / model.x_scale
    ks = se_kernel(qs[None, :], model.zs, model.log_ell, model.log_sf2).ravel()
    ell2 = np.exp(2.0 * model.log_ell)
    dks = ks[:, None] * (model.zs - qs) / ell2
    a = solve_triangular(model.chol_kmm, ks, lower=True)
    ab = cho_solve((model.chol_b, True), a)
    c_ks = solve_triangular(model.chol_kmm.T, a - ab, lower=False)
    grad_s = -2.0 * (dks.T @ c_ks)
    return grad_s / model.x_scale


def exact_from_sparse_hyper(x, y, model: SparseGp) -> ExactGp:
    """Exact GP sharing the sparse model's hyperparameters, for bound checks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    xs = (x - model.x_mean) / model.x_scale
    n = xs.shape[0]
    k = se_kernel(xs, xs, model.log_ell, model.log_sf2)
    k = k + np.exp(model.log_sn2) * np.eye(n)
    l, _ = chol_with_jitter(k)
    alpha = cho_solve((l, True), y)
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(l))))
        - 0.5 * n * LOG_2PI
    )
    return ExactGp(
        x_mean=model.x_mean,
        x_scale=model.x_scale,
        log_ell=model.log_ell.copy(),
        log_sf2=model.log_sf2,
        log_sn2=model.log_sn2,
        xs=xs,
        y=y,
        chol=l,
        alpha=alpha,
        lml=lml,
    )
