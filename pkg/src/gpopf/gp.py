"""Exact Gaussian process regression with a squared-exponential ARD kernel.

One model per scalar output.  The prior mean is zero: whatever structure the
surrogate does not explain is what these models are asked to learn, and far
from the training data the prediction falls back to that prior rather than
extrapolating.

Hyperparameters live in log space as ``theta = [log ell_1..log ell_d,
log sf2, log sn2]`` and are fitted by maximising the log marginal likelihood
with L-BFGS-B from a handful of seeded restarts.  Inputs are standardised
internally; lengthscales are expressed in standardised coordinates and all
derivative helpers convert back to raw units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

JITTER_INIT = 1e-10
JITTER_MAX = 1e-6
NOISE_FLOOR = 1e-12
RESTARTS = 5

LOG_2PI = float(np.log(2.0 * np.pi))

# optimisation box in log space; the length-scale floor (inputs are
# standardised) keeps small-sample fits from memorising the data, which
# would make downstream use of the predictive surface needlessly rough
_ELL_BOUNDS = (np.log(0.15), np.log(1e3))
_SF2_BOUNDS = (np.log(1e-10), np.log(1e4))
_SN2_BOUNDS = (np.log(NOISE_FLOOR), np.log(1e2))


class GpError(RuntimeError):
    pass


def se_kernel(x1, x2, log_ell, log_sf2):
    """Squared-exponential kernel matrix between two point sets.

    ``k(x, x') = sf2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / ell_d^2)`` with one
    lengthscale per input dimension.
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    ell = np.exp(np.asarray(log_ell, dtype=float))
    d = x1[:, None, :] - x2[None, :, :]
    r2 = np.sum((d / ell) ** 2, axis=2)
    return np.exp(log_sf2) * np.exp(-0.5 * r2)


def chol_with_jitter(k):
    """Lower Cholesky factor of ``k``, escalating diagonal jitter on failure.

    Returns ``(L, jitter)``.  Jitter starts at ``JITTER_INIT`` and grows by
    factors of ten up to ``JITTER_MAX``; past that the matrix is treated as
    genuinely indefinite.
    """
    n = k.shape[0]
    jitter = JITTER_INIT
    while True:
        try:
            l = cholesky(k + jitter * np.eye(n), lower=True)
            return l, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise GpError(
                    "kernel matrix not positive definite at jitter %.0e" % JITTER_MAX
                )


def _unpack(theta, d):
    return theta[:d], theta[d], theta[d + 1]


def lml_and_grad(theta, xs, y):
    """Log marginal likelihood and its gradient in log space.

    ``lml = -0.5 y' K^-1 y - sum log L_ii - 0.5 N log 2pi`` evaluated through
    the Cholesky factor of ``K = K_se + sn2 I``.  The gradient uses
    ``d lml / d theta_j = 0.5 tr((aa' - K^-1) dK/dtheta_j)`` with
    ``a = K^-1 y``.
    """
    n, d = xs.shape
    log_ell, log_sf2, log_sn2 = _unpack(theta, d)
    k_se = se_kernel(xs, xs, log_ell, log_sf2)
    k = k_se + np.exp(log_sn2) * np.eye(n)
    l, _ = chol_with_jitter(k)
    alpha = cho_solve((l, True), y)
    lml = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(l)))) - 0.5 * n * LOG_2PI

    kinv = cho_solve((l, True), np.eye(n))
    w = np.outer(alpha, alpha) - kinv
    ell = np.exp(log_ell)
    grad = np.empty(d + 2)
    for j in range(d):
        dist2 = ((xs[:, j, None] - xs[None, :, j]) / ell[j]) ** 2
        grad[j] = 0.5 * np.sum(w * (k_se * dist2))
    grad[d] = 0.5 * np.sum(w * k_se)
    grad[d + 1] = 0.5 * np.exp(log_sn2) * np.trace(w)
    return lml, grad


@dataclass(frozen=True)
class ExactGp:
    """Fitted exact GP: standardisation constants, hyperparameters, factors."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    log_ell: np.ndarray
    log_sf2: float
    log_sn2: float
    xs: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    lml: float

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def n_x(self) -> int:
        return self.xs.shape[1]

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_scale


def standardize_inputs(x):
    """Per-column mean/scale for input standardisation; constant columns get
    scale one so they pass through unchanged."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return mean, scale


def _initial_thetas(xs, y, d, seed):
    rng = np.random.default_rng(seed)
    var_y = max(float(np.var(y)), 1e-8)
    base = np.concatenate(
        [np.zeros(d), [np.log(var_y)], [np.log(var_y * 0.1)]]
    )
    thetas = [base]
    for _ in range(RESTARTS - 1):
        jolt = np.concatenate(
            [rng.uniform(-1.5, 1.5, size=d), rng.uniform(-1.0, 1.0, size=2)]
        )
        thetas.append(base + jolt)
    return thetas


def train_gp(x, y, seed: int = 0) -> ExactGp:
    """Fit hyperparameters by maximum marginal likelihood with restarts.

    The first start is a unit-lengthscale heuristic scaled to the target
    variance; the remaining ``RESTARTS - 1`` are seeded perturbations of it.
    The best optimiser result wins.  Raises ``GpError`` when every restart
    fails, which in practice means the inputs contain non-finite values.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise GpError("x must be (n, d) with one target per row")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise GpError("training data contains non-finite values")
    n, d = x.shape
    x_mean, x_scale = standardize_inputs(x)
    xs = (x - x_mean) / x_scale

    def objective(theta):
        try:
            lml, grad = lml_and_grad(theta, xs, y)
        except GpError:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(theta)
        return -lml, -grad

    bounds = [_ELL_BOUNDS] * d + [_SF2_BOUNDS, _SN2_BOUNDS]
    best = None
    for theta0 in _initial_thetas(xs, y, d, seed):
        theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= 1e24:
        raise GpError("hyperparameter optimisation failed on every restart")

    log_ell, log_sf2, log_sn2 = _unpack(best.x, d)
    k = se_kernel(xs, xs, log_ell, log_sf2) + np.exp(log_sn2) * np.eye(n)
    l, _ = chol_with_jitter(k)
    alpha = cho_solve((l, True), y)
    lml = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(l)))) - 0.5 * n * LOG_2PI
    return ExactGp(
        x_mean=x_mean,
        x_scale=x_scale,
        log_ell=np.asarray(log_ell, dtype=float).copy(),
        log_sf2=float(log_sf2),
        log_sn2=float(log_sn2),
        xs=xs,
        y=y,
        chol=l,
        alpha=alpha,
        lml=lml,
    )


def predict_gp(gp: ExactGp, x, include_noise: bool = True):
    """Posterior mean and variance at query points, shape ``(m,)`` each.

    Variance is the latent predictive variance clipped at zero, plus the
    fitted noise variance when ``include_noise`` is set: predictions are
    compared against realised outputs, so the nugget belongs in the budget.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    qs = (x - gp.x_mean) / gp.x_scale
    ks = se_kernel(qs, gp.xs, gp.log_ell, gp.log_sf2)
    mean = ks @ gp.alpha
    v = solve_triangular(gp.chol, ks.T, lower=True)
    var = np.exp(gp.log_sf2) - np.sum(v**2, axis=0)
    var = np.maximum(var, 0.0)
    if include_noise:
        var = var + np.exp(gp.log_sn2)
    return mean, var


def gp_mean_grad(gp: ExactGp, x):
    """Gradient of the posterior mean at one raw-space point, shape (d,)."""
    x = np.asarray(x, dtype=float).ravel()
    qs = (x - gp.x_mean) / gp.x_scale
    ks = se_kernel(qs[None, :], gp.xs, gp.log_ell, gp.log_sf2).ravel()
    ell2 = np.exp(2.0 * gp.log_ell)
    diff = (gp.xs - qs) / ell2
    grad_s = (gp.alpha * ks) @ diff
    return grad_s / gp.x_scale


def gp_mean_hess(gp: ExactGp, x):
    """Hessian of the posterior mean at one raw-space point, shape (d, d)."""
    x = np.asarray(x, dtype=float).ravel()
    qs = (x - gp.x_mean) / gp.x_scale
    ks = se_kernel(qs[None, :], gp.xs, gp.log_ell, gp.log_sf2).ravel()
    ell2 = np.exp(2.0 * gp.log_ell)
    diff = (gp.xs - qs) / ell2
    w = gp.alpha * ks
    hess_s = np.einsum("i,ij,ik->jk", w, diff, diff) - np.diag(w.sum() / ell2)
    return hess_s / np.outer(gp.x_scale, gp.x_scale)


def gp_var_grad(gp: ExactGp, x):
    """Gradient of the predictive variance at one raw-space point.

    The noise term is constant, so this is the gradient of the latent
    variance ``sf2 - k*' K^-1 k*``.
    """
    x = np.asarray(x, dtype=float).ravel()
    qs = (x - gp.x_mean) / gp.x_scale
    ks = se_kernel(qs[None, :], gp.xs, gp.log_ell, gp.log_sf2).ravel()
    ell2 = np.exp(2.0 * gp.log_ell)
    dks = ks[:, None] * (gp.xs - qs) / ell2
    kinv_ks = cho_solve((gp.chol, True), ks)
    grad_s = -2.0 * (dks.T @ kinv_ks)
    return grad_s / gp.x_scale
