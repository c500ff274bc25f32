"""Gaussian input model under AGC recourse, TA1 propagation, margins.

Load and renewable fluctuations are independent Gaussians around the
forecast.  Automatic generation control spreads the net imbalance
``Omega = sum(dP_load) - sum(dP_res)`` over the generators through the
participation vector, which correlates every generator column of the model
input with every fluctuation column.  The resulting covariance is an exact
linear image of the fluctuation covariance:

    [dg; dd] = T dd,   T = [alpha_in s'; I],

with s = +1 on load entries and -1 on renewable entries, so a positive load
excursion raises generator output and surplus renewable infeed lowers it.
PSD holds by construction.

Output moments come from a first-order Taylor expansion at the input mean:
the affine surrogate propagates exactly, the GP contributes its posterior
variance at the mean plus a gradient quadratic form; the two parts are
treated as independent (no cross term).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import UncertaintySpec, sigma_d
from .grid import GridCase, IoSchema
from .models import HybridModel, model_mean_jacobian, predict_model


@dataclass(frozen=True)
class GaussianVector:
    """Mean and covariance of the model input, generator block first."""

    mean: np.ndarray
    cov: np.ndarray
    n_g: int

    def __post_init__(self):
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape does not match the mean")
        if not np.allclose(self.cov, self.cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(self.cov) < -1e-12):
            raise ValueError("covariance has a negative diagonal entry")


@dataclass(frozen=True)
class OutputMoments:
    mu_y: np.ndarray
    var_y: np.ndarray


@dataclass(frozen=True)
class Margins:
    lambda_y: np.ndarray
    lambda_pg: np.ndarray
    tau_y: float
    tau_pg: float


def check_simplex(alpha, atol: float = 1e-9):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < -1e-12) or abs(alpha.sum() - 1.0) > atol:
        raise ValueError(
            "participation factors must be nonnegative and sum to one"
        )
    return alpha


def fluctuation_signs(n_load: int, n_res: int) -> np.ndarray:
    """+1 for load entries, -1 for renewable entries of d."""
    return np.concatenate([np.ones(n_load), -np.ones(n_res)])


def build_input_cov(alpha, var_d, n_load: int, gen_idx=None) -> np.ndarray:
    """Covariance of [p_g restricted to input columns, d].

    ``alpha`` is the full participation vector (validated against the
    simplex), ``var_d`` the fluctuation variances with loads first, and
    ``gen_idx`` selects which generators appear as input columns (all by
    default).  Blocks: Sigma_g = a a' tr(Sigma_d); Sigma_gd has +a_i v_j on
    load columns and -a_i v_j on renewable columns; Sigma_d diagonal.
    """
    alpha = check_simplex(alpha)
    var_d = np.asarray(var_d, dtype=float)
    if np.any(var_d < 0.0):
        raise ValueError("variances must be nonnegative")
    if gen_idx is None:
        gen_idx = np.arange(alpha.size)
    s = fluctuation_signs(n_load, var_d.size - n_load)
    t = np.vstack([np.outer(alpha[gen_idx], s), np.eye(var_d.size)])
    return (t * var_d) @ t.T


def input_distribution(case: GridCase, schema: IoSchema, spec: UncertaintySpec,
                       p_g, alpha) -> GaussianVector:
    """Gaussian model input at dispatch ``p_g`` with participation ``alpha``."""
    p_g = np.asarray(p_g, dtype=float)
    pl_bar = np.array([case.buses[i].p_load for i in schema.load_bus_idx])
    pr_bar = np.array([case.buses[i].p_res for i in schema.res_bus_idx])
    mean = np.concatenate([p_g[list(schema.gen_input_idx)], pl_bar, pr_bar])
    std = sigma_d(case, schema, spec)
    cov = build_input_cov(alpha, std**2, len(schema.load_bus_idx),
                          gen_idx=list(schema.gen_input_idx))
    return GaussianVector(mean=mean, cov=cov, n_g=len(schema.gen_input_idx))


def ta1_propagate(model: HybridModel, dist: GaussianVector) -> OutputMoments:
    """First-order Taylor moments of the model outputs.

    mu_y is the hybrid prediction at the input mean.  var_y is the GP
    posterior variance at the mean plus the quadratic form of the full
    mean jacobian (surrogate and residual together) with the input
    covariance; propagating the two parts separately would drop their
    cross-covariance and leave the margins mis-sized.
    """
    mu, var_gp = predict_model(model, dist.mean)
    jac = model_mean_jacobian(model, dist.mean)
    grad_term = np.einsum("ij,jk,ik->i", jac, dist.cov, jac)
    var_y = var_gp[0] + np.maximum(grad_term, 0.0)
    return OutputMoments(mu_y=mu[0], var_y=var_y)


# rational approximation coefficients for the standard normal quantile
_QA = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
       1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_QB = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
       6.680131188771972e+01, -1.328068155288572e+01)
_QC = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
       -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_QD = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
       3.754408661907416e+00)
_Q_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, |Phi(tau) - p| <= 1e-9.

    Rational initial guess, then Newton refinement on the erfc-based CDF.
    The upper half delegates to the lower half (1 - p is exact there), so
    the function is odd by construction and keeps tail precision: the lower
    tail evaluates erfc at positive arguments where it is accurate in
    relative terms.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie strictly between 0 and 1")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    if p < _Q_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q
               + _QC[4]) * q + _QC[5])
             / ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((_QA[0] * r + _QA[1]) * r + _QA[2]) * r + _QA[3]) * r
               + _QA[4]) * r + _QA[5]) * q
             / (((((_QB[0] * r + _QB[1]) * r + _QB[2]) * r + _QB[3]) * r
                 + _QB[4]) * r + 1.0))
    for _ in range(2):
        err = normal_cdf(x) - p
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf <= 0.0:
            break
        x -= err / pdf
    return x


def compute_margins(var_y, alpha, var_d, eps_y: float, eps_pg: float) -> Margins:
    """Constraint tightenings: lambda_y = tau sqrt(var_y) per output and
    lambda_pg,k = tau alpha_k sqrt(tr Sigma_d) per generator."""
    for name, eps in (("eps_y", eps_y), ("eps_pg", eps_pg)):
        if not 0.0 < eps <= 0.5:
            raise ValueError("%s must lie in (0, 0.5], got %g" % (name, eps))
    var_y = np.asarray(var_y, dtype=float)
    if np.any(var_y < 0.0):
        raise ValueError("output variances must be nonnegative")
    alpha = np.asarray(alpha, dtype=float)
    tau_y = normal_quantile(1.0 - eps_y)
    tau_pg = normal_quantile(1.0 - eps_pg)
    omega_std = math.sqrt(float(np.sum(var_d)))
    return Margins(
        lambda_y=tau_y * np.sqrt(var_y),
        lambda_pg=tau_pg * alpha * omega_std,
        tau_y=tau_y,
        tau_pg=tau_pg,
    )


def empirical_margins(mc_outputs, y_center, eps: float):
    """Order-statistic margins from Monte-Carlo outputs.

    Returns (lambda_upper, lambda_lower) per column: the distance from the
    center to the empirical 1-eps and eps quantiles.
    """
    mc_outputs = np.atleast_2d(np.asarray(mc_outputs, dtype=float))
    if mc_outputs.shape[0] < 100:
        raise ValueError("need at least 100 samples for empirical margins")
    y_center = np.asarray(y_center, dtype=float)
    upper = np.quantile(mc_outputs, 1.0 - eps, axis=0)
    lower = np.quantile(mc_outputs, eps, axis=0)
    return upper - y_center, y_center - lower
