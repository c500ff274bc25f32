"""Linear surrogate of the AC power-flow map.

Voltage outputs are pinned at the DC assumption v = 1; reactive and flow
outputs get an affine map fitted by (ridge-stabilized) least squares.  The
surrogate supplies the mean of the hybrid model and the linear part of the
output variance; the GP learns what it misses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

V_DC = 1.0
RIDGE = 1e-8


@dataclass(frozen=True)
class LinearSurrogate:
    """Affine map y ~ A x + b with the first ``n_v`` rows frozen at v = 1."""

    A: np.ndarray
    b: np.ndarray
    n_v: int

    @property
    def n_x(self) -> int:
        return self.A.shape[1]

    @property
    def n_y(self) -> int:
        return self.A.shape[0]


def fit_linear(X: np.ndarray, Y: np.ndarray, n_v: int) -> LinearSurrogate:
    """Fit the surrogate on a dataset (rows of X paired with rows of Y).

    Centered least squares with a tiny ridge keeps degenerate designs (N <=
    n_x, duplicated or constant columns) well defined: constant columns get an
    exactly zero coefficient, a single row yields A = 0, b = y.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: X has {X.shape[0]}, Y has {Y.shape[0]}")
    if not (0 <= n_v <= Y.shape[1]):
        raise ValueError(f"n_v = {n_v} outside [0, {Y.shape[1]}]")
    n, n_x = X.shape
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    if np.any(Xc.std(axis=0) == 0) and n > 1:
        dead = np.flatnonzero(Xc.std(axis=0) == 0)
        warnings.warn(f"zero-variance input column(s) {dead.tolist()}; "
                      "their coefficients are fixed at zero", stacklevel=2)
    # normal equations with ridge; v-block rows are overwritten below
    H = Xc.T @ Xc + RIDGE * np.eye(n_x)
    coeffs = np.linalg.solve(H, Xc.T @ (Y - y_mean))
    A = coeffs.T
    b = y_mean - A @ x_mean
    A[:n_v, :] = 0.0
    b[:n_v] = V_DC
    return LinearSurrogate(A=A, b=b, n_v=n_v)


def predict_linear(model: LinearSurrogate, x: np.ndarray) -> np.ndarray:
    """Evaluate the surrogate at one input (1-D) or a batch (2-D, row-wise)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return model.A @ x + model.b
    return x @ model.A.T + model.b


def propagate_linear_cov(model: LinearSurrogate, sigma_x: np.ndarray) -> np.ndarray:
    """Per-output variance diag(A Sigma_x A^T); voltage rows are exactly zero."""
    sigma_x = np.asarray(sigma_x, dtype=float)
    if sigma_x.shape != (model.n_x, model.n_x):
        raise ValueError(f"covariance shape {sigma_x.shape} != ({model.n_x}, {model.n_x})")
    return np.einsum("ij,jk,ik->i", model.A, sigma_x, model.A)
