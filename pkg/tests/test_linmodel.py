import numpy as np
import pytest

from gpopf.linmodel import V_DC, fit_linear, predict_linear, propagate_linear_cov


def test_exact_recovery_of_affine_map():
    rng = np.random.default_rng(3)
    A_true = rng.standard_normal((4, 3))
    b_true = rng.standard_normal(4)
    X = rng.standard_normal((40, 3))
    Y = X @ A_true.T + b_true
    m = fit_linear(X, Y, n_v=0)
    assert np.max(np.abs(m.A - A_true)) < 1e-6
    assert np.max(np.abs(m.b - b_true)) < 1e-6


def test_voltage_rows_pinned():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 2))
    Y = rng.standard_normal((30, 3))
    m = fit_linear(X, Y, n_v=2)
    assert np.all(m.A[:2] == 0.0)
    assert np.all(m.b[:2] == V_DC)
    z = predict_linear(m, rng.standard_normal(2))
    assert z[0] == z[1] == V_DC


def test_single_row_degenerates_to_constant():
    x = np.array([[1.0, 2.0]])
    y = np.array([[3.0, -1.0]])
    m = fit_linear(x, y, n_v=0)
    assert np.max(np.abs(m.A)) < 1e-6
    assert m.b == pytest.approx([3.0, -1.0], abs=1e-8)


def test_constant_column_coefficient_zero():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((25, 3))
    X[:, 1] = 2.5
    Y = (X[:, [0]] - X[:, [2]]) * 2.0
    with pytest.warns(UserWarning, match="zero-variance"):
        m = fit_linear(X, Y, n_v=0)
    assert m.A[0, 1] == 0.0


def test_never_worse_than_zero_map():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((50, 4))
    Y = np.tanh(X @ rng.standard_normal((4, 5))) + 0.1 * rng.standard_normal((50, 5))
    m = fit_linear(X, Y, n_v=0)
    sse_fit = np.sum((Y - predict_linear(m, X)) ** 2)
    sse_zero = np.sum((Y - Y.mean(axis=0)) ** 2)
    assert sse_fit <= sse_zero + 1e-12


def test_propagate_cov_against_monte_carlo():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((3, 4))
    m = fit_linear(rng.standard_normal((20, 4)),
                   rng.standard_normal((20, 3)), n_v=1)
    m = type(m)(A=np.vstack([np.zeros((1, 4)), A[1:]]), b=m.b, n_v=1)
    C = rng.standard_normal((4, 4))
    sigma = C @ C.T + 0.5 * np.eye(4)
    var = propagate_linear_cov(m, sigma)
    draws = rng.multivariate_normal(np.zeros(4), sigma, size=1_000_000)
    mc = (draws @ m.A.T).var(axis=0)
    assert var[0] == 0.0
    assert var[1:] == pytest.approx(mc[1:], rel=0.01)


def test_propagate_cov_shape_check():
    m = fit_linear(np.eye(3), np.eye(3), n_v=0)
    with pytest.raises(ValueError, match="covariance shape"):
        propagate_linear_cov(m, np.eye(2))
