"""Hybrid output model: linear surrogate plus one GP per output column.

In ``hybrid`` mode the GPs learn the residual the surrogate leaves behind,
so far from the training data the prediction falls back to fitted physics.
In ``full`` mode there is no surrogate and the GPs carry the outputs alone
from a zero prior.  Either flavour can use exact or sparse regressors.

The JSON container stores the training inputs once, the surrogate, and per
output either ``{hyperparams, w}`` (exact) or ``{hyperparams, mu_m, a_m}``
plus the shared inducing set (sparse).  Floats serialize via ``repr`` so a
round trip restores them bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .dataset import Dataset
from .gp import (
    ExactGp,
    GpError,
    chol_with_jitter,
    gp_mean_grad,
    gp_mean_hess,
    gp_var_grad,
    predict_gp,
    se_kernel,
    train_gp,
)
from .linmodel import LinearSurrogate, fit_linear, predict_linear
from .sparsegp import (
    SparseGp,
    predict_sparse,
    select_inducing,
    sparse_mean_grad,
    sparse_mean_hess,
    sparse_var_grad,
    train_sparse_gp,
)

FORMAT = "gpopf-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class HybridModel:
    case_id: str
    input_names: tuple
    output_names: tuple
    mode: str
    surrogate: LinearSurrogate | None
    gps: tuple
    meta: dict

    @property
    def n_x(self) -> int:
        return len(self.input_names)

    @property
    def n_y(self) -> int:
        return len(self.output_names)

    @property
    def is_sparse(self) -> bool:
        return isinstance(self.gps[0], SparseGp)


def train_model(ds: Dataset, mode: str = "hybrid", sparse_m=None,
                strategy: str = "kmeans", seed: int = 0) -> HybridModel:
    """Fit the requested flavour on a dataset.

    ``hybrid`` fits the surrogate first and hands its residual columns to
    the GPs; ``full`` gives the GPs the raw outputs.  ``sparse_m`` switches
    every output to the inducing-point regressor with a shared Z.
    """
    if mode not in ("hybrid", "full"):
        raise ValueError("mode must be 'hybrid' or 'full', got %r" % mode)
    if sparse_m is not None and sparse_m > ds.n:
        raise GpError(
            "sparse_m=%d exceeds the %d training rows" % (sparse_m, ds.n)
        )
    if mode == "hybrid":
        surrogate = fit_linear(ds.X, ds.Y, ds.n_v)
        targets = ds.Y - predict_linear(surrogate, ds.X)
    else:
        surrogate = None
        targets = ds.Y

    gps = []
    z = None
    if sparse_m is not None:
        z = select_inducing(ds.X, sparse_m, strategy=strategy, seed=seed)
    for a in range(targets.shape[1]):
        if sparse_m is None:
            gps.append(train_gp(ds.X, targets[:, a], seed=seed))
        else:
            gps.append(train_sparse_gp(ds.X, targets[:, a], z=z, seed=seed))
    meta = {
        "seed": seed,
        "n_train": ds.n,
        "case_id": ds.case_id,
        "spec": dict(ds.spec),
        "sparse_m": sparse_m,
        "strategy": strategy if sparse_m is not None else None,
    }
    return HybridModel(
        case_id=ds.case_id,
        input_names=tuple(ds.input_names),
        output_names=tuple(ds.output_names),
        mode=mode,
        surrogate=surrogate,
        gps=tuple(gps),
        meta=meta,
    )


def predict_model(model: HybridModel, x):
    """Mean and variance per output, shapes ``(q, n_y)`` each."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    q = x.shape[0]
    mean = np.zeros((q, model.n_y))
    var = np.zeros((q, model.n_y))
    for a, gp in enumerate(model.gps):
        if isinstance(gp, SparseGp):
            mean[:, a], var[:, a] = predict_sparse(gp, x)
        else:
            mean[:, a], var[:, a] = predict_gp(gp, x)
    if model.surrogate is not None:
        mean = mean + predict_linear(model.surrogate, x)
    return mean, var


def model_mean_jacobian(model: HybridModel, x):
    """Jacobian of the predictive mean at one point, shape (n_y, n_x)."""
    jac = np.zeros((model.n_y, model.n_x))
    for a, gp in enumerate(model.gps):
        if isinstance(gp, SparseGp):
            jac[a] = sparse_mean_grad(gp, x)
        else:
            jac[a] = gp_mean_grad(gp, x)
    if model.surrogate is not None:
        jac = jac + model.surrogate.A
    return jac


def model_mean_hessian(model: HybridModel, x, a: int):
    """Hessian of output ``a``'s predictive mean (surrogate part is affine)."""
    gp = model.gps[a]
    if isinstance(gp, SparseGp):
        return sparse_mean_hess(gp, x)
    return gp_mean_hess(gp, x)


def model_var_gradient(model: HybridModel, x):
    """Row-wise gradients of the predictive variance, shape (n_y, n_x)."""
    rows = np.zeros((model.n_y, model.n_x))
    for a, gp in enumerate(model.gps):
        if isinstance(gp, SparseGp):
            rows[a] = sparse_var_grad(gp, x)
        else:
            rows[a] = gp_var_grad(gp, x)
    return rows


def _hyper_dict(gp):
    return {
        "log_ell": gp.log_ell.tolist(),
        "log_sf2": gp.log_sf2,
        "log_sn2": gp.log_sn2,
    }


def save_model(model: HybridModel, path):
    """Write the JSON container; training inputs are stored once, raw."""
    first = model.gps[0]
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "case_id": model.case_id,
        "input_names": list(model.input_names),
        "output_names": list(model.output_names),
        "mode": model.mode,
        "meta": model.meta,
        "surrogate": None,
        "kind": "sparse" if model.is_sparse else "exact",
    }
    if model.surrogate is not None:
        doc["surrogate"] = {
            "A": model.surrogate.A.tolist(),
            "b": model.surrogate.b.tolist(),
            "n_v": model.surrogate.n_v,
        }
    doc["x_mean"] = first.x_mean.tolist()
    doc["x_scale"] = first.x_scale.tolist()
    if model.is_sparse:
        doc["inducing"] = (first.x_mean + first.x_scale * first.zs).tolist()
        doc["outputs"] = [
            dict(_hyper_dict(gp), mu_m=gp.mu_m.tolist(), a_m=gp.a_m.tolist(),
                 elbo=gp.elbo, n_train=gp.n_train,
                 # prediction caches; derivable from mu_m/a_m but kept exact
                 v=gp.v.tolist(), chol_b=gp.chol_b.tolist())
            for gp in model.gps
        ]
    else:
        doc["x"] = (first.x_mean + first.x_scale * first.xs).tolist()
        doc["outputs"] = [
            dict(_hyper_dict(gp), w=gp.alpha.tolist(), lml=gp.lml)
            for gp in model.gps
        ]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _exact_from_doc(x, x_mean, x_scale, out):
    x = np.asarray(x, dtype=float)
    x_mean = np.asarray(x_mean, dtype=float)
    x_scale = np.asarray(x_scale, dtype=float)
    xs = (x - x_mean) / x_scale
    log_ell = np.asarray(out["log_ell"], dtype=float)
    k = se_kernel(xs, xs, log_ell, out["log_sf2"])
    k = k + np.exp(out["log_sn2"]) * np.eye(xs.shape[0])
    l, _ = chol_with_jitter(k)
    alpha = np.asarray(out["w"], dtype=float)
    # targets are implied by the weights: r = (K + sn2 I) w
    y = k @ alpha
    return ExactGp(
        x_mean=x_mean, x_scale=x_scale, log_ell=log_ell,
        log_sf2=float(out["log_sf2"]), log_sn2=float(out["log_sn2"]),
        xs=xs, y=y, chol=l, alpha=alpha, lml=float(out["lml"]),
    )


def _sparse_from_doc(z_raw, x_mean, x_scale, out):
    x_mean = np.asarray(x_mean, dtype=float)
    x_scale = np.asarray(x_scale, dtype=float)
    zs = (np.asarray(z_raw, dtype=float) - x_mean) / x_scale
    log_ell = np.asarray(out["log_ell"], dtype=float)
    log_sf2 = float(out["log_sf2"])
    log_sn2 = float(out["log_sn2"])
    mu_m = np.asarray(out["mu_m"], dtype=float)
    a_m = np.asarray(out["a_m"], dtype=float)
    k_mm = se_kernel(zs, zs, log_ell, log_sf2)
    l, _ = chol_with_jitter(k_mm)
    if "v" in out:
        v = np.asarray(out["v"], dtype=float)
        l_b = np.asarray(out["chol_b"], dtype=float)
    else:
        v = cho_solve((l, True), mu_m)
        # B^-1 = L' Gamma L with Gamma = K_mm^-1 A_m K_mm^-1
        gamma = cho_solve((l, True), cho_solve((l, True), a_m).T)
        b_inv = l.T @ gamma @ l
        b = np.linalg.inv(0.5 * (b_inv + b_inv.T))
        l_b = cholesky(0.5 * (b + b.T), lower=True)
    return SparseGp(
        x_mean=x_mean, x_scale=x_scale, log_ell=log_ell,
        log_sf2=log_sf2, log_sn2=log_sn2, zs=zs,
        chol_kmm=l, chol_b=l_b, v=v, mu_m=mu_m, a_m=a_m,
        elbo=float(out["elbo"]), n_train=int(out["n_train"]),
    )


def load_model(path) -> HybridModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise ValueError("%s is not a model container" % path)
    surrogate = None
    if doc["surrogate"] is not None:
        s = doc["surrogate"]
        surrogate = LinearSurrogate(
            A=np.asarray(s["A"], dtype=float),
            b=np.asarray(s["b"], dtype=float),
            n_v=int(s["n_v"]),
        )
    if doc["kind"] == "sparse":
        gps = tuple(
            _sparse_from_doc(doc["inducing"], doc["x_mean"], doc["x_scale"], out)
            for out in doc["outputs"]
        )
    else:
        gps = tuple(
            _exact_from_doc(doc["x"], doc["x_mean"], doc["x_scale"], out)
            for out in doc["outputs"]
        )
    return HybridModel(
        case_id=doc["case_id"],
        input_names=tuple(doc["input_names"]),
        output_names=tuple(doc["output_names"]),
        mode=doc["mode"],
        surrogate=surrogate,
        gps=gps,
        meta=doc["meta"],
    )
