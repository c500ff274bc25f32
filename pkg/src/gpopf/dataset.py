"""Sampled operating points: input sampling, AC-PF labelling, corruption, CSV I/O.

Inputs follow the case schema: non-slack generator setpoints are drawn
uniformly inside their boxes (then shifted so the implied slack output stays
inside its own box), loads and renewable infeed are Gaussian around the case
forecast.  Outputs come from the Newton-Raphson oracle; rows whose power flow
does not converge are dropped and recorded.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .acpf import PowerFlowError, case_loads, evaluate_outputs, injections, solve_acpf
from .grid import GridCase, IoSchema

log = logging.getLogger(__name__)

MAX_DROP_FRACTION = 0.2


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class UncertaintySpec:
    """Forecast-relative fluctuation magnitudes of loads and renewables."""

    sigma_load_frac: float = 0.15
    sigma_res_frac: float = 0.30

    def as_dict(self) -> dict:
        return {"sigma_load_frac": self.sigma_load_frac,
                "sigma_res_frac": self.sigma_res_frac}


def sigma_d(case: GridCase, schema: IoSchema, spec: UncertaintySpec) -> np.ndarray:
    """Standard deviations of the uncertain injection vector d = [loads, res]."""
    loads = np.array([case.buses[i].p_load for i in schema.load_bus_idx])
    res = np.array([case.buses[i].p_res for i in schema.res_bus_idx])
    return np.concatenate([spec.sigma_load_frac * loads, spec.sigma_res_frac * res])


@dataclass(frozen=True)
class Dataset:
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    X: np.ndarray
    Y: np.ndarray
    R: np.ndarray | None = None
    case_id: str = ""
    base_mva: float = 100.0
    seed: int | None = None
    spec: dict = field(default_factory=dict)
    dropped_rows: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_v(self) -> int:
        return sum(1 for nm in self.output_names if nm.startswith("v:"))

    def column(self, name: str) -> int:
        try:
            return self.input_names.index(name)
        except ValueError:
            raise KeyError(f"unknown input column {name!r}") from None


def sample_inputs(case: GridCase, schema: IoSchema, spec: UncertaintySpec,
                  n: int, seed: int) -> np.ndarray:
    """Draw n model inputs (per-unit) deterministically from ``seed``."""
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    gens = case.generators
    slack = case.slack_gen
    pl_bar = np.array([case.buses[i].p_load for i in schema.load_bus_idx])
    pr_bar = np.array([case.buses[i].p_res for i in schema.res_bus_idx])
    net_forecast = pl_bar.sum() - pr_bar.sum()
    if sum(g.p_max for g in gens) < net_forecast:
        raise DatasetError("total generation capacity below forecast net load")

    rng = np.random.default_rng(seed)
    ns = list(schema.gen_input_idx)
    lo = np.array([gens[k].p_min for k in ns])
    hi = np.array([gens[k].p_max for k in ns])
    pg = rng.uniform(lo, hi, size=(n, len(ns)))
    pl = pl_bar + spec.sigma_load_frac * pl_bar * rng.standard_normal((n, pl_bar.size))
    pr = pr_bar + spec.sigma_res_frac * pr_bar * rng.standard_normal((n, pr_bar.size))

    # shift the free setpoints so the implied slack output stays inside its box;
    # infeasible rows get a fresh uniform slack target (clipping them all to
    # the nearest bound would pile the data onto one degenerate manifold) and
    # the redistribution loop then works off whatever clipping eats
    net = pl.sum(axis=1) - pr.sum(axis=1)
    s_lo, s_hi = gens[slack].p_min, gens[slack].p_max
    implied = net - pg.sum(axis=1)
    target = np.where((implied < s_lo) | (implied > s_hi),
                      rng.uniform(s_lo, s_hi, size=n), implied)
    for _ in range(6):
        implied = net - pg.sum(axis=1)
        deficit = implied - np.clip(target, s_lo, s_hi)
        todo = np.abs(deficit) > 1e-12
        if not np.any(todo):
            break
        free = np.where(deficit[:, None] > 0, pg < hi, pg > lo) & todo[:, None]
        n_free = free.sum(axis=1)
        movable = todo & (n_free > 0)
        if not np.any(movable):
            break
        step = np.zeros_like(pg)
        step[movable] = (deficit[movable] / n_free[movable])[:, None]
        pg = np.clip(pg + step * free, lo, hi)
    return np.hstack([pg, pl, pr])


def generate_dataset(case: GridCase, schema: IoSchema, X: np.ndarray,
                     spec: UncertaintySpec | None = None, seed: int | None = None,
                     tol: float = 1e-8, max_iter: int = 20) -> Dataset:
    """Label inputs with AC-PF outputs, dropping rows that fail to converge."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != schema.n_x:
        raise DatasetError(f"X has {X.shape[1]} columns, schema expects {schema.n_x}")
    pl_bar, ql_bar, pr_bar, qr_bar = case_loads(case)
    n_pg = len(schema.gen_input_idx)
    n_pl = len(schema.load_bus_idx)
    rows, dropped = [], []
    p_gen = np.zeros(len(case.generators))
    for r, x in enumerate(X):
        pl, ql, pr, qr = pl_bar.copy(), ql_bar.copy(), pr_bar.copy(), qr_bar.copy()
        for k, gi in enumerate(schema.gen_input_idx):
            p_gen[gi] = x[k]
        for k, bi in enumerate(schema.load_bus_idx):
            scale = x[n_pg + k] / pl_bar[bi] if pl_bar[bi] > 0 else 0.0
            pl[bi] = x[n_pg + k]
            ql[bi] = ql_bar[bi] * scale
        for k, bi in enumerate(schema.res_bus_idx):
            scale = x[n_pg + n_pl + k] / pr_bar[bi] if pr_bar[bi] > 0 else 0.0
            pr[bi] = x[n_pg + n_pl + k]
            qr[bi] = qr_bar[bi] * scale
        try:
            sol = solve_acpf(case, injections(case, p_gen, pl, ql, pr, qr),
                             tol=tol, max_iter=max_iter)
        except PowerFlowError:
            dropped.append(r)
            continue
        rows.append((x, evaluate_outputs(case, sol, schema)))
    if dropped:
        log.warning("dropped %d of %d rows (power flow non-convergence)",
                    len(dropped), X.shape[0])
    if len(dropped) > MAX_DROP_FRACTION * X.shape[0]:
        raise DatasetError(
            f"{len(dropped)} of {X.shape[0]} samples failed power flow "
            f"(more than {MAX_DROP_FRACTION:.0%})")
    return Dataset(
        input_names=tuple(schema.input_names),
        output_names=tuple(schema.output_names),
        X=np.array([x for x, _ in rows]),
        Y=np.array([y for _, y in rows]),
        case_id=case.case_id,
        base_mva=case.base_mva,
        seed=seed,
        spec=spec.as_dict() if spec is not None else {},
        dropped_rows=tuple(dropped),
    )


def residualize(ds: Dataset, surrogate) -> Dataset:
    """Attach residuals R = Y - surrogate(X)."""
    from .linmodel import predict_linear
    return replace(ds, R=ds.Y - predict_linear(surrogate, ds.X))


def corrupt(ds: Dataset, column: str, lo_mw: float, hi_mw: float) -> tuple[Dataset, float]:
    """Drop rows whose input column falls inside [lo, hi] (MW window).

    Models the systematic gaps of real measurement campaigns.  Returns the
    reduced dataset and the dropped fraction.
    """
    if hi_mw < lo_mw:
        raise ValueError(f"empty window: hi {hi_mw} < lo {lo_mw}")
    col = ds.column(column)
    vals = ds.X[:, col] * ds.base_mva
    keep = (vals < lo_mw) | (vals > hi_mw)
    frac = 1.0 - keep.mean()
    spec = dict(ds.spec)
    spec["corrupt"] = {"column": column, "lo_mw": lo_mw, "hi_mw": hi_mw,
                       "dropped_fraction": float(frac)}
    out = replace(ds, X=ds.X[keep], Y=ds.Y[keep],
                  R=None if ds.R is None else ds.R[keep], spec=spec)
    return out, float(frac)


def save_dataset(ds: Dataset, path: str) -> None:
    """Write the dataset as CSV (17 significant digits) plus a JSON sidecar."""
    header = ([f"x:{n}" for n in ds.input_names]
              + [f"y:{n}" for n in ds.output_names]
              + ([f"r:{n}" for n in ds.output_names] if ds.R is not None else []))
    blocks = [ds.X, ds.Y] + ([ds.R] if ds.R is not None else [])
    M = np.hstack(blocks)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in M:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    meta = {"case_id": ds.case_id, "base_mva": ds.base_mva, "seed": ds.seed,
            "spec": ds.spec, "dropped_rows": list(ds.dropped_rows)}
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def sidecar_path(path: str) -> str:
    return str(path) + ".meta.json"


def load_dataset(path: str) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        M = np.loadtxt(fh, delimiter=",", ndmin=2)
    x_names = tuple(h[2:] for h in header if h.startswith("x:"))
    y_names = tuple(h[2:] for h in header if h.startswith("y:"))
    has_r = any(h.startswith("r:") for h in header)
    nx, ny = len(x_names), len(y_names)
    try:
        with open(sidecar_path(path)) as fh:
            meta = json.load(fh)
    except OSError:
        meta = {}
    return Dataset(
        input_names=x_names, output_names=y_names,
        X=M[:, :nx], Y=M[:, nx:nx + ny],
        R=M[:, nx + ny:nx + 2 * ny] if has_r else None,
        case_id=meta.get("case_id", ""), base_mva=meta.get("base_mva", 100.0),
        seed=meta.get("seed"), spec=meta.get("spec", {}),
        dropped_rows=tuple(meta.get("dropped_rows", ())),
    )
