"""Monte-Carlo validation of dispatch solutions and model accuracy scoring.

Everything here judges a dispatch or a model against the nonlinear power
flow itself: out-of-sample RMSE, empirical violation frequencies under the
AGC recourse, the two reference policies (re-optimizing per realization
versus riding one base case), and the corrupted-training-data comparison.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .acpf import PowerFlowError, case_loads, evaluate_outputs, injections, solve_acpf
from .ccopf import DispatchSolution, solve_det_acopf
from .dataset import UncertaintySpec, corrupt, generate_dataset, sample_inputs, sigma_d
from .grid import GridCase, io_schema
from .models import HybridModel, predict_model, train_model
from .uncertainty import Margins, empirical_margins

log = logging.getLogger(__name__)

# test-set seeds live far from any training seed a caller would pick
TEST_SEED_OFFSET = 10_000

# slack when comparing a realized quantity against its limit; keeps exact
# boundary arithmetic from registering as a violation
LIMIT_TOL = 1e-8


@dataclasses.dataclass
class ValidationReport:
    rmse_per_output: np.ndarray | None
    rmse_avg: float | None
    violation_prob: float
    cost: float
    margins_analytic: Margins | None
    margins_empirical: tuple | None
    n_mc: int
    seed: int
    per_constraint: dict | None = None
    pf_failed: float = 0.0


def rmse(pred, truth):
    """Per-output root-mean-square error and its average across outputs."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.ndim != 2 or pred.shape[0] < 1:
        raise ValueError("expected N x n_y arrays with N >= 1")
    per = np.sqrt(np.mean((pred - truth) ** 2, axis=0))
    return per, float(per.mean())


def _realized_injections(case, schema, delta_row):
    """Shift the forecast by one fluctuation draw, scaling q with p."""
    pl, ql, pr, qr = case_loads(case)
    n_load = len(schema.load_bus_idx)
    for k, bi in enumerate(schema.load_bus_idx):
        scale = (pl[bi] + delta_row[k]) / pl[bi]
        pl[bi] += delta_row[k]
        ql[bi] *= scale
    for k, bi in enumerate(schema.res_bus_idx):
        scale = (pr[bi] + delta_row[n_load + k]) / pr[bi]
        pr[bi] += delta_row[n_load + k]
        qr[bi] *= scale
    return pl, ql, pr, qr


def mc_violation(case: GridCase, solution: DispatchSolution,
                 spec: UncertaintySpec, n_mc: int, seed: int):
    """Empirical joint violation frequency of a dispatch under recourse.

    Each sample draws a fluctuation, moves the machines by their
    participation shares, scales reactive demand with active demand, and
    solves the full power flow.  A sample fails if any realized quantity
    (machine set points, reactive outputs, voltages, line loadings) leaves
    its physical box, or if the power flow does not converge; the latter
    count is also reported on its own.

    Returns (violation_prob, per-constraint rates, realized outputs); rows
    of the output matrix are NaN for non-convergent samples.
    """
    if n_mc < 1:
        raise ValueError(f"n_mc must be positive, got {n_mc}")
    schema = io_schema(case)
    rng = np.random.default_rng(seed)
    delta = rng.standard_normal((n_mc, schema.n_d)) * sigma_d(case, schema, spec)
    n_load = len(schema.load_bus_idx)
    omega = delta[:, :n_load].sum(axis=1) - delta[:, n_load:].sum(axis=1)

    gens = case.generators
    p0 = solution.p_g / case.base_mva
    alpha = solution.alpha
    p_min = np.array([g.p_min for g in gens])
    p_max = np.array([g.p_max for g in gens])
    q_min = np.array([g.q_min for g in gens])
    q_max = np.array([g.q_max for g in gens])
    v_min = np.array([b.v_min for b in case.buses])
    v_max = np.array([b.v_max for b in case.buses])
    s_max = np.array([ln.s_max for ln in case.lines])
    sl_s = slice(schema.n_v + len(schema.qg_gen_idx), schema.n_y)

    outputs = np.full((n_mc, schema.n_y), np.nan)
    hits = {"pg": np.zeros(len(gens)), "qg": np.zeros(len(gens)),
            "v": np.zeros(case.n_bus), "s": np.zeros(len(case.lines))}
    pf_failed = 0
    joint = 0
    for i in range(n_mc):
        pl, ql, pr, qr = _realized_injections(case, schema, delta[i])
        try:
            pf = solve_acpf(case, injections(case, p0 + alpha * omega[i],
                                             pl, ql, pr, qr))
        except PowerFlowError:
            pf_failed += 1
            joint += 1
            continue
        outputs[i] = evaluate_outputs(case, pf, schema)
        bad = {
            "pg": (pf.p_gen > p_max + LIMIT_TOL) | (pf.p_gen < p_min - LIMIT_TOL),
            "qg": (pf.q_gen > q_max + LIMIT_TOL) | (pf.q_gen < q_min - LIMIT_TOL),
            "v": (pf.v > v_max + LIMIT_TOL) | (pf.v < v_min - LIMIT_TOL),
            "s": outputs[i, sl_s] > s_max + LIMIT_TOL,
        }
        for key, mask in bad.items():
            hits[key] += mask
        if any(mask.any() for mask in bad.values()):
            joint += 1

    rates = {key: val / n_mc for key, val in hits.items()}
    rates["pf_failed"] = pf_failed / n_mc
    return joint / n_mc, rates, outputs


def baseline_full_recourse(case: GridCase, spec: UncertaintySpec,
                           n_mc: int, seed: int):
    """Reference policy A: re-optimize the deterministic OPF per sample.

    The mean optimal cost over realizations bounds what any recourse
    scheme could achieve.  Draws come in antithetic pairs so the
    first-order cost swings cancel and the mean settles at a fraction of
    the sample count plain draws would need.  Samples whose OPF fails to
    converge are excluded and counted.
    """
    if n_mc < 1:
        raise ValueError(f"n_mc must be positive, got {n_mc}")
    schema = io_schema(case)
    rng = np.random.default_rng(seed)
    half = rng.standard_normal(((n_mc + 1) // 2, schema.n_d))
    delta = np.concatenate([half, -half])[:n_mc] * sigma_d(case, schema, spec)
    pl_bar, ql_bar, pr_bar, qr_bar = case_loads(case)
    n_load = len(schema.load_bus_idx)

    costs = []
    n_failed = 0
    warm = None
    for i in range(n_mc):
        pl, ql, pr, qr = _realized_injections(case, schema, delta[i])
        p_fl = (pl - pl_bar) - (pr - pr_bar)
        q_fl = (ql - ql_bar) - (qr - qr_bar)
        sol = solve_det_acopf(case, p_fluct=p_fl, q_fluct=q_fl, z0=warm)
        if sol.status != "optimal":
            n_failed += 1
            warm = None
            log.warning("sample %d: deterministic OPF ended with %s",
                        i, sol.status)
            continue
        costs.append(sol.cost)
        warm = sol.raw_z
    if not costs:
        raise RuntimeError("every per-sample OPF failed")
    costs = np.array(costs)
    stats = {"n_mc": n_mc, "n_failed": n_failed,
             "cost_std": float(costs.std()),
             "cost_min": float(costs.min()), "cost_max": float(costs.max())}
    return float(costs.mean()), stats


def baseline_base_case(case: GridCase, spec: UncertaintySpec,
                       n_mc: int, seed: int):
    """Reference policy B: one deterministic OPF, uniform AGC shares."""
    det = solve_det_acopf(case)
    if det.status != "optimal":
        raise RuntimeError(f"deterministic OPF ended with {det.status}")
    viol, _, _ = mc_violation(case, det, spec, n_mc, seed)
    return det.cost, viol


def robustness_experiment(case: GridCase, bus, window, seeds,
                          spec: UncertaintySpec | None = None,
                          n_train: int = 200, n_test: int = 500):
    """Score both model flavours after gutting one load's training range.

    For each seed: sample a training set, drop every row whose chosen
    load falls inside ``window`` (MW), fit the residual-based and the
    direct model on what is left, and evaluate both on a clean test set.
    ``window=None`` skips the corruption.  Returns one row per seed.
    """
    spec = spec if spec is not None else UncertaintySpec()
    schema = io_schema(case)
    column = bus if isinstance(bus, str) else f"pl:{bus}"
    rows = []
    for seed in seeds:
        train = generate_dataset(
            case, schema, sample_inputs(case, schema, spec, n_train, seed),
            spec=spec, seed=seed)
        frac = 0.0
        if window is not None:
            train, frac = corrupt(train, column, window[0], window[1])
        test = generate_dataset(
            case, schema,
            sample_inputs(case, schema, spec, n_test, TEST_SEED_OFFSET + seed),
            spec=spec)
        row = {"column": column,
               "window": None if window is None else
               [float(window[0]), float(window[1])],
               "seed": int(seed), "dropped_fraction": float(frac),
               "n_train": train.n, "n_test": test.n}
        for mode in ("hybrid", "full"):
            model = train_model(train, mode=mode, seed=seed)
            pred, _ = predict_model(model, test.X)
            _, avg = rmse(pred, test.Y)
            row[f"rmse_{mode}"] = float(avg)
        rows.append(row)
    return rows


def validation_report(case: GridCase, model: HybridModel,
                      solution: DispatchSolution, spec: UncertaintySpec,
                      n_mc: int, seed: int, n_test: int = 500,
                      eps_y: float = 0.025) -> ValidationReport:
    """Full scorecard: out-of-sample model RMSE plus MC reliability."""
    schema = io_schema(case)
    test = generate_dataset(
        case, schema,
        sample_inputs(case, schema, spec, n_test, TEST_SEED_OFFSET + seed),
        spec=spec)
    pred, _ = predict_model(model, test.X)
    per, avg = rmse(pred, test.Y)
    viol, rates, outputs = mc_violation(case, solution, spec, n_mc, seed)
    ok = ~np.isnan(outputs).any(axis=1)
    emp = None
    if ok.sum() >= 100:
        emp = empirical_margins(outputs[ok], solution.mu_y, eps_y)
    return ValidationReport(
        rmse_per_output=per, rmse_avg=avg, violation_prob=viol,
        cost=solution.cost, margins_analytic=solution.margins,
        margins_empirical=emp, n_mc=n_mc, seed=seed,
        per_constraint=rates, pf_failed=rates["pf_failed"])


def _listify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _listify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_listify(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def report_to_dict(report: ValidationReport) -> dict:
    """JSON-ready view of a validation report."""
    margins = None
    if report.margins_analytic is not None:
        m = report.margins_analytic
        margins = {"lambda_y": m.lambda_y.tolist(),
                   "lambda_pg": m.lambda_pg.tolist(),
                   "tau_y": m.tau_y, "tau_pg": m.tau_pg}
    return {
        "rmse_per_output": _listify(report.rmse_per_output),
        "rmse_avg": report.rmse_avg,
        "violation_prob": report.violation_prob,
        "cost": report.cost,
        "margins_analytic": margins,
        "margins_empirical": _listify(report.margins_empirical),
        "n_mc": report.n_mc,
        "seed": report.seed,
        "per_constraint": _listify(report.per_constraint),
        "pf_failed": report.pf_failed,
    }


def render_table(headers, rows) -> str:
    """Fixed-width text table: header, rule, one line per row."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(headers))]
    def fmt(row):
        return "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
    lines = [fmt(cells[0]), "-" * (sum(widths) + 2 * (len(widths) - 1))]
    lines.extend(fmt(row) for row in cells[1:])
    return "\n".join(lines)


def render_robustness_table(rows) -> str:
    """Corrupted-data comparison, one line per experiment row."""
    body = [[r["column"], f"seed {r['seed']}",
             f"{r['rmse_full']:.3e}", f"{r['rmse_hybrid']:.3e}",
             f"{100 * r['dropped_fraction']:.1f}%"] for r in rows]
    return render_table(
        ["experiment", "run", "rmse direct", "rmse residual", "dropped"],
        body)


def save_mc_csv(path, outputs: np.ndarray, output_names) -> None:
    """Dump realized MC outputs for external plotting."""
    np.savetxt(path, outputs, delimiter=",", comments="",
               header=",".join(output_names), fmt="%.17g")
