"""Command-line pipeline: generate, train, solve, validate, robustness.

Every command is a pure function of (config file, flags, seed): artifacts
are written with stable formatting so reruns are byte-identical.  Exit
codes: 0 success, 1 numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .acpf import PowerFlowError
from .ccopf import (InfeasibleError, solution_from_dict, solution_to_dict,
                    solve_ccopf)
from .dataset import (DatasetError, UncertaintySpec, generate_dataset,
                      load_dataset, sample_inputs, save_dataset)
from .gp import GpError
from .grid import CaseError, GridCase, io_schema, load_case
from .models import load_model, save_model, train_model
from .validate import (TEST_SEED_OFFSET, baseline_base_case,
                       baseline_full_recourse, render_robustness_table,
                       render_table, report_to_dict, rmse,
                       robustness_experiment, validation_report)


class UsageError(Exception):
    """Bad input or configuration; maps to exit code 2."""


@dataclasses.dataclass
class RunConfig:
    case_path: str = "case9"
    seed: int = 0
    n_train: int = 75
    n_test: int = 500
    mode: str = "hybrid"
    sparse_m: int | None = None
    eps_y: float = 0.025
    eps_pg: float = 0.001
    sigma_l_frac: float = 0.15
    sigma_r_frac: float = 0.30
    n_mc: int = 1000
    tol: float = 1e-5
    output_dir: str = "runs"

    def spec(self) -> UncertaintySpec:
        return UncertaintySpec(self.sigma_l_frac, self.sigma_r_frac)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if name == "sparse_m":
        return None if raw.lower() in ("", "none") else int(raw)
    kind = _FIELDS[name].type
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def load_config(path: str) -> RunConfig:
    """Parse a flat `key = value` file into a RunConfig."""
    cfg = RunConfig()
    try:
        text = open(path).read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise UsageError(f"{path}:{ln}: unknown key {key!r}")
        try:
            setattr(cfg, key, _coerce(key, raw))
        except ValueError as exc:
            raise UsageError(f"{path}:{ln}: {exc}") from None
    return cfg


def _paths(cfg: RunConfig) -> dict:
    out = cfg.output_dir
    return {
        "dataset": os.path.join(out, "train_data.csv"),
        "model": os.path.join(out, "model.json"),
        "solution": os.path.join(out, "solution.json"),
        "report": os.path.join(out, "report.json"),
        "robustness": os.path.join(out, "robustness.json"),
    }


def _load_case(cfg: RunConfig) -> GridCase:
    try:
        return load_case(cfg.case_path)
    except (OSError, CaseError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot load case {cfg.case_path!r}: {exc}") from None


def _write_json(path: str, doc) -> None:
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_generate(cfg: RunConfig) -> int:
    case = _load_case(cfg)
    schema = io_schema(case)
    spec = cfg.spec()
    X = sample_inputs(case, schema, spec, cfg.n_train, cfg.seed)
    ds = generate_dataset(case, schema, X, spec=spec, seed=cfg.seed)
    save_dataset(ds, _paths(cfg)["dataset"])
    print(f"{ds.n} rows written to {_paths(cfg)['dataset']} "
          f"({len(ds.dropped_rows)} dropped: power flow non-convergence)")
    return 0


def cmd_train(cfg: RunConfig, dataset_path: str | None = None) -> int:
    paths = _paths(cfg)
    src = dataset_path or paths["dataset"]
    try:
        ds = load_dataset(src)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load dataset {src}: {exc}") from None
    if cfg.mode not in ("hybrid", "full"):
        raise UsageError(f"mode must be hybrid or full, got {cfg.mode!r}")
    if cfg.sparse_m is not None and cfg.sparse_m > ds.n:
        raise UsageError(
            f"sparse_m={cfg.sparse_m} exceeds the {ds.n} training rows")
    model = train_model(ds, mode=cfg.mode, sparse_m=cfg.sparse_m,
                        seed=cfg.seed)
    save_model(model, paths["model"])

    case = _load_case(cfg)
    schema = io_schema(case)
    spec = cfg.spec()
    held = generate_dataset(
        case, schema,
        sample_inputs(case, schema, spec, cfg.n_test,
                      TEST_SEED_OFFSET + cfg.seed), spec=spec)
    from .models import predict_model
    per, avg = rmse(predict_model(model, held.X)[0], held.Y)
    rows = []
    for name, gp, err in zip(model.output_names, model.gps, per):
        ell = np.exp(gp.log_ell)
        rows.append([name, f"{np.exp(0.5 * gp.log_sf2):.3e}",
                     f"{np.exp(0.5 * gp.log_sn2):.3e}",
                     f"[{ell.min():.2f}, {ell.max():.2f}]", f"{err:.3e}"])
    print(render_table(["output", "sf", "sn", "ell range", "rmse"], rows))
    print(f"model ({model.mode}) written to {paths['model']}; "
          f"held-out rmse {avg:.6e} over {held.n} samples")
    return 0


def _load_model_checked(cfg: RunConfig, model_path: str | None):
    src = model_path or _paths(cfg)["model"]
    try:
        return load_model(src)
    except (OSError, ValueError, KeyError, TypeError,
            json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load model {src}: {exc}") from None


def cmd_solve(cfg: RunConfig, model_path: str | None = None) -> int:
    paths = _paths(cfg)
    model = _load_model_checked(cfg, model_path)
    case = _load_case(cfg)
    if model.case_id and model.case_id != case.case_id:
        raise UsageError(f"model was trained on {model.case_id!r}, "
                         f"not {case.case_id!r}")
    sol = solve_ccopf(case, model, cfg.spec(), eps_y=cfg.eps_y,
                      eps_pg=cfg.eps_pg, tol=cfg.tol)
    _write_json(paths["solution"], solution_to_dict(sol))
    print(f"status {sol.status} after {sol.iterations} iterations "
          f"(kkt {sol.kkt_residual:.3e}, {sol.solve_seconds:.2f}s)")
    print(f"expected cost {sol.cost:.2f}")
    print("p_g [MW]: " + "  ".join(f"{p:.2f}" for p in sol.p_g))
    print("alpha:    " + "  ".join(f"{a:.4f}" for a in sol.alpha))
    if sol.margins is not None:
        lam = sol.margins.lambda_y
        print(f"margins lambda_y in [{lam.min():.3e}, {lam.max():.3e}], "
              f"lambda_pg max {sol.margins.lambda_pg.max():.3e}")
    if sol.status != "optimal":
        print(f"solver did not certify optimality at margin scale "
              f"eta={sol.eta:g}; last kkt {sol.kkt_residual:.3e}",
              file=sys.stderr)
        return 1
    return 0


def cmd_validate(cfg: RunConfig, solution_path: str | None = None,
                 baselines: bool = False) -> int:
    paths = _paths(cfg)
    if cfg.n_mc < 1:
        raise UsageError(f"n_mc must be positive, got {cfg.n_mc}")
    src = solution_path or paths["solution"]
    try:
        sol = solution_from_dict(json.loads(open(src).read()))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load solution {src}: {exc}") from None
    model = _load_model_checked(cfg, None)
    case = _load_case(cfg)
    report = validation_report(case, model, sol, cfg.spec(), cfg.n_mc,
                               cfg.seed, n_test=cfg.n_test, eps_y=cfg.eps_y)
    doc = report_to_dict(report)

    rows = [["dispatch under test", f"{report.cost:.2f}",
             f"{100 * report.violation_prob:.2f}%"]]
    if baselines:
        a_cost, a_stats = baseline_full_recourse(case, cfg.spec(), cfg.n_mc,
                                                 cfg.seed)
        b_cost, b_viol = baseline_base_case(case, cfg.spec(), cfg.n_mc,
                                            cfg.seed)
        doc["baselines"] = {
            "full_recourse": {"cost": a_cost, **a_stats},
            "base_case": {"cost": b_cost, "violation_prob": b_viol},
        }
        rows.append(["A (re-optimize per sample)", f"{a_cost:.2f}", "-"])
        rows.append(["B (fixed base case)", f"{b_cost:.2f}",
                     f"{100 * b_viol:.2f}%"])
    _write_json(paths["report"], doc)
    print(render_table(["policy", "cost ($)", "violation"], rows))
    print(f"model rmse {report.rmse_avg:.6e}; "
          f"pf failures {100 * report.pf_failed:.2f}% of {report.n_mc}; "
          f"report written to {paths['report']}")
    return 0


def cmd_robustness(cfg: RunConfig, buses: str, window_mw: float) -> int:
    paths = _paths(cfg)
    case = _load_case(cfg)
    labels = [b.strip() for b in buses.split(",") if b.strip()]
    rows = []
    for label in labels:
        try:
            bus_id = int(label)
        except ValueError:
            raise UsageError(f"bus label {label!r} is not an integer") from None
        load_mw = next((b.p_load * case.base_mva for b in case.buses
                        if b.id == bus_id and b.p_load > 0), None)
        if load_mw is None:
            raise UsageError(f"bus {bus_id} carries no load in "
                             f"{case.case_id!r}")
        window = (load_mw - 0.5 * window_mw, load_mw + 0.5 * window_mw)
        rows.extend(robustness_experiment(
            case, bus_id, window, seeds=[cfg.seed], spec=cfg.spec(),
            n_train=cfg.n_train, n_test=cfg.n_test))
    _write_json(paths["robustness"], rows)
    if rows:
        print(render_robustness_table(rows))
    print(f"{len(rows)} experiment rows written to {paths['robustness']}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpopf",
        description="dispatch under uncertainty with learned power flow "
                    "surrogates")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("generate", "sample inputs and label them with power flows"),
            ("train", "fit the output model on a dataset"),
            ("solve", "solve the chance-constrained dispatch"),
            ("validate", "Monte-Carlo scorecard for a solution"),
            ("robustness", "corrupted-training-window comparison"),
            ("all", "generate, train, solve, and validate in sequence")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--case", help="case file path or built-in name")
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="artifact directory")
        p.add_argument("--n-train", type=int, dest="n_train")
        p.add_argument("--n-test", type=int, dest="n_test")
        p.add_argument("--n-mc", type=int, dest="n_mc")
        p.add_argument("--mode", choices=("hybrid", "full"))
        p.add_argument("--sparse-m", type=int, dest="sparse_m")
        p.add_argument("--eps-y", type=float, dest="eps_y")
        p.add_argument("--eps-pg", type=float, dest="eps_pg")
        p.add_argument("--tol", type=float)
        if name == "train":
            p.add_argument("dataset", nargs="?", help="dataset CSV path")
        if name == "solve":
            p.add_argument("model", nargs="?", help="model JSON path")
        if name in ("validate", "all"):
            p.add_argument("--baselines", action="store_true",
                           help="also price the reference policies")
        if name == "validate":
            p.add_argument("solution", nargs="?", help="solution JSON path")
        if name == "robustness":
            p.add_argument("--buses", default="4,6,8",
                           help="comma-separated load bus ids")
            p.add_argument("--window-mw", type=float, default=15.0,
                           dest="window_mw",
                           help="width of the dropped interval, MW")
    return parser


_FLAG_MAP = {"case": "case_path", "seed": "seed", "out": "output_dir",
             "n_train": "n_train", "n_test": "n_test", "n_mc": "n_mc",
             "mode": "mode", "sparse_m": "sparse_m", "eps_y": "eps_y",
             "eps_pg": "eps_pg", "tol": "tol"}


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for flag, field in _FLAG_MAP.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, field, value)
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
        os.makedirs(cfg.output_dir, exist_ok=True)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.dataset)
        if args.command == "solve":
            return cmd_solve(cfg, args.model)
        if args.command == "validate":
            return cmd_validate(cfg, args.solution, baselines=args.baselines)
        if args.command == "robustness":
            return cmd_robustness(cfg, args.buses, args.window_mw)
        for step in (cmd_generate,
                     cmd_train,
                     cmd_solve,
                     lambda c: cmd_validate(c, baselines=args.baselines)):
            code = step(cfg)
            if code != 0:
                return code
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, PowerFlowError, DatasetError, GpError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
