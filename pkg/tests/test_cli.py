"""Command-line pipeline: artifacts, determinism, exit codes."""

import json

import numpy as np
import pytest

from gpopf.cli import RunConfig, load_config, main


def cfg_file(tmp_path, **overrides):
    values = {"case_path": "case9", "seed": 11, "n_train": 40, "n_test": 50,
              "n_mc": 25, "mode": "hybrid"}
    values.update(overrides)
    path = tmp_path / "run.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return str(path)


def test_config_parsing_and_defaults(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("# comment\nseed = 3\n\neps_y = 0.1\nsparse_m = none\n")
    cfg = load_config(str(path))
    assert cfg.seed == 3
    assert cfg.eps_y == 0.1
    assert cfg.sparse_m is None
    assert cfg.n_mc == 1000
    assert cfg.tol == 1e-5
    assert RunConfig().eps_pg == 0.001


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("nonsense = 1\n")
    with pytest.raises(Exception):
        load_config(str(path))


def test_generate_is_deterministic(tmp_path, capsys):
    cfg = cfg_file(tmp_path)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["generate", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["generate", "--config", cfg, "--out", str(out2)]) == 0
    b1 = (out1 / "train_data.csv").read_bytes()
    b2 = (out2 / "train_data.csv").read_bytes()
    assert b1 == b2
    text = capsys.readouterr().out
    assert "rows" in text
    rows = np.loadtxt(out1 / "train_data.csv", delimiter=",", skiprows=1)
    assert rows.shape[0] <= 40


def test_generate_missing_case_names_path(tmp_path, capsys):
    cfg = cfg_file(tmp_path, case_path="/no/such/case.json")
    rc = main(["generate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "/no/such/case.json" in capsys.readouterr().err


def test_seed_flag_overrides_config(tmp_path):
    cfg = cfg_file(tmp_path)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    main(["generate", "--config", cfg, "--out", str(out1)])
    main(["generate", "--config", cfg, "--out", str(out2), "--seed", "12"])
    assert ((out1 / "train_data.csv").read_bytes()
            != (out2 / "train_data.csv").read_bytes())


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One generate+train+solve chain shared by the artifact tests."""
    root = tmp_path_factory.mktemp("pipe")
    cfg = cfg_file(root)
    out = root / "run"
    assert main(["generate", "--config", cfg, "--out", str(out)]) == 0
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    return cfg, out


def test_train_writes_model_and_summary(pipeline, capsys):
    cfg, out = pipeline
    assert (out / "model.json").exists()
    rc = main(["train", "--config", cfg, "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "held-out rmse" in text.lower()
    assert "qg:" in text and "ell" in text


def test_train_rejects_oversized_inducing_set(pipeline, capsys):
    cfg, out = pipeline
    rc = main(["train", "--config", cfg, "--out", str(out),
               "--sparse-m", "4000"])
    assert rc == 2


def test_solve_artifact_contents(pipeline, capsys):
    cfg, out = pipeline
    doc = json.loads((out / "solution.json").read_text())
    assert doc["status"] == "optimal"
    assert doc["kkt_residual"] <= 1e-5
    assert len(doc["p_g"]) == len(doc["alpha"]) == 3
    assert abs(sum(doc["alpha"]) - 1.0) < 1e-8
    assert "solve_seconds" not in doc


def test_solve_rejects_corrupt_model(tmp_path, capsys):
    cfg = cfg_file(tmp_path)
    out = tmp_path / "o"
    out.mkdir()
    (out / "model.json").write_text("{ not json")
    rc = main(["solve", "--config", cfg, "--out", str(out)])
    assert rc == 2


def test_validate_writes_report(pipeline, capsys):
    cfg, out = pipeline
    rc = main(["validate", "--config", cfg, "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert 0.0 <= doc["violation_prob"] <= 1.0
    assert doc["n_mc"] == 25
    assert "baselines" not in doc
    text = capsys.readouterr().out
    assert "violation" in text


def test_validate_rejects_zero_samples(pipeline, capsys):
    cfg, out = pipeline
    rc = main(["validate", "--config", cfg, "--out", str(out),
               "--n-mc", "0"])
    assert rc == 2


def test_validate_baselines_flag(pipeline):
    cfg, out = pipeline
    rc = main(["validate", "--config", cfg, "--out", str(out),
               "--n-mc", "6", "--baselines"])
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert "full_recourse" in doc["baselines"]
    assert "base_case" in doc["baselines"]
    assert doc["baselines"]["base_case"]["cost"] > 0


def test_robustness_empty_bus_list(tmp_path, capsys):
    cfg = cfg_file(tmp_path)
    out = tmp_path / "o"
    rc = main(["robustness", "--config", cfg, "--out", str(out),
               "--buses", ""])
    assert rc == 0
    assert json.loads((out / "robustness.json").read_text()) == []


def test_all_reports_are_byte_identical(tmp_path):
    cfg = cfg_file(tmp_path, n_train=35, n_test=40, n_mc=20)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["all", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["all", "--config", cfg, "--out", str(out2)]) == 0
    for name in ("train_data.csv", "model.json", "solution.json",
                 "report.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
