import numpy as np
import pytest

from gpopf.dataset import (Dataset, DatasetError, UncertaintySpec, corrupt,
                           generate_dataset, load_dataset, residualize,
                           sample_inputs, save_dataset, sigma_d)
from gpopf.linmodel import fit_linear


SPEC = UncertaintySpec()


def test_sigma_d_fractions(case9, schema9):
    sd = sigma_d(case9, schema9, SPEC)
    loads = np.array([case9.buses[i].p_load for i in schema9.load_bus_idx])
    res = np.array([case9.buses[i].p_res for i in schema9.res_bus_idx])
    assert sd[:3] == pytest.approx(0.15 * loads)
    assert sd[3:] == pytest.approx(0.30 * res)


def test_sampling_is_deterministic(case9, schema9):
    a = sample_inputs(case9, schema9, SPEC, 20, seed=11)
    b = sample_inputs(case9, schema9, SPEC, 20, seed=11)
    c = sample_inputs(case9, schema9, SPEC, 20, seed=12)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_moments(case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 4000, seed=0)
    n_pg = len(schema9.gen_input_idx)
    loads = np.array([case9.buses[i].p_load for i in schema9.load_bus_idx])
    got_mean = X[:, n_pg:n_pg + 3].mean(axis=0)
    got_std = X[:, n_pg:n_pg + 3].std(axis=0)
    assert got_mean == pytest.approx(loads, rel=0.02)
    assert got_std == pytest.approx(0.15 * loads, rel=0.1)


def test_sampled_setpoints_inside_boxes(case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 500, seed=3)
    for k, gi in enumerate(schema9.gen_input_idx):
        g = case9.generators[gi]
        assert np.all(X[:, k] >= g.p_min - 1e-12)
        assert np.all(X[:, k] <= g.p_max + 1e-12)


def test_zero_sigma_reproduces_forecast(case9, schema9):
    X = sample_inputs(case9, schema9, UncertaintySpec(0.0, 0.0), 5, seed=1)
    loads = np.array([case9.buses[i].p_load for i in schema9.load_bus_idx])
    res = np.array([case9.buses[i].p_res for i in schema9.res_bus_idx])
    n_pg = len(schema9.gen_input_idx)
    assert np.allclose(X[:, n_pg:n_pg + 3], loads)
    assert np.allclose(X[:, n_pg + 3:], res)


def test_generate_dataset_outputs_match_oracle(case9, schema9):
    from gpopf.acpf import evaluate_outputs, injections, solve_acpf

    X = sample_inputs(case9, schema9, SPEC, 8, seed=21)
    ds = generate_dataset(case9, schema9, X, spec=SPEC, seed=21)
    assert ds.n == 8 and not ds.dropped_rows
    # re-run the oracle for one row, scaling reactive parts with the actives
    x = ds.X[4]
    pl = np.zeros(9)
    ql = np.zeros(9)
    pr = np.zeros(9)
    for k, bi in enumerate(schema9.load_bus_idx):
        bar = case9.buses[bi]
        pl[bi] = x[2 + k]
        ql[bi] = bar.q_load * x[2 + k] / bar.p_load
    for k, bi in enumerate(schema9.res_bus_idx):
        pr[bi] = x[5 + k]
    p_gen = np.array([0.0, x[0], x[1]])
    sol = solve_acpf(case9, injections(case9, p_gen, pl, ql, pr, np.zeros(9)))
    assert np.allclose(ds.Y[4], evaluate_outputs(case9, sol, schema9), atol=1e-10)


def test_generate_dataset_infeasible_abort(case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 10, seed=2)
    X[:, 2:5] *= 40.0  # absurd loads: power flow cannot converge
    with pytest.raises(DatasetError, match="failed power flow"):
        generate_dataset(case9, schema9, X)


def test_residual_round_trip(case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 12, seed=5)
    ds = generate_dataset(case9, schema9, X, spec=SPEC, seed=5)
    sur = fit_linear(ds.X, ds.Y, ds.n_v)
    ds_r = residualize(ds, sur)
    from gpopf.linmodel import predict_linear
    assert np.max(np.abs(ds_r.R + predict_linear(sur, ds.X) - ds.Y)) < 1e-12


def test_corrupt_window_brute_force(case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 300, seed=9)
    ds = generate_dataset(case9, schema9, X, spec=SPEC, seed=9)
    out, frac = corrupt(ds, "pl:4", 80.0, 100.0)
    col = ds.column("pl:4")
    inside = (ds.X[:, col] * 100.0 >= 80.0) & (ds.X[:, col] * 100.0 <= 100.0)
    assert out.n == ds.n - inside.sum()
    assert frac == pytest.approx(inside.mean())
    assert np.all((out.X[:, col] * 100.0 < 80.0) | (out.X[:, col] * 100.0 > 100.0))
    # survivors keep their row content
    kept = ds.X[~inside]
    assert np.array_equal(out.X, kept)


def test_corrupt_empty_window_rejected(case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 10, seed=9)
    ds = generate_dataset(case9, schema9, X)
    with pytest.raises(ValueError, match="empty window"):
        corrupt(ds, "pl:4", 100.0, 80.0)
    with pytest.raises(KeyError):
        corrupt(ds, "pl:99", 80.0, 100.0)


def test_save_load_round_trip(tmp_path, case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 6, seed=13)
    ds = generate_dataset(case9, schema9, X, spec=SPEC, seed=13)
    ds = residualize(ds, fit_linear(ds.X, ds.Y, ds.n_v))
    path = str(tmp_path / "d.csv")
    save_dataset(ds, path)
    again = load_dataset(path)
    assert again.input_names == ds.input_names
    assert again.output_names == ds.output_names
    assert np.array_equal(again.X, ds.X)
    assert np.array_equal(again.Y, ds.Y)
    assert np.array_equal(again.R, ds.R)
    assert again.seed == 13 and again.case_id == "case9"
    assert again.spec["sigma_load_frac"] == 0.15


def test_setpoint_shift_keeps_slack_inside(case9, schema9):
    X = sample_inputs(case9, schema9, SPEC, 800, seed=17)
    g = case9.generators[case9.slack_gen]
    implied = X[:, 2:5].sum(axis=1) - X[:, 5:].sum(axis=1) - X[:, :2].sum(axis=1)
    frac_ok = np.mean((implied > g.p_min - 1e-9) & (implied < g.p_max + 1e-9))
    assert frac_ok > 0.97
