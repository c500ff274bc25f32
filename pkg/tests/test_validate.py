"""Monte-Carlo scoring, baselines, and the corrupted-data comparison."""

import json

import numpy as np
import pytest

from gpopf.ccopf import solve_det_acopf
from gpopf.dataset import UncertaintySpec, generate_dataset, sample_inputs
from gpopf.grid import io_schema
from gpopf.linmodel import fit_linear, predict_linear
from gpopf.models import train_model
from gpopf.validate import (
    ValidationReport,
    baseline_base_case,
    baseline_full_recourse,
    mc_violation,
    render_table,
    report_to_dict,
    rmse,
    robustness_experiment,
)

STILL = UncertaintySpec(sigma_load_frac=0.0, sigma_res_frac=0.0)


@pytest.fixture(scope="module")
def det9(case9):
    return solve_det_acopf(case9)


def test_rmse_identical_and_offset():
    rng = np.random.default_rng(0)
    truth = rng.normal(size=(40, 5))
    per, avg = rmse(truth, truth)
    assert per.shape == (5,)
    assert np.all(per == 0.0) and avg == 0.0

    pred = truth.copy()
    pred[:, 2] += 0.125
    per, avg = rmse(pred, truth)
    np.testing.assert_allclose(per[2], 0.125)
    assert per[0] == 0.0
    np.testing.assert_allclose(avg, 0.125 / 5)


def test_rmse_shape_mismatch():
    with pytest.raises(ValueError):
        rmse(np.zeros((3, 2)), np.zeros((4, 2)))


def test_dc_surrogate_error_level(case9, dataset9):
    train = dataset9(75, seed=101)
    test = dataset9(200, seed=9101)
    sur = fit_linear(train.X, train.Y, train.n_v)
    _, avg = rmse(predict_linear(sur, test.X), test.Y)
    assert 4e-2 <= avg <= 9e-2


def test_mc_no_fluctuation_is_clean(case9, det9):
    viol, rates, outputs = mc_violation(case9, det9, STILL, n_mc=8, seed=4)
    assert viol == 0.0
    assert rates["pf_failed"] == 0.0
    assert all(np.all(v == 0.0) for k, v in rates.items() if k != "pf_failed")
    assert outputs.shape == (8, det9.mu_y.size)
    # every sample realizes the same operating point
    assert np.all(outputs == outputs[0])


def test_mc_deterministic_per_seed(case9, det9):
    spec = UncertaintySpec()
    a = mc_violation(case9, det9, spec, n_mc=25, seed=7)
    b = mc_violation(case9, det9, spec, n_mc=25, seed=7)
    c = mc_violation(case9, det9, spec, n_mc=25, seed=8)
    assert np.array_equal(a[2], b[2])
    assert a[0] == b[0]
    assert not np.array_equal(a[2], c[2])


def test_mc_flags_an_overloaded_machine(case9, det9):
    import dataclasses
    k = 1
    p_bad = det9.p_g.copy()
    p_bad[k] = case9.generators[k].p_max * case9.base_mva + 5.0
    p_bad[case9.slack_gen] -= 5.0
    bad = dataclasses.replace(det9, p_g=p_bad)
    viol, rates, _ = mc_violation(case9, bad, STILL, n_mc=6, seed=1)
    assert viol == 1.0
    assert rates["pg"][k] == 1.0


def test_base_case_baseline_reduces_to_det(case9, det9):
    cost, viol = baseline_base_case(case9, STILL, n_mc=5, seed=2)
    assert viol == 0.0
    np.testing.assert_allclose(cost, det9.cost, rtol=1e-6)


def test_full_recourse_baseline_reduces_to_det(case9, det9):
    cost, stats = baseline_full_recourse(case9, STILL, n_mc=3, seed=2)
    assert stats["n_failed"] == 0
    np.testing.assert_allclose(cost, det9.cost, rtol=1e-4)


def test_robustness_without_window_matches_plain_training(case9):
    spec = UncertaintySpec()
    schema = io_schema(case9)
    seed = 3
    rows = robustness_experiment(case9, bus=4, window=None, seeds=[seed],
                                 spec=spec, n_train=40, n_test=60)
    assert len(rows) == 1
    row = rows[0]
    assert row["dropped_fraction"] == 0.0

    train = generate_dataset(
        case9, schema, sample_inputs(case9, schema, spec, 40, seed), spec=spec)
    test = generate_dataset(
        case9, schema,
        sample_inputs(case9, schema, spec, 60, 10_000 + seed), spec=spec)
    for mode, key in (("hybrid", "rmse_hybrid"), ("full", "rmse_full")):
        model = train_model(train, mode=mode, seed=seed)
        from gpopf.models import predict_model
        pred, _ = predict_model(model, test.X)
        _, avg = rmse(pred, test.Y)
        np.testing.assert_allclose(row[key], avg, rtol=1e-9)


def test_report_serializes(case9, det9):
    report = ValidationReport(
        rmse_per_output=np.zeros(3), rmse_avg=0.0, violation_prob=0.01,
        cost=det9.cost, margins_analytic=None,
        margins_empirical=(np.ones(3), np.ones(3)), n_mc=10, seed=0)
    doc = report_to_dict(report)
    json.dumps(doc)
    assert doc["violation_prob"] == 0.01
    assert doc["n_mc"] == 10


def test_table_renderer_lines_up():
    text = render_table(
        ["method", "cost", "violation"],
        [["hybrid", "4020.0", "0.8%"], ["base", "3470.1", "9.76%"]])
    lines = text.splitlines()
    assert len(lines) == 4
    assert "method" in lines[0]
    assert lines[1].startswith("-")
    assert "9.76%" in lines[-1]
