import math

import numpy as np
import pytest

from gpopf.acpf import (PowerFlowError, branch_flows, case_loads, evaluate_outputs,
                        injections, power_injections, solve_acpf)
from gpopf.grid import case_from_dict, case_to_dict, io_schema


def pv_two_bus(x=0.1, p_load=0.5):
    """Slack plus a voltage-holding machine carrying a local load (lossless)."""
    return case_from_dict({
        "base_mva": 100.0,
        "buses": [
            {"id": 0, "kind": "slack", "v_min": 0.9, "v_max": 1.1},
            {"id": 1, "kind": "generator", "v_min": 0.9, "v_max": 1.1,
             "p_load": p_load * 100.0},
        ],
        "lines": [{"from": 0, "to": 1, "r": 0.0, "x": x, "b_shunt": 0.0,
                   "s_max": 500.0}],
        "generators": [
            {"bus": 0, "p_min": 0.0, "p_max": 500.0, "q_min": -300.0,
             "q_max": 300.0, "v_set": 1.0},
            {"bus": 1, "p_min": -100.0, "p_max": 100.0, "q_min": -300.0,
             "q_max": 300.0, "v_set": 1.0},
        ],
    })


def test_two_bus_closed_form_angle():
    # p = v1 v2 sin(th1 - th2) / x with both ends held at 1.0
    case = pv_two_bus()
    sol = solve_acpf(case, injections(case, p_gen=np.array([0.0, 0.0])), tol=1e-12)
    assert sol.theta[1] == pytest.approx(-math.asin(0.05), abs=1e-9)
    assert sol.v[1] == pytest.approx(1.0, abs=1e-12)
    # lossless line: the slack serves the load exactly
    assert sol.p_gen[0] == pytest.approx(0.5, abs=1e-9)


def test_flat_case_converges_immediately():
    case = pv_two_bus(p_load=0.0)
    sol = solve_acpf(case, injections(case, p_gen=np.zeros(2)))
    assert sol.iterations == 0
    assert np.allclose(sol.theta, 0.0)


def test_case9_residual_oracle(case9):
    inj = injections(case9)
    sol = solve_acpf(case9, inj, tol=1e-10)
    P, Q = power_injections(case9, sol.v, sol.theta)
    pl, ql, pr, qr = case_loads(case9)
    p_sched = -pl + pr
    pos = {bid: i for i, bid in enumerate(case9.bus_ids)}
    for k, g in enumerate(case9.generators):
        p_sched[pos[g.bus]] += sol.p_gen[k]
    # every bus balances once the realized generator outputs are included
    q_sched = -ql + qr
    for k, g in enumerate(case9.generators):
        q_sched[pos[g.bus]] += sol.q_gen[k]
    assert np.max(np.abs(P - p_sched)) < 1e-8
    assert np.max(np.abs(Q - q_sched)) < 1e-8


def test_case9_converges_quadratically(case9):
    sol = solve_acpf(case9, injections(case9), tol=1e-10)
    assert sol.iterations <= 6
    assert sol.max_mismatch < 1e-10


def test_lossless_network_active_power_sums_to_zero(case9):
    data = case_to_dict(case9)
    for ln in data["lines"]:
        ln["r"] = 0.0
    lossless = case_from_dict(data)
    sol = solve_acpf(lossless, injections(lossless), tol=1e-10)
    P, _ = power_injections(lossless, sol.v, sol.theta)
    assert abs(P.sum()) < 1e-9


def test_branch_losses_nonnegative(case9):
    sol = solve_acpf(case9, injections(case9))
    p_f, _, p_t, _, s = branch_flows(case9, sol)
    assert np.all(p_f + p_t > -1e-12)
    assert np.all(s >= np.abs(p_f) - 1e-12)
    data = case_to_dict(case9)
    for ln in data["lines"]:
        ln["r"] = 0.0
    lossless = case_from_dict(data)
    sol0 = solve_acpf(lossless, injections(lossless))
    p_f0, _, p_t0, _, _ = branch_flows(lossless, sol0)
    assert np.max(np.abs(p_f0 + p_t0)) < 1e-9


def test_evaluate_outputs_layout(case9, schema9):
    sol = solve_acpf(case9, injections(case9))
    y = evaluate_outputs(case9, sol, schema9)
    assert y.shape == (schema9.n_y,)
    assert y[0] == sol.v[4]
    assert np.allclose(y[3:6], sol.q_gen)
    *_, s = branch_flows(case9, sol)
    assert np.allclose(y[6:], s)


def test_nonconvergence_diagnostics(case9):
    pl, ql, pr, qr = case_loads(case9)
    with pytest.raises(PowerFlowError) as err:
        solve_acpf(case9, injections(case9, p_load=pl * 40.0), max_iter=6)
    assert err.value.iterations <= 6
    assert math.isfinite(err.value.max_mismatch) or err.value.max_mismatch != err.value.max_mismatch


def test_injection_default_dispatch(case9):
    inj = injections(case9)
    pl, _, pr, _ = case_loads(case9)
    assert inj.p_gen.sum() == pytest.approx(pl.sum() - pr.sum())
