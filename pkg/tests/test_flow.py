import math

import numpy as np
import pytest

from tpflow import curve as cv
from tpflow import energy as en
from tpflow.errors import ConfigurationError, InsufficientSignalError, ParameterError
from tpflow.flow import (TRACE_COLUMNS, FlowConfig, FlowTrace, _Engine, flow_step, h_function, init_state,
                         ls_fit, rate_envelope, run_flow, synthetic_trace)

# (2,3) torus knot, N = 384, p = 4.5, default FlowConfig, 20 steps: first-run regression baseline
KNOT_ENERGY_20 = 313.3552537168368
KNOT_GRAD_20 = 2.7339431913133048
KNOT_T_20 = 0.2892578125
KNOT_NODES_20 = [[0.0, 0.0, 0.0],
                 [-0.17499084478853016, -0.023384836245315697, -0.029442634226516495],
                 [-0.0693130803457207, 0.0, 0.0],
                 [-0.17499084478407095, 0.02338483625579288, 0.02944263422338519]]


@pytest.mark.parametrize("kw", [dict(dt_min=0.0), dict(dt_init=1.0, dt_max=0.5), dict(armijo_c=1.0),
                                dict(retract_every=0), dict(grow=0.5), dict(max_steps=-1)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        FlowConfig(**kw)


def test_trace_csv_roundtrip(tmp_path):
    tr = synthetic_trace(0.6, n_rows=20)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == TRACE_COLUMNS
    back = FlowTrace.from_csv(path)
    assert np.allclose(back.as_array(), tr.as_array(), equal_nan=True)


def test_rate_envelope_exponential_branch():
    Z, E0 = 1.7, 2.5
    assert rate_envelope(0.5, Z, E0, 0.0) == pytest.approx(2 / Z * math.sqrt(E0), rel=1e-15)
    t = 0.37
    assert rate_envelope(0.5, Z, E0, t + 2 / Z ** 2 * math.log(2)) == pytest.approx(
        rate_envelope(0.5, Z, E0, t) / 2, rel=1e-12)


def test_rate_envelope_power_law_slope():
    t = np.geomspace(1e3, 1e5, 50)
    phi = rate_envelope(0.75, 1.0, 1.0, t)
    slope = np.polyfit(np.log(t), np.log(phi), 1)[0]
    assert abs(slope + 0.5) < 0.01
    assert np.all(np.diff(phi) < 0)


def test_rate_envelope_continuous_across_exponents():
    # the power-law branch tends to the exponential branch as theta -> 1/2
    t = np.linspace(0, 3, 7)
    a = rate_envelope(0.5, 1.3, 1.0, t)
    b = rate_envelope(0.5 + 1e-7, 1.3, 1.0, t)
    assert np.allclose(a, b, rtol=1e-5)


@pytest.mark.parametrize("args", [(0.4, 1.0, 1.0), (1.0, 1.0, 1.0), (0.6, 0.0, 1.0), (0.6, 1.0, -1.0)])
def test_rate_envelope_rejects_bad_parameters(args):
    with pytest.raises(ParameterError):
        rate_envelope(*args, 1.0)


@pytest.mark.parametrize("theta", [0.5, 0.6, 0.75])
def test_ls_fit_recovers_synthetic_exponent(theta):
    fit = ls_fit(synthetic_trace(theta, Z=2.0, E0=3.0, E_inf=29.2))
    assert abs(fit.theta - theta) <= 0.02
    assert fit.r2 > 0.999 and fit.Z > 0


def test_ls_fit_plateau_is_insufficient():
    E = np.full(200, 29.2)
    tr = FlowTrace.from_arrays(np.arange(200.0), E, np.full(200, 1e-7))
    with pytest.raises(InsufficientSignalError):
        ls_fit(tr)


def test_ls_fit_out_of_range_exponent_is_an_error():
    t = np.arange(300.0)
    gap = np.exp(-0.05 * t)
    tr = FlowTrace.from_arrays(t, 1.0 + gap, gap ** 1.5)
    with pytest.raises(InsufficientSignalError):
        ls_fit(tr)


def test_h_function_monotone_on_synthetic_trace():
    tr = synthetic_trace(0.6)
    fit = ls_fit(tr)
    H = h_function(tr, fit.theta, fit.E_inf)
    assert np.all(np.diff(H) <= 0)


def test_step_at_circle_is_noop(p45):
    c = cv.circle(64)
    cfg = FlowConfig()
    state = init_state(c, p45, cfg)
    out = flow_step(state, cfg)
    assert out.converged and out.curve is c


def test_one_step_decreases_energy(p45):
    c = cv.retract_to_arclength(cv.perturbed_circle(128, amplitude=0.05, seed=1))
    cfg = FlowConfig()
    eng = _Engine(p45, 128)
    state = init_state(c, p45, cfg, eng)
    tr = FlowTrace()
    new = flow_step(state, cfg, eng, tr)
    assert new.energy < state.energy
    assert en.tp_energy(new.curve, p45) < en.tp_energy(c, p45)
    assert tr.rows[-1][TRACE_COLUMNS.index("length_residual")] <= 1e-10
    assert np.allclose(new.curve.nodes[0], 0.0)


def test_circle_converges_immediately(p45):
    res = run_flow(cv.circle(128), p45, FlowConfig())
    assert res.reason == "grad_tol" and res.state.step <= 2
    assert res.lagrange_multiplier == pytest.approx((p45.p - 4) * res.state.energy, rel=1e-4)


def test_stagnation_reported(p45):
    cfg = FlowConfig(dt_init=1e3, dt_max=1e3, dt_min=1e2, max_steps=5)
    res = run_flow(cv.perturbed_circle(64, seed=2), p45, cfg)
    assert res.reason == "stagnation"


def test_max_steps_reported_and_monitors(p45):
    res = run_flow(cv.perturbed_circle(64, seed=2), p45, FlowConfig(max_steps=3))
    assert res.reason == "max_steps" and len(res.trace) == 4
    t = res.trace.column("t")
    assert np.all(np.diff(t) > 0)
    assert np.all(np.diff(res.trace.column("energy")) < 0)
    assert np.all(res.trace.column("length_residual") <= 1e-10)


def test_thinned_retraction_drift_is_monitored(p45):
    res = run_flow(cv.perturbed_circle(128, amplitude=0.05, seed=3), p45, FlowConfig(max_steps=4, retract_every=3))
    drift = res.trace.column("length_residual")
    assert drift[1] > 0 and drift[3] < 1e-12
    assert np.all(np.diff(res.trace.column("energy")) < 0)


def test_seeded_runs_are_reproducible(p45):
    a = run_flow(cv.perturbed_circle(64, seed=4), p45, FlowConfig(max_steps=3))
    b = run_flow(cv.perturbed_circle(64, seed=4), p45, FlowConfig(max_steps=3))
    assert np.array_equal(a.trace.as_array(), b.trace.as_array())


def test_torus_knot_regression(p45):
    res = run_flow(cv.torus_knot(384), p45, FlowConfig(max_steps=20))
    E = res.trace.column("energy")
    assert np.all(np.diff(E) < 0)
    assert np.min(res.trace.column("min_separation")) > 1e-3
    assert res.state.energy == pytest.approx(KNOT_ENERGY_20, rel=1e-9)
    assert res.state.grad_norm == pytest.approx(KNOT_GRAD_20, rel=1e-6)
    assert res.state.t == pytest.approx(KNOT_T_20, rel=1e-12)
    assert np.allclose(res.curve.nodes[[0, 96, 192, 288]], KNOT_NODES_20, atol=1e-9)
