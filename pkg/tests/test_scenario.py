import math

import numpy as np
import pytest

from ipmtherm.config import CONTROL_PERIOD, ScenarioConfig
from ipmtherm.dsp import SectionCascade
from ipmtherm.errors import SimulationDivergence
from ipmtherm.hf_injection import injection_active
from ipmtherm.scenario import kernel_params, run_scenario, sweep_speeds
from conftest import window_config


def test_zero_duration_gives_empty_log():
    runlog, summary = run_scenario(ScenarioConfig().with_run(duration_s=0.0))
    assert len(runlog) == 0
    assert all(w.R_hf_mean is None for w in summary.windows)


def test_sweep_edge_cases():
    cfg = ScenarioConfig().with_run(duration_s=0.2)
    assert sweep_speeds(cfg, []) == []
    (only,) = sweep_speeds(cfg, [600])
    assert only.speed_rpm == 600


def test_log_time_grid_and_raw_rate():
    runlog, _ = run_scenario(ScenarioConfig().with_run(duration_s=0.05, raw_log=True))
    assert len(runlog) == 1000
    np.testing.assert_allclose(np.diff(runlog.t), CONTROL_PERIOD, rtol=1e-9)
    runlog, _ = run_scenario(ScenarioConfig().with_run(duration_s=0.05))
    assert runlog.decimation == 20 and len(runlog) == 50
    assert np.all(np.diff(runlog.t) > 0)


def test_injection_column_matches_schedule(flux_run_600):
    runlog, _ = flux_run_600
    cfg = window_config(600).injection
    expected = np.array([injection_active(t, cfg)[0] for t in runlog.t], dtype=float)
    np.testing.assert_array_equal(runlog["injection"], expected)
    assert np.all(np.isnan(runlog["R_hf"][expected == 0]))


def test_phase_currents_sum_to_zero(flux_run_600):
    runlog, _ = flux_run_600
    assert np.abs(runlog["i_a"] + runlog["i_b"] + runlog["i_c"]).max() < 1e-9


def test_one_settled_estimate_per_window(flux_run_600):
    _, summary = flux_run_600
    assert len(summary.windows) == 1
    w = summary.windows[0]
    assert w.n_settled > 0
    assert abs(w.R_rel_err) < 0.05
    assert w.T_err_c < 3.0


def test_flux_stays_within_band_before_injection(flux_run_600):
    _, summary = flux_run_600
    cfg = window_config(600)
    margin = cfg.dtc.flux_band + cfg.dtc.V_dc * CONTROL_PERIOD
    assert summary.flux["pre_min"] >= cfg.dtc.lambda_ref - margin
    assert summary.flux["pre_max"] <= cfg.dtc.lambda_ref + margin


def test_torque_estimate_tracks_load(flux_run_600):
    _, summary = flux_run_600
    cfg = window_config(600)
    assert abs(summary.torque_mean_pre - summary.T_load) <= cfg.dtc.torque_band


@pytest.mark.parametrize("fixture", ["flux_run_600", "torque_run_600"])
def test_speed_ripple_during_injection(fixture, request):
    _, summary = request.getfixturevalue(fixture)
    assert summary.speed_ripple_pct <= 1.0


def test_hf_current_magnitude_rotating_flux(flux_run_600):
    _, summary = flux_run_600
    assert summary.hf_current_ratio == pytest.approx(1.0, abs=0.2)


@pytest.mark.xfail(strict=True, reason="the hysteresis torque loop passes only about half of the "
                                       "requested harmonic current in torque mode")
def test_hf_current_magnitude_torque_mode(torque_run_600):
    _, summary = torque_run_600
    assert summary.hf_current_ratio == pytest.approx(1.0, abs=0.2)


def test_torque_mode_still_estimates_resistance(torque_run_600):
    _, summary = torque_run_600
    assert 0.3 < summary.hf_current_ratio < 0.8
    assert abs(summary.windows[0].R_rel_err) < 0.05


def test_latency_to_first_settled_estimate_between_one_and_six_seconds(flux_run_600):
    runlog, summary = flux_run_600
    start = summary.windows[0].start_s
    first = runlog.t[np.isfinite(runlog["R_hf"])][0]
    assert 1.0 <= first - start <= 6.0
    assert summary.windows[0].settling_time_s <= 6.0


def test_measurement_noise_is_tolerated():
    _, summary = run_scenario(window_config(600, current_noise_a=0.005, vdc_noise_v=0.5))
    w = summary.windows[0]
    assert abs(w.R_rel_err) < 0.01
    assert w.T_err_c < 3.0


def test_divergence_is_reported_with_step():
    cfg = ScenarioConfig().with_run(duration_s=0.01, current_noise_a=1e308)
    with pytest.raises(SimulationDivergence) as exc:
        run_scenario(cfg)
    assert exc.value.step >= 0


def test_dsp_tap_is_the_bandpassed_pipeline_input():
    cfg = (ScenarioConfig().with_injection(start=0.5, on_duration=1.0, period=600.0)
           .with_run(duration_s=2.0, raw_log=True).with_dsp(tap=True))
    runlog, _ = run_scenario(cfg)
    tap = runlog.tap
    fed = np.isfinite(tap[:, 1])
    # the pipeline consumes each control period one step after it is applied
    assert fed.sum() == 20000 and tap[fed, 0][0] == pytest.approx(0.5 + CONTROL_PERIOD)
    assert np.isnan(tap[~fed, 1:]).all()
    _, bp, _, _ = kernel_params(cfg)
    np.testing.assert_array_equal(SectionCascade(bp).filter(tap[fed, 1]), tap[fed, 3])
    np.testing.assert_array_equal(SectionCascade(bp).filter(tap[fed, 2]), tap[fed, 4])
    assert run_scenario(cfg.with_dsp(tap=False))[0].tap is None
