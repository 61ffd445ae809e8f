import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipmtherm import hf_injection as hf
from ipmtherm import machine_model as mm
from ipmtherm.errors import ContractViolation
from ipmtherm.hf_injection import DriveReferences, HfResistanceParams, HfTerms, InjectionConfig
from ipmtherm.machine_model import MachineParams, stationary

thetas = st.floats(-20, 20, allow_nan=False)
orders = st.sampled_from([3, 5, 7, 9, 11])
mags = st.floats(0.0, 1.0)


def test_injection_config_validation():
    InjectionConfig.from_percent(2, 2.86)
    InjectionConfig.from_percent(5, 2.86)
    with pytest.raises(ContractViolation):
        InjectionConfig.from_percent(1, 2.86)
    with pytest.raises(ContractViolation):
        InjectionConfig.from_percent(6, 2.86)
    with pytest.raises(ContractViolation):
        InjectionConfig(n=4)
    with pytest.raises(ContractViolation):
        InjectionConfig(n=1)
    with pytest.raises(ContractViolation):
        InjectionConfig(mode="pulsating")
    InjectionConfig.from_percent(10, 2.86, n=4, allow_override=True)


def test_current_reference_examples():
    assert hf.hf_current_reference(0.1, 5, 0.0).isclose(stationary(0.1, 0))


@given(mags, orders, thetas)
def test_current_reference_is_a_circle_and_matches_clarke(M, n, th):
    ref = hf.hf_current_reference(M, n, th)
    assert ref.magnitude == pytest.approx(M, abs=1e-12)
    assert mm.clarke(hf.hf_current_reference_abc(M, n, th)).isclose(ref, atol=1e-12)


def test_flux_reference_examples(params):
    assert hf.hf_flux_reference(0.1, 5, 0.0, params).isclose(stationary(0.1 * params.L_d, 0))
    assert hf.hf_flux_reference(0.1, 5, 0.0, params).isclose(stationary(1.441e-3, 0), atol=1e-15)


def test_flux_reference_is_inductance_matrix_times_current(params, rng):
    for th in rng.uniform(0, 2 * math.pi, 1000):
        a = mm.incremental_inductance(th, params) @ hf.hf_current_reference(0.1, 5, th).as_array()
        b = hf.hf_flux_reference(0.1, 5, th, params).as_array()
        assert np.abs(a - b).max() < 1e-12


@given(st.floats(0.01, 1.0), orders, thetas)
def test_flux_reference_stays_in_rosette(M, n, th):
    p = MachineParams()
    mag = hf.hf_flux_reference(M, n, th, p).magnitude
    assert M * (p.sigma_L - abs(p.delta_L)) - 1e-12 <= mag <= M * (p.sigma_L + abs(p.delta_L)) + 1e-12


def test_torque_reference_examples(params):
    zero = stationary(0, 0)
    n, M = 5, 0.1
    assert hf.hf_torque_reference(M, n, 0.0, zero, params) == pytest.approx(0.0, abs=1e-15)
    th = math.pi / 2 / (n - 1)
    assert hf.hf_torque_reference(M, n, th, zero, params) == pytest.approx(1.5 * 2 * M * params.lambda_pm)


def test_torque_reference_is_linearized_torque_change(params, rng):
    # derived from the linearization of (3/2)p(lambda x i) with the flux offset
    # from the inductance matrix; confirms the minus sign of the flux offset
    for th, ia, ib in rng.uniform(-3, 3, (500, 3)):
        i = stationary(ia, ib)
        lam = mm.flux_linkage_stationary(th, i, params)
        di = hf.hf_current_reference(0.1, 5, th)
        dl = hf.hf_flux_reference(0.1, 5, th, params)
        expected = 1.5 * params.pole_pairs * (lam.x1 * di.x2 - lam.x2 * di.x1 + dl.x1 * i.x2 - dl.x2 * i.x1)
        assert hf.hf_torque_reference(0.1, 5, th, i, params) == pytest.approx(expected, abs=1e-12)


def _torque_orders(params, n, current):
    N = 720
    th = 2 * math.pi * np.arange(N) / N
    samples = np.array([hf.hf_torque_reference(0.1, n, t, current(t), params) for t in th])
    amps = hf.harmonic_amplitudes(samples, range(0, 40))
    total = sum(amps.values())
    return {k for k, a in amps.items() if a > 0.01 * total}


@pytest.mark.parametrize("n", [5, 7, 9])
def test_torque_reference_spectrum_unbalanced_fundamental(params, n):
    # each axis a pure fundamental sinusoid with its own amplitude and phase
    cur = lambda t: stationary(2.86 * math.cos(t + 1.2), 1.7 * math.sin(t - 0.4))
    assert _torque_orders(params, n, cur) == {n - 1, n - 3}


@pytest.mark.parametrize("n", [5, 7, 9])
def test_torque_reference_spectrum_balanced_fundamental(params, n):
    # for a positive-sequence current the saliency terms merge into order n-1
    cur = lambda t: stationary(2.86 * math.cos(t + 1.2), 2.86 * math.sin(t + 1.2))
    assert _torque_orders(params, n, cur) == {n - 1}


def test_small_signal_oracle_examples(params):
    n = 5
    w = 1.0 / (n * params.sigma_L)
    assert hf.small_signal_voltage_oracle(stationary(0, 0), w, n, 2, 2, params).isclose(stationary(0, 0))
    assert hf.small_signal_voltage_oracle(stationary(1, 0), w, n, 2, 2, params).isclose(stationary(2, 1))


@given(st.floats(0.1, 20), st.floats(1, 500), thetas)
def test_small_signal_oracle_phase_lead(R, w, th):
    p = MachineParams()
    n = 5
    di = hf.hf_current_reference(1.0, n, th)
    dv = hf.small_signal_voltage_oracle(di, w, n, R, R, p)
    lead = math.remainder(dv.angle - di.angle, 2 * math.pi)
    assert lead == pytest.approx(math.atan2(n * w * p.sigma_L, R), abs=1e-9)


def test_full_small_signal_voltage_examples(params):
    hp = HfResistanceParams(2.85, 3.0, 3.0)
    n, M = 5, 0.1
    th, w = 0.8, 125.0
    di = hf.hf_current_reference(M, n, th)
    # no speed: resistive only
    assert hf.full_small_signal_voltage(th, 0.0, M, n, di, hp, params).isclose(
        stationary(hp.R_alpha * di.x1, hp.R_beta * di.x2))
    # no saliency: the (n-2) term vanishes and the result is the R-L response
    iso = MachineParams(L_d=0.02, L_q=0.02)
    got = hf.full_small_signal_voltage(th, w, M, n, di, hp, iso)
    assert got.isclose(hf.small_signal_voltage_oracle(di, w, n, hp.R_d, hp.R_q, iso), atol=1e-12)


def test_full_small_signal_voltage_is_derivative_of_flux_offset(params):
    hp = HfResistanceParams(2.85, 1.0, 1.0)
    n, M, w, h = 5, 0.1, 125.0, 1e-7
    for th in np.linspace(0, 2 * math.pi, 50):
        dl = lambda t: hf.hf_flux_reference(M, n, t, params).as_array()
        deriv = (dl(th + w * h) - dl(th - w * h)) / (2 * h)
        di = hf.hf_current_reference(M, n, th)
        expected = hp.R_alpha * di.as_array() + deriv
        got = hf.full_small_signal_voltage(th, w, M, n, di, hp, params).as_array()
        np.testing.assert_allclose(got, expected, atol=1e-6)


@pytest.mark.parametrize("n", [5, 7])
def test_full_small_signal_voltage_spectrum(params, n):
    hp = HfResistanceParams(2.85, 3.0, 3.0)
    N = 720
    th = 2 * math.pi * np.arange(N) / N
    vals = np.array([hf.full_small_signal_voltage(t, 125.0, 0.1, n, hf.hf_current_reference(0.1, n, t), hp,
                                                  params).as_array() for t in th])
    # complex space vector separates forward and backward rotation
    spectrum = np.fft.fft(vals[:, 0] + 1j * vals[:, 1]) / N
    mags = np.abs(spectrum)
    present = {k if k < N // 2 else k - N for k in np.nonzero(mags > 0.01 * mags.max())[0]}
    assert present == {n, -(n - 2)}


def test_resistance_params():
    hp = HfResistanceParams(2.85, 3.0, 3.5)
    assert (hp.R_alpha, hp.R_beta) == (5.85, 6.35)
    assert (hp.R_d, hp.R_q) == (hp.R_alpha, hp.R_beta)
    with pytest.raises(ContractViolation):
        HfResistanceParams(2.85, -1.0, 0.0)


def test_injection_active_examples():
    cfg = InjectionConfig(on_duration=15.0, period=600.0)
    assert hf.injection_active(0.0, cfg) == (True, 0.0)
    assert hf.injection_active(15.0, cfg) == (False, None)
    active, phase = hf.injection_active(600.0, cfg)
    assert active and phase == pytest.approx(0.0)
    assert hf.injection_active(14.99, cfg)[0]
    assert not hf.injection_active(300.0, cfg)[0]
    late = InjectionConfig(on_duration=15.0, period=45.0, start=1.0)
    assert not hf.injection_active(0.5, late)[0]
    assert hf.injection_active(46.0, late)[0]
    with pytest.raises(ContractViolation):
        hf.injection_active(-1.0, cfg)


@given(st.floats(0, 5000))
def test_injection_active_phase_is_within_window(t):
    cfg = InjectionConfig(on_duration=15.0, period=45.0, start=1.0)
    active, phase = hf.injection_active(t, cfg)
    if active:
        assert 0.0 <= phase < 15.0


def test_window_steps():
    cfg = InjectionConfig(on_duration=15.0, period=45.0, start=1.0)
    assert hf.window_steps(cfg, 50e-6) == (20000, 300000, 900000)
    with pytest.raises(ContractViolation):
        hf.window_steps(InjectionConfig(start=1e-5), 50e-6)


def test_apply_injection():
    base = DriveReferences(0.468, 3.0)
    terms = HfTerms(stationary(1e-3, 2e-3), 0.25)
    torque = hf.apply_injection(hf.TORQUE, base, terms)
    assert torque.lambda_ref == base.lambda_ref and torque.dlam == base.dlam
    assert torque.T_ref == pytest.approx(3.25)
    flux = hf.apply_injection(hf.ROTATING_FLUX, base, terms)
    assert flux.T_ref == base.T_ref and flux.lambda_ref == base.lambda_ref
    assert flux.dlam.isclose(terms.dlam)
    zero = HfTerms(stationary(0, 0), 0.0)
    for mode in hf.MODES:
        assert hf.apply_injection(mode, base, zero) == base
    with pytest.raises(ContractViolation):
        hf.apply_injection("other", base, terms)
