import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipmtherm import machine_model as mm
from ipmtherm.errors import ContractViolation, DomainError
from ipmtherm.machine_model import (ElectroMechState, MachineParams, MagnetHfModel, rotor, stationary)

angles = st.floats(-50, 50, allow_nan=False)
currents = st.floats(-20, 20, allow_nan=False)


def test_frame_tags_are_enforced():
    with pytest.raises(ContractViolation):
        stationary(1, 0) + rotor(1, 0)
    with pytest.raises(ContractViolation):
        mm.park(0.3, rotor(1, 0))
    with pytest.raises(ContractViolation):
        mm.inverse_park(0.3, stationary(1, 0))


def test_lambda_pm_fit_gives_rated_torque(params):
    assert params.lambda_pm == pytest.approx(745.7 / (1800 * 2 * math.pi / 60) / (1.5 * 2 * 2.86))
    assert params.rated_torque == pytest.approx(745.7 / (1800 * 2 * math.pi / 60))


def test_sigma_delta_inductances(params):
    assert params.sigma_L + params.delta_L == pytest.approx(params.L_d)
    assert params.sigma_L - params.delta_L == pytest.approx(params.L_q)
    assert params.delta_L < 0


@pytest.mark.parametrize("bad", [dict(R_s=0), dict(L_d=-1e-3), dict(J=0), dict(poles=3), dict(poles=0)])
def test_machine_params_validation(bad):
    with pytest.raises(ContractViolation):
        MachineParams(**bad)


# ----- loss and penetration formulas -----

def test_eddy_loss_zero_field():
    assert mm.eddy_loss_density(1e6, 300.0, 0.01, 0.0) == 0.0


def test_eddy_loss_worked_value():
    sigma, w, d, B = 7.143e5, 2 * math.pi * 300, 0.01, 0.1
    expected = sigma * w ** 2 * d ** 2 * B ** 2 / 12
    assert mm.eddy_loss_density(sigma, w, d, B) == pytest.approx(expected, rel=1e-12)
    assert mm.eddy_loss_density(sigma, w, d, B) == pytest.approx(2.11e5, rel=5e-3)


@given(st.floats(1e3, 1e7), st.floats(1, 1e4), st.floats(1e-4, 0.1), st.floats(1e-3, 2))
def test_eddy_loss_is_quadratic_in_each_of_omega_d_B(sigma, w, d, B):
    base = mm.eddy_loss_density(sigma, w, d, B)
    for args in ((sigma, 2 * w, d, B), (sigma, w, 2 * d, B), (sigma, w, d, 2 * B)):
        assert mm.eddy_loss_density(*args) == pytest.approx(4 * base, rel=1e-12)


@pytest.mark.parametrize("args", [(-1, 1, 1, 1), (1, -1, 1, 1), (1, 1, 0, 1), (1, 1, 1, math.nan), (0, 1, 1, 1)])
def test_eddy_loss_domain(args):
    with pytest.raises(DomainError):
        mm.eddy_loss_density(*args)


@pytest.mark.parametrize("f, depth_mm", [(300, 33.6), (420, 28.4), (540, 25.0)])
def test_skin_depth_quoted_values(f, depth_mm):
    got = mm.skin_depth(1.4e-6, 1.05 * mm.MU0, 2 * math.pi * f)
    assert abs(1e3 * got - depth_mm) <= 0.05


def test_reference_depths_share_a_60hz_fundamental():
    # back-solve the frequency of each reference depth; each lands on an odd harmonic of 60 Hz
    for depth, order in ((33.6e-3, 5), (28.4e-3, 7), (25.0e-3, 9)):
        f = 2 * 1.4e-6 / (1.05 * mm.MU0 * depth ** 2) / (2 * math.pi)
        assert f / order == pytest.approx(60.0, rel=0.01)


@given(st.floats(1e-8, 1e-4), st.floats(1e-7, 1e-3), st.floats(1, 1e5))
def test_skin_depth_halves_when_omega_quadruples(rho, mu, w):
    assert mm.skin_depth(rho, mu, 4 * w) == pytest.approx(0.5 * mm.skin_depth(rho, mu, w), rel=1e-12)


def test_skin_depth_domain():
    with pytest.raises(DomainError):
        mm.skin_depth(1e-6, mm.MU0, 0.0)
    with pytest.raises(DomainError):
        mm.skin_depth(0.0, mm.MU0, 1.0)


def test_equivalent_slip_examples():
    assert mm.equivalent_slip(1) == 0.0
    assert mm.equivalent_slip(5) == pytest.approx(0.8)
    with pytest.raises(DomainError):
        mm.equivalent_slip(0.5)


@given(st.floats(1, 1e3), st.floats(1e-3, 1e3))
def test_equivalent_slip_increasing_and_bounded(n, dn):
    a, b = mm.equivalent_slip(n), mm.equivalent_slip(n + dn)
    assert 0 <= a < 1 and 0 <= b < 1
    assert b > a


def test_magnet_hf_model():
    with pytest.raises(ContractViolation):
        MagnetHfModel(R_mag0=0.0)
    with pytest.raises(ContractViolation):
        MagnetHfModel(R_mag0=1.0, L_m=-1.0)
    model = MagnetHfModel(R_mag0=3.0, L_lmag=1e-3, L_ls=2e-3, L_m=20e-3)
    w = 2 * math.pi * 100
    assert model.impedance(w, 0.0, 2.85) == pytest.approx(2.85 + 1j * w * 22e-3)
    # any slip adds a positive resistive part from the magnet branch
    for slip in (0.2, 0.5, 0.8):
        assert model.impedance(w, slip, 2.85).real > 2.85
    # without the magnetizing branch only the stator branch remains
    assert MagnetHfModel(R_mag0=3.0, L_ls=2e-3).impedance(w, 0.8, 2.85) == pytest.approx(2.85 + 1j * w * 2e-3)


# ----- transforms -----

def test_park_examples():
    assert mm.park(0.0, stationary(1, 0)).isclose(rotor(1, 0))
    assert mm.park(math.pi / 2, stationary(1, 0)).isclose(rotor(0, -1))


def test_park_matrix_orthogonal_at_1000_angles(rng):
    for th in rng.uniform(-100, 100, 1000):
        a = mm.park(th, stationary(1, 0)).as_array()
        b = mm.park(th, stationary(0, 1)).as_array()
        T = np.column_stack([a, b])
        assert np.abs(T.T @ T - np.eye(2)).max() < 1e-12


@given(angles, currents, currents)
def test_park_round_trip(th, a, b):
    v = stationary(a, b)
    assert mm.inverse_park(th, mm.park(th, v)).isclose(v, atol=1e-12 * (1 + abs(a) + abs(b)))


def test_clarke_examples(rng):
    M = 0.2
    assert mm.clarke((M, -M / 2, -M / 2)).isclose(stationary(M, 0))
    assert mm.clarke((0, 0, 0)).isclose(stationary(0, 0))
    for nth in rng.uniform(0, 2 * math.pi, 100):
        abc = [M * math.cos(nth - k * 2 * math.pi / 3) for k in range(3)]
        assert mm.clarke(abc).isclose(stationary(M * math.cos(nth), M * math.sin(nth)), atol=1e-14)


@given(currents, currents, currents)
def test_clarke_discards_zero_sequence(a, b, c):
    z = 0.5 * (a + b + c)
    assert mm.clarke((a + z, b + z, c + z)).isclose(mm.clarke((a, b, c)), atol=1e-12)


@given(currents, currents)
def test_inverse_clarke_round_trip(a, b):
    v = stationary(a, b)
    ph = mm.inverse_clarke(v)
    assert abs(sum(ph)) < 1e-12
    assert mm.clarke(ph).isclose(v, atol=1e-12)


def test_wrap_angle():
    assert mm.wrap_angle(2 * math.pi) == 0.0
    assert mm.wrap_angle(-1e-3) == pytest.approx(2 * math.pi - 1e-3)
    assert 0 <= mm.wrap_angle(1e6) < 2 * math.pi


# ----- flux linkage and torque -----

def test_flux_rotor_examples(params):
    assert mm.flux_linkage_rotor(rotor(0, 0), params).isclose(rotor(params.lambda_pm, 0))
    assert mm.flux_linkage_rotor(rotor(1, 1), params).isclose(rotor(params.lambda_pm + 0.01441, 0.02792))


@given(currents, currents, currents, currents)
def test_flux_rotor_linear_in_current(a, b, c, d):
    p = MachineParams()
    f = lambda x, y: mm.flux_linkage_rotor(rotor(x, y), p).as_array() - [p.lambda_pm, 0]
    np.testing.assert_allclose(f(a + c, b + d), f(a, b) + f(c, d), atol=1e-12)


def test_flux_stationary_examples(params):
    assert mm.flux_linkage_stationary(0.0, stationary(1.5, 0), params).isclose(
        stationary(params.L_d * 1.5 + params.lambda_pm, 0))
    th = 1.1
    assert mm.flux_linkage_stationary(th, stationary(0, 0), params).isclose(
        stationary(params.lambda_pm * math.cos(th), params.lambda_pm * math.sin(th)))


def test_flux_stationary_matches_rotor_path_at_1000_points(params, rng):
    for th, a, b in rng.uniform(-10, 10, (1000, 3)):
        i = stationary(a, b)
        direct = mm.flux_linkage_stationary(th, i, params).as_array()
        via = mm.inverse_park(th, mm.flux_linkage_rotor(mm.park(th, i), params)).as_array()
        assert np.abs(direct - via).max() <= 1e-10 * max(1.0, np.abs(via).max())


@given(angles, currents, currents)
def test_current_from_flux_inverts_flux(th, a, b):
    p = MachineParams()
    i = stationary(a, b)
    back = mm.current_from_flux(th, mm.flux_linkage_stationary(th, i, p), p)
    assert back.isclose(i, atol=1e-9)


@given(angles, currents, currents)
def test_flux_splits_into_isotropic_and_position_parts(th, a, b):
    p = MachineParams()
    i = stationary(a, b)
    total = mm.flux_linkage_stationary(th, i, p).as_array()
    parts = p.sigma_L * i.as_array() + mm.position_dependent_flux(th, i, p).as_array()
    np.testing.assert_allclose(total, parts, atol=1e-12)


def test_torque_examples():
    assert mm.electromagnetic_torque(stationary(1, 0), stationary(0, 1), 4) == pytest.approx(3.0)
    assert mm.electromagnetic_torque(stationary(0.3, 0.4), stationary(0.6, 0.8), 4) == pytest.approx(0.0, abs=1e-15)


@given(currents, currents, currents, currents)
def test_torque_antisymmetric(a, b, c, d):
    x, y = stationary(a, b), stationary(c, d)
    assert mm.electromagnetic_torque(x, y, 4) == pytest.approx(-mm.electromagnetic_torque(y, x, 4), abs=1e-12)


def test_rated_current_on_q_axis_gives_rated_torque(params):
    th = 0.7
    i = mm.inverse_park(th, rotor(0, params.I_rated))
    lam = mm.flux_linkage_stationary(th, i, params)
    assert mm.electromagnetic_torque(lam, i, params.poles) == pytest.approx(params.rated_torque)


# ----- integration -----

def test_step_electrical_zero_net_emf_keeps_flux(params):
    s = ElectroMechState.from_current(stationary(1.0, -0.5), 0.4, 0.0, params)
    v = stationary(params.R_s * 1.0, params.R_s * -0.5)
    for _ in range(100):
        s = mm.step_electrical(s, v, 12.5e-6, params)
    assert s.lam.isclose(stationary(*mm.flux_linkage_stationary(0.4, stationary(1.0, -0.5), params).as_array()),
                         atol=1e-12)


def test_step_electrical_keeps_flux_current_relation(params, rng):
    s = ElectroMechState.from_current(stationary(2.0, 1.0), 0.3, 300.0, params)
    for va, vb in rng.uniform(-200, 200, (2000, 2)):
        s = mm.step_electrical(s, stationary(va, vb), 12.5e-6, params)
        assert mm.flux_linkage_stationary(s.theta, s.i, params).isclose(s.lam, atol=1e-12)


def test_step_electrical_passive_with_zero_voltage():
    p = MachineParams(lambda_pm=0.0)
    s = ElectroMechState.from_current(stationary(3.0, -2.0), 0.0, 0.0, p)
    energy = lambda st: 0.5 * float(st.lam.as_array() @ st.i.as_array())
    prev = energy(s)
    for _ in range(2000):
        s = mm.step_electrical(s, stationary(0, 0), 12.5e-6, p)
        e = energy(s)
        assert e < prev
        prev = e


def _integrate(p, dt, T, omega):
    s = ElectroMechState.from_current(stationary(1.0, 0.5), 0.2, omega, p)
    for k in range(int(round(T / dt))):
        t = k * dt
        v = stationary(100 * math.cos(377 * t), 100 * math.sin(377 * t))
        s = mm.step_electrical(s, v, dt, p)
    return s


def test_step_electrical_converges_under_step_refinement(params):
    # first-order scheme: against a 10x finer reference the error is proportional to
    # (dt - dt_ref), and the 12.5 us step stays within 0.5 % of the current scale
    T = 0.01
    ref = _integrate(params, 1.25e-6, T, 377.0)
    e1 = np.abs(_integrate(params, 12.5e-6, T, 377.0).i.as_array() - ref.i.as_array()).max()
    e2 = np.abs(_integrate(params, 6.25e-6, T, 377.0).i.as_array() - ref.i.as_array()).max()
    assert e1 < 5e-3 * ref.i.magnitude
    assert e1 / e2 == pytest.approx((12.5 - 1.25) / (6.25 - 1.25), rel=0.15)


def test_step_electrical_rejects_bad_step(params):
    s = ElectroMechState.from_current(stationary(0, 0), 0.0, 0.0, params)
    with pytest.raises(ContractViolation):
        mm.step_electrical(s, stationary(0, 0), 0.0, params)
    with pytest.raises(ContractViolation):
        mm.step_electrical(s, stationary(0, 0), 1e-4, params)
    with pytest.raises(ContractViolation):
        mm.step_electrical(s, rotor(0, 0), 1e-5, params)


def test_step_mechanical_examples():
    assert mm.step_mechanical(100.0, 2.0, 2.0, 0.005, 1e-3) == 100.0
    w = 0.0
    for _ in range(10):
        w = mm.step_mechanical(w, 1.0, 0.0, 0.005, 1e-4)
    assert w == pytest.approx(10 * 2 * 1.0 / 0.005 * 1e-4)
    # 1 N.m net for 1 ms with J = 0.005 gives 0.2 rad/s of mechanical speed
    assert mm.step_mechanical(0.0, 1.0, 0.0, 0.005, 1e-3, poles=4) / 2 == pytest.approx(0.2)
