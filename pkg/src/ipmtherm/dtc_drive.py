"""Hysteresis direct torque control.

Two-level inverter model, stator-flux estimator, flux and torque hysteresis
comparators, the classic six-sector switching table, and the outer speed PI.

Sector convention: active vector ``k`` (1..6) points at ``(k-1)*60`` degrees
and sits in the middle of sector ``k``, so sector ``k`` covers
``[(k-1)*60 - 30, (k-1)*60 + 30)`` degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import ContractViolation
from .machine_model import STATIONARY, FrameVector, MachineParams, clarke, stationary


@dataclass(frozen=True)
class SwitchState:
    """Upper-switch states of the three inverter legs (1 = connected to +V_dc)."""

    s_a: int
    s_b: int
    s_c: int

    def __post_init__(self):
        for s in (self.s_a, self.s_b, self.s_c):
            if s not in (0, 1):
                raise ContractViolation(f"leg state must be 0 or 1, got {s!r}")

    @property
    def is_zero(self) -> bool:
        return self.s_a == self.s_b == self.s_c

    def as_tuple(self):
        return (self.s_a, self.s_b, self.s_c)


ZERO_LOW = SwitchState(0, 0, 0)
ZERO_HIGH = SwitchState(1, 1, 1)
# index 0 is vector 1
ACTIVE_VECTORS = (
    SwitchState(1, 0, 0),
    SwitchState(1, 1, 0),
    SwitchState(0, 1, 0),
    SwitchState(0, 1, 1),
    SwitchState(0, 0, 1),
    SwitchState(1, 0, 1),
)
ALL_STATES = (ZERO_LOW,) + ACTIVE_VECTORS + (ZERO_HIGH,)

# Same table as an int array for the kernel: row 0 = (0,0,0), rows 1..6 active, row 7 = (1,1,1).
SWITCH_TABLE = np.array([s.as_tuple() for s in ALL_STATES], dtype=np.int64)


@dataclass(frozen=True)
class DtcConfig:
    """Drive settings. Bands are half-widths of the hysteresis windows."""

    lambda_ref: float
    flux_band: float
    torque_band: float
    V_dc: float
    kp: float
    ki: float
    torque_limit: float
    estimator_corner_hz: float = 1.0
    estimator_clamp: float = 0.0

    def __post_init__(self):
        for name in ("lambda_ref", "flux_band", "torque_band", "V_dc", "torque_limit", "estimator_corner_hz"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ContractViolation(f"DtcConfig.{name} must be > 0, got {v!r}")
        if self.kp < 0 or self.ki < 0:
            raise ContractViolation("speed PI gains must be >= 0")
        if self.estimator_clamp == 0.0:
            object.__setattr__(self, "estimator_clamp", 1.2 * self.lambda_ref)
        if self.estimator_clamp <= self.lambda_ref:
            raise ContractViolation("estimator_clamp must exceed lambda_ref")

    @classmethod
    def defaults(cls, params: MachineParams, **overrides) -> "DtcConfig":
        """Defaults: flux at rated current, 2 % flux band, 4 % torque band."""
        lam_ref = math.hypot(params.lambda_pm, params.L_q * params.I_rated)
        T_r = params.rated_torque
        base = dict(
            lambda_ref=lam_ref,
            flux_band=0.02 * lam_ref,
            torque_band=0.04 * T_r,
            V_dc=325.0,
            kp=0.1,
            ki=2.0,
            torque_limit=2.0 * T_r,
        )
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class FluxEstimatorState:
    """Flux estimator built from two first-order lags sharing one corner.

    ``lam = y_emf + y_comp`` where ``y_emf`` low-passes the back-EMF and
    ``y_comp`` low-passes the magnitude-clamped estimate. While the estimate
    is inside the clamp the sum behaves as a pure integrator; outside it, the
    excess decays at the corner frequency, which bounds DC drift.
    """

    y_emf: FrameVector
    y_comp: FrameVector

    @property
    def lam(self) -> FrameVector:
        return self.y_emf + self.y_comp

    @classmethod
    def start(cls, lam0: FrameVector) -> "FluxEstimatorState":
        return cls(stationary(0.0, 0.0), lam0)


@dataclass(frozen=True)
class SpeedRegulatorState:
    integrator: float = 0.0


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _phase_to_ab(sa, sb, sc, vdc):
    va = 2.0 * vdc / 3.0 * (sa - 0.5 * (sb + sc))
    vb = 2.0 * vdc / 3.0 * (sb - 0.5 * (sa + sc))
    vc = 2.0 * vdc / 3.0 * (sc - 0.5 * (sa + sb))
    alpha = 2.0 / 3.0 * (va - 0.5 * vb - 0.5 * vc)
    beta = 2.0 / 3.0 * (math.sqrt(3.0) / 2.0) * (vb - vc)
    return alpha, beta


@njit(cache=True)
def _estimate_flux(y1a, y1b, y2a, y2b, ea, eb, wc, clamp, dt):
    la = y1a + y2a
    lb = y1b + y2b
    mag = math.sqrt(la * la + lb * lb)
    if mag > clamp:
        sa = la * clamp / mag
        sb = lb * clamp / mag
    else:
        sa = la
        sb = lb
    y1a += (ea - wc * y1a) * dt
    y1b += (eb - wc * y1b) * dt
    y2a += wc * (sa - y2a) * dt
    y2b += wc * (sb - y2b) * dt
    return y1a, y1b, y2a, y2b


@njit(cache=True)
def _hyst_flux(err, band, prev):
    if err > band:
        return 1
    if err < -band:
        return -1
    return prev


@njit(cache=True)
def _hyst_torque(err, band, prev):
    if err > band:
        return 1
    if err < -band:
        return -1
    if prev == 1 and err <= 0.0:
        return 0
    if prev == -1 and err >= 0.0:
        return 0
    return prev


@njit(cache=True)
def _sector(la, lb):
    ang = math.atan2(lb, la)
    k = int(math.floor((ang + math.pi / 6.0) / (math.pi / 3.0))) % 6
    return k + 1


@njit(cache=True)
def _select(sector, dphi, dtau, prev_row):
    """Row index into SWITCH_TABLE (0 and 7 are zero vectors)."""
    if dtau == 0:
        # zero vector reachable with one commutation from the last state:
        # odd active vectors have one high leg, even ones have two
        if prev_row == 0 or prev_row == 7:
            return prev_row
        if prev_row % 2 == 1:
            return 0
        return 7
    if dphi == 1:
        k = sector + 1 if dtau == 1 else sector - 1
    else:
        k = sector + 2 if dtau == 1 else sector - 2
    return (k - 1) % 6 + 1


@njit(cache=True)
def _speed_pi(err_mech, integ, kp, ki, limit, dt):
    u = kp * err_mech + integ
    if u > limit:
        out = limit
        if err_mech < 0.0:
            integ += ki * err_mech * dt
    elif u < -limit:
        out = -limit
        if err_mech > 0.0:
            integ += ki * err_mech * dt
    else:
        out = u
        integ += ki * err_mech * dt
    return out, integ


@njit(cache=True)
def _vector_torque_offset(th, dla, dlb, la, lb, ia, ib, L_d, L_q, pole_pairs):
    """Torque change implied by moving the flux vector by (dla, dlb).

    The current change follows from the inverse incremental inductance matrix
    at rotor angle ``th``; the result is the linearized change of
    (3/2) p (lambda x i).
    """
    SL = 0.5 * (L_d + L_q)
    DL = 0.5 * (L_d - L_q)
    c2 = math.cos(2.0 * th)
    s2 = math.sin(2.0 * th)
    det = L_d * L_q
    dia = ((SL - DL * c2) * dla - DL * s2 * dlb) / det
    dib = (-DL * s2 * dla + (SL + DL * c2) * dlb) / det
    return 1.5 * pole_pairs * (dla * ib + la * dib - dlb * ia - lb * dia)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def inverter_voltage(sw: SwitchState, V_dc: float) -> FrameVector:
    """Stationary-frame stator voltage applied by a two-level inverter."""
    if not V_dc > 0:
        raise ContractViolation("V_dc must be > 0")
    phases = [(2.0 * V_dc / 3.0) * (s - 0.5 * (o1 + o2)) for s, o1, o2 in
              ((sw.s_a, sw.s_b, sw.s_c), (sw.s_b, sw.s_a, sw.s_c), (sw.s_c, sw.s_a, sw.s_b))]
    return clarke(phases)


def estimate_flux(state: FluxEstimatorState, v: FrameVector, i: FrameVector, R_s: float, dt: float,
                  corner_hz: float = 1.0, clamp: float = math.inf) -> FluxEstimatorState:
    """One update of the stator-flux estimator with back-EMF ``v - R_s i``."""
    if not dt > 0:
        raise ContractViolation("dt must be > 0")
    if v.frame != STATIONARY or i.frame != STATIONARY:
        raise ContractViolation("estimator inputs must be stationary-frame vectors")
    wc = 2.0 * math.pi * corner_hz
    y1a, y1b, y2a, y2b = _estimate_flux(state.y_emf.x1, state.y_emf.x2, state.y_comp.x1, state.y_comp.x2,
                                        v.x1 - R_s * i.x1, v.x2 - R_s * i.x2, wc, clamp, dt)
    return FluxEstimatorState(stationary(y1a, y1b), stationary(y2a, y2b))


def hysteresis_flux(err: float, band: float, prev: int) -> int:
    """Two-level comparator with memory: +1 raises the flux, -1 lowers it."""
    if not band > 0:
        raise ContractViolation("band must be > 0")
    if prev not in (1, -1):
        raise ContractViolation("flux comparator state must be +1 or -1")
    return int(_hyst_flux(err, band, prev))


def hysteresis_torque(err: float, band: float, prev: int) -> int:
    """Three-level comparator.

    Leaves the outer band to +1/-1; drops to 0 once the error crosses zero
    from the side it was driven from; otherwise holds.
    """
    if not band > 0:
        raise ContractViolation("band must be > 0")
    if prev not in (1, 0, -1):
        raise ContractViolation("torque comparator state must be -1, 0 or +1")
    return int(_hyst_torque(err, band, prev))


def sector_of(lam: FrameVector) -> int:
    """Sector 1..6 containing the flux vector."""
    return int(_sector(lam.x1, lam.x2))


def select_vector(sector: int, dphi: int, dtau: int, prev: SwitchState | None = None) -> SwitchState:
    """Switching-table lookup.

    For ``dtau == 0`` the zero vector needing one leg commutation from
    ``prev`` is chosen, so successive zero vectors alternate between
    (0,0,0) and (1,1,1) as the active vectors alternate parity.
    """
    if sector not in range(1, 7):
        raise ContractViolation(f"sector must be 1..6, got {sector!r}")
    if dphi not in (1, -1) or dtau not in (1, 0, -1):
        raise ContractViolation("invalid comparator outputs")
    prev_row = 0 if prev is None else ALL_STATES.index(prev)
    return ALL_STATES[int(_select(sector, dphi, dtau, prev_row))]


def speed_regulator(omega_ref: float, omega: float, cfg: DtcConfig, state: SpeedRegulatorState,
                    dt: float) -> tuple[float, SpeedRegulatorState]:
    """Anti-windup PI on mechanical speed (rad/s); returns (torque reference, new state).

    The integrator is frozen while the output is clamped and the error would
    push it further into the limit.
    """
    if not dt > 0:
        raise ContractViolation("dt must be > 0")
    out, integ = _speed_pi(omega_ref - omega, state.integrator, cfg.kp, cfg.ki, cfg.torque_limit, dt)
    return float(out), replace(state, integrator=float(integ))


def flux_vector_torque_offset(theta: float, dlam: FrameVector, lam: FrameVector, i: FrameVector,
                              params: MachineParams) -> float:
    """Linearized torque change that accompanies a flux-vector offset ``dlam``."""
    return float(_vector_torque_offset(theta, dlam.x1, dlam.x2, lam.x1, lam.x2, i.x1, i.x2,
                                       params.L_d, params.L_q, params.pole_pairs))
