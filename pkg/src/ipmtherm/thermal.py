"""Resistance extraction, rotor-temperature estimation and the reference thermal plant.

The estimator side turns a voltage/current phasor pair into an HF resistance
and then into a magnet temperature, given the measured stator temperature.
The plant side is a two-node RC network (stator and rotor) whose node
temperatures set the resistances the simulated machine actually has.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dsp import PhasorEstimate
from .errors import ContractViolation, DomainError

PLAUSIBLE_RANGE_C = (-40.0, 250.0)


@dataclass(frozen=True)
class TempCoefficients:
    """Linear temperature models of the stator and the stator-reflected magnet resistance."""

    alpha_cu: float = 0.00393
    alpha_mag: float = 0.0012
    T0: float = 25.0
    R_s0: float = 2.85
    R_mag0: float = 3.0

    def __post_init__(self):
        for name in ("alpha_cu", "alpha_mag", "R_s0", "R_mag0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ContractViolation(f"TempCoefficients.{name} must be > 0, got {v!r}")
        if not math.isfinite(self.T0):
            raise ContractViolation("T0 must be finite")


@dataclass(frozen=True)
class ThermalState:
    """Node temperatures in degrees C."""

    T_s: float
    T_r: float
    T_amb: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.T_s, self.T_r, self.T_amb)):
            raise ContractViolation("temperatures must be finite")

    @classmethod
    def at_ambient(cls, T_amb: float) -> "ThermalState":
        return cls(T_amb, T_amb, T_amb)


@dataclass(frozen=True)
class ThermalPlantParams:
    """Two-node network: stator to ambient, rotor to stator, rotor to ambient.

    ``C_s`` and ``C_r`` are real-machine capacitances; the simulation divides
    them by ``compression`` so heating runs ``compression`` times faster while
    steady-state temperatures are unchanged.
    """

    C_s: float = 5000.0
    C_r: float = 2500.0
    R_sa: float = 0.45
    R_rs: float = 0.35
    R_ra: float = 1.2
    compression: float = 1.0

    def __post_init__(self):
        for name in ("C_s", "C_r", "R_sa", "R_rs", "R_ra", "compression"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ContractViolation(f"ThermalPlantParams.{name} must be > 0, got {v!r}")

    @property
    def C_s_eff(self) -> float:
        return self.C_s / self.compression

    @property
    def C_r_eff(self) -> float:
        return self.C_r / self.compression

    def conductance_matrix(self) -> np.ndarray:
        g_sa, g_rs, g_ra = 1 / self.R_sa, 1 / self.R_rs, 1 / self.R_ra
        return np.array([[g_sa + g_rs, -g_rs], [-g_rs, g_rs + g_ra]])

    def steady_state(self, P_cu: float, P_mag: float, T_amb: float) -> ThermalState:
        rise = np.linalg.solve(self.conductance_matrix(), np.array([P_cu, P_mag]))
        return ThermalState(T_amb + rise[0], T_amb + rise[1], T_amb)

    def max_stable_step(self) -> float:
        """Largest explicit-Euler step that keeps the update non-oscillatory."""
        g = self.conductance_matrix()
        return min(self.C_s_eff / g[0, 0], self.C_r_eff / g[1, 1])


class MagnetResistanceTable:
    """Stator-reflected magnet resistance at T0 as a function of shaft speed.

    Values between the configured speeds are linearly interpolated (the
    injected frequency is proportional to speed); outside the range the end
    values are held.
    """

    def __init__(self, speeds_rpm, values_ohm):
        s = np.asarray(speeds_rpm, dtype=float)
        v = np.asarray(values_ohm, dtype=float)
        if s.ndim != 1 or s.shape != v.shape or len(s) == 0:
            raise ContractViolation("speed and resistance lists must be equal-length and non-empty")
        if np.any(np.diff(s) <= 0):
            raise ContractViolation("speeds must be strictly increasing")
        if np.any(v <= 0):
            raise ContractViolation("magnet resistances must be > 0")
        self.speeds_rpm = s
        self.values_ohm = v

    def at(self, speed_rpm: float) -> float:
        return float(np.interp(speed_rpm, self.speeds_rpm, self.values_ohm))

    def __repr__(self):
        pairs = ", ".join(f"{a:g}:{b:g}" for a, b in zip(self.speeds_rpm, self.values_ohm))
        return f"MagnetResistanceTable({pairs})"


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _rotor_temperature(R_hf, T_s, alpha_cu, alpha_mag, T0, R_s0, R_mag0):
    return T0 + (R_hf - R_mag0 - R_s0 * (1.0 + alpha_cu * (T_s - T0))) / (alpha_mag * R_mag0)


@njit(cache=True)
def _thermal_euler(T_s, T_r, T_amb, P_cu, P_mag, C_s, C_r, R_sa, R_rs, R_ra, dt):
    q_rs = (T_r - T_s) / R_rs
    dTs = (P_cu - (T_s - T_amb) / R_sa + q_rs) / C_s
    dTr = (P_mag - q_rs - (T_r - T_amb) / R_ra) / C_r
    return T_s + dTs * dt, T_r + dTr * dt


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def hf_resistance(V: PhasorEstimate, I: PhasorEstimate, current_floor: float = 1e-6,
                  require_settled: bool = True) -> float | None:
    """Real part of V/I from two phasors, ``|V|/|I| cos(theta_i - theta_v)``.

    Returns ``None`` (estimate unavailable) when either phasor is unsettled or
    the current magnitude is at or below ``current_floor``.
    """
    if require_settled and not (V.settled and I.settled):
        return None
    if I.magnitude <= current_floor:
        return None
    return V.magnitude / I.magnitude * math.cos(I.angle - V.angle)


def stator_resistance_at(T_s: float, coeffs: TempCoefficients) -> float:
    return coeffs.R_s0 * (1.0 + coeffs.alpha_cu * (T_s - coeffs.T0))


def magnet_resistance_at(T_r: float, coeffs: TempCoefficients) -> float:
    return coeffs.R_mag0 * (1.0 + coeffs.alpha_mag * (T_r - coeffs.T0))


def rotor_temperature(R_hf: float, T_s: float, coeffs: TempCoefficients) -> float:
    """Magnet temperature implied by an HF resistance and the stator temperature.

    Inverts ``R_hf = R_s(T_s) + R_mag0 (1 + alpha_mag (T_r - T0))``. Results
    are not clamped; see :func:`in_plausible_range`.
    """
    if not R_hf > 0:
        raise DomainError(f"R_hf must be > 0, got {R_hf!r}")
    return float(_rotor_temperature(R_hf, T_s, coeffs.alpha_cu, coeffs.alpha_mag, coeffs.T0,
                                    coeffs.R_s0, coeffs.R_mag0))


def in_plausible_range(T: float) -> bool:
    lo, hi = PLAUSIBLE_RANGE_C
    return lo <= T <= hi


def step_thermal(state: ThermalState, P_cu: float, P_mag: float, plant: ThermalPlantParams,
                 dt: float) -> ThermalState:
    """Advance the two-node network by ``dt`` with constant losses.

    Explicit Euler, split into equal substeps no longer than a tenth of the
    stability limit.
    """
    if not dt > 0:
        raise ContractViolation("dt must be > 0")
    if P_cu < 0 or P_mag < 0:
        raise ContractViolation("losses must be >= 0")
    n = max(1, math.ceil(dt / (0.1 * plant.max_stable_step())))
    h = dt / n
    T_s, T_r = state.T_s, state.T_r
    for _ in range(n):
        T_s, T_r = _thermal_euler(T_s, T_r, state.T_amb, P_cu, P_mag, plant.C_s_eff, plant.C_r_eff,
                                  plant.R_sa, plant.R_rs, plant.R_ra, h)
    return ThermalState(float(T_s), float(T_r), state.T_amb)
