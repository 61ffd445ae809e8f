"""High-frequency injection references and the small-signal voltage response.

An n-th order balanced current ``M e^{j n theta}`` is requested either as a
stator-flux offset (rotating-flux mode) or as a torque offset (torque mode).
The module also evaluates the small-signal voltage response used as an oracle
for the phasor pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ContractViolation
from .machine_model import STATIONARY, FrameVector, MachineParams, stationary

ROTATING_FLUX = "rotating_flux"
TORQUE = "torque"
MODES = (ROTATING_FLUX, TORQUE)

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class InjectionConfig:
    """Injection settings.

    ``M`` is the amplitude of the requested harmonic current (A). Windows are
    ``[start + k*period, start + k*period + on_duration)`` for k = 0, 1, ...
    By default ``M`` must lie within 2 % to 5 % of ``I_rated`` and ``n`` must
    be odd and at least 3; ``allow_override`` lifts both checks.
    """

    mode: str = ROTATING_FLUX
    M: float = 0.03 * 2.86
    n: int = 5
    on_duration: float = 15.0
    period: float = 600.0
    start: float = 0.0
    I_rated: float = 2.86
    allow_override: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolation(f"injection mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.M) and self.M >= 0):
            raise ContractViolation(f"M must be >= 0, got {self.M!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ContractViolation(f"harmonic order must be a positive integer, got {self.n!r}")
        if not (self.on_duration >= 0 and self.period > 0 and self.on_duration <= self.period):
            raise ContractViolation("need 0 <= on_duration <= period and period > 0")
        if self.start < 0:
            raise ContractViolation("start must be >= 0")
        if not self.allow_override:
            frac = self.M / self.I_rated
            if not (0.02 - 1e-12 <= frac <= 0.05 + 1e-12):
                raise ContractViolation(
                    f"M = {100 * frac:.2f} % of rated current is outside 2 %..5 %; set allow_override to force it")
            if self.n < 3 or self.n % 2 == 0:
                raise ContractViolation(f"harmonic order must be odd and >= 3, got {self.n}")

    @classmethod
    def from_percent(cls, magnitude_pct: float, I_rated: float, **kw) -> "InjectionConfig":
        return cls(M=magnitude_pct / 100.0 * I_rated, I_rated=I_rated, **kw)


@dataclass(frozen=True)
class HfResistanceParams:
    """Per-axis HF resistances seen at the injected harmonic.

    ``R_alpha``/``R_beta`` add the stator resistance to the stator-reflected
    rotor terms. ``R_d``/``R_q`` name the same totals in the small-signal
    R-L form (stationary axes, not rotor axes).
    """

    R_s: float
    R_rhf_alpha: float
    R_rhf_beta: float

    def __post_init__(self):
        if min(self.R_s, self.R_rhf_alpha, self.R_rhf_beta) < 0:
            raise ContractViolation("resistances must be >= 0")

    @property
    def R_alpha(self) -> float:
        return self.R_s + self.R_rhf_alpha

    @property
    def R_beta(self) -> float:
        return self.R_s + self.R_rhf_beta

    @property
    def R_d(self) -> float:
        return self.R_alpha

    @property
    def R_q(self) -> float:
        return self.R_beta


@dataclass(frozen=True)
class DriveReferences:
    """Flux and torque references handed to the DTC, plus an optional flux-vector offset."""

    lambda_ref: float
    T_ref: float
    dlam: FrameVector = field(default_factory=lambda: stationary(0.0, 0.0))


@dataclass(frozen=True)
class HfTerms:
    dlam: FrameVector
    dT: float


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _hf_flux(M, n, th, SL, DL):
    return (SL * M * math.cos(n * th) + DL * M * math.cos((n - 2) * th),
            SL * M * math.sin(n * th) - DL * M * math.sin((n - 2) * th))


@njit(cache=True)
def _hf_torque(M, n, th, ia, ib, DL, lam_pm, pole_pairs):
    return 1.5 * pole_pairs * M * (2.0 * DL * ib * math.cos((n - 2) * th)
                                   + 2.0 * DL * ia * math.sin((n - 2) * th)
                                   + lam_pm * math.sin((n - 1) * th))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def hf_current_reference(M: float, n: int, theta: float) -> FrameVector:
    """Balanced n-th order current offset (M cos n theta, M sin n theta)."""
    if M < 0:
        raise ContractViolation("M must be >= 0")
    return stationary(M * math.cos(n * theta), M * math.sin(n * theta))


def hf_current_reference_abc(M: float, n: int, theta: float):
    """Phase-domain form of the same offset."""
    return tuple(M * math.cos(n * theta - k * 2.0 * math.pi / 3.0) for k in range(3))


def hf_flux_reference(M: float, n: int, theta: float, params: MachineParams) -> FrameVector:
    """Flux offset that produces the n-th order current on a salient machine.

    It carries the n-th order term scaled by sigma_L and an (n-2)-th order
    counter-rotating term scaled by delta_L.
    """
    if M < 0:
        raise ContractViolation("M must be >= 0")
    if n < 3:
        raise ContractViolation("n must be >= 3")
    return stationary(*_hf_flux(M, n, theta, params.sigma_L, params.delta_L))


def hf_torque_reference(M: float, n: int, theta: float, i: FrameVector, params: MachineParams) -> float:
    """Torque offset that accompanies the n-th order current.

    ``(3/2)(poles/2) M {2 dL i_b cos((n-2)th) + 2 dL i_a sin((n-2)th) + lam_pm sin((n-1)th)}``
    """
    if M < 0:
        raise ContractViolation("M must be >= 0")
    if i.frame != STATIONARY:
        raise ContractViolation("current must be stationary-frame")
    return float(_hf_torque(M, n, theta, i.x1, i.x2, params.delta_L, params.lambda_pm, params.pole_pairs))


def small_signal_voltage_oracle(di_n: FrameVector, omega_r: float, n: int, R_d: float, R_q: float,
                                params: MachineParams) -> FrameVector:
    """R-L response ``diag(R_d, R_q) di + n omega_r sigma_L J di`` with J a +90 degree rotation."""
    if di_n.frame != STATIONARY:
        raise ContractViolation("current must be stationary-frame")
    x = n * omega_r * params.sigma_L
    return stationary(R_d * di_n.x1 - x * di_n.x2, R_q * di_n.x2 + x * di_n.x1)


def full_small_signal_voltage(theta: float, omega_r: float, M: float, n: int, di: FrameVector,
                              hf_params: HfResistanceParams, params: MachineParams) -> FrameVector:
    """Resistive drop plus the time derivative of the injected flux offset.

    The derivative contributes an n-th order term through sigma_L and an
    (n-2)-th order term through delta_L.
    """
    if di.frame != STATIONARY:
        raise ContractViolation("current must be stationary-frame")
    SL, DL = params.sigma_L, params.delta_L
    a = hf_params.R_alpha * di.x1 - n * SL * M * math.sin(n * theta) * omega_r \
        - (n - 2) * DL * M * math.sin((n - 2) * theta) * omega_r
    b = hf_params.R_beta * di.x2 + n * SL * M * math.cos(n * theta) * omega_r \
        - (n - 2) * DL * M * math.cos((n - 2) * theta) * omega_r
    return stationary(a, b)


def injection_active(t: float, config: InjectionConfig) -> tuple[bool, float | None]:
    """Whether ``t`` falls inside an injection window, and the time since that window opened."""
    if t < 0:
        raise ContractViolation("t must be >= 0")
    tr = t - config.start
    if tr < -_TIME_TOL or config.on_duration == 0:
        return False, None
    k = math.floor((tr + _TIME_TOL) / config.period)
    phase = max(tr - k * config.period, 0.0)
    if phase < config.on_duration - _TIME_TOL:
        return True, phase
    return False, None


def window_steps(config: InjectionConfig, control_period: float) -> tuple[int, int, int]:
    """Window start offset, on length and period in whole control steps."""
    def steps(x, name):
        k = round(x / control_period)
        if abs(k * control_period - x) > _TIME_TOL:
            raise ContractViolation(f"injection {name} = {x} s is not a whole number of control periods")
        return int(k)
    return steps(config.start, "start"), steps(config.on_duration, "on_duration"), steps(config.period, "period")


def apply_injection(mode: str, base: DriveReferences, hf: HfTerms) -> DriveReferences:
    """Superimpose the HF terms on the drive references.

    Rotating-flux mode shifts the flux reference vector and keeps the torque
    reference; torque mode shifts the torque reference and keeps the flux
    reference.
    """
    if mode == ROTATING_FLUX:
        return DriveReferences(base.lambda_ref, base.T_ref, base.dlam + hf.dlam)
    if mode == TORQUE:
        return DriveReferences(base.lambda_ref, base.T_ref + hf.dT, base.dlam)
    raise ContractViolation(f"unknown injection mode {mode!r}")


def harmonic_amplitudes(samples: np.ndarray, orders) -> dict:
    """Amplitude of integer harmonics of a signal sampled uniformly over exactly one fundamental period."""
    N = len(samples)
    spectrum = np.fft.rfft(samples) / N
    out = {}
    for k in orders:
        out[k] = float(abs(spectrum[k]) * (1 if k == 0 else 2))
    return out
