"""Interior permanent-magnet machine model.

Electrical and mechanical equations in the stationary (alpha, beta) and rotor
(d, q) frames, plus the magnet eddy-current physics used to reason about the
high-frequency resistance: eddy loss density, skin depth and equivalent slip.

Scalar ``@njit`` kernels (leading underscore) are shared with the closed-loop
simulation kernel so that the object API and the fast path evaluate the same
arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ContractViolation, DomainError

STATIONARY = "stationary"
ROTOR = "rotor"
_FRAMES = (STATIONARY, ROTOR)

TWO_PI = 2.0 * math.pi
MU0 = 4e-7 * math.pi


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameVector:
    """Two-component quantity tagged with its reference frame.

    ``x1``/``x2`` are (alpha, beta) in the stationary frame and (d, q) in the
    rotor frame. Arithmetic between vectors of different frames raises
    :class:`ContractViolation`.
    """

    x1: float
    x2: float
    frame: str = STATIONARY

    def __post_init__(self):
        if self.frame not in _FRAMES:
            raise ContractViolation(f"unknown frame tag {self.frame!r}")

    def _check(self, other):
        if not isinstance(other, FrameVector):
            return NotImplemented
        if other.frame != self.frame:
            raise ContractViolation(f"mixed-frame arithmetic: {self.frame} vs {other.frame}")
        return None

    def __add__(self, other):
        bad = self._check(other)
        if bad is NotImplemented:
            return bad
        return FrameVector(self.x1 + other.x1, self.x2 + other.x2, self.frame)

    def __sub__(self, other):
        bad = self._check(other)
        if bad is NotImplemented:
            return bad
        return FrameVector(self.x1 - other.x1, self.x2 - other.x2, self.frame)

    def __neg__(self):
        return FrameVector(-self.x1, -self.x2, self.frame)

    def __mul__(self, k):
        if isinstance(k, FrameVector):
            return NotImplemented
        return FrameVector(self.x1 * k, self.x2 * k, self.frame)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return FrameVector(self.x1 / k, self.x2 / k, self.frame)

    @property
    def magnitude(self) -> float:
        return math.hypot(self.x1, self.x2)

    @property
    def angle(self) -> float:
        return math.atan2(self.x2, self.x1)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def isclose(self, other: "FrameVector", atol: float = 1e-12) -> bool:
        self._check(other)
        return abs(self.x1 - other.x1) <= atol and abs(self.x2 - other.x2) <= atol


def stationary(x1: float, x2: float) -> FrameVector:
    return FrameVector(float(x1), float(x2), STATIONARY)


def rotor(x1: float, x2: float) -> FrameVector:
    return FrameVector(float(x1), float(x2), ROTOR)


def fit_lambda_pm(P_rated: float, omega_rated: float, poles: int, I_rated: float) -> float:
    """Magnet flux that gives rated torque at rated peak current with i_d = 0."""
    T_rated = P_rated / omega_rated
    return T_rated / (1.5 * (poles / 2) * I_rated)


@dataclass(frozen=True)
class MachineParams:
    """Electrical and mechanical constants of the machine.

    Defaults describe the 1 hp, 4-pole laboratory IPM machine. ``lambda_pm``
    is not a nameplate value; its default is fitted with :func:`fit_lambda_pm`
    so that rated current in the q axis produces rated torque.
    """

    R_s: float = 2.85
    L_d: float = 14.41e-3
    L_q: float = 27.92e-3
    lambda_pm: float = field(default_factory=lambda: fit_lambda_pm(745.7, 1800 * TWO_PI / 60, 4, 2.86))
    poles: int = 4
    J: float = 0.0050
    V_rated: float = 230.0
    I_rated: float = 2.86
    omega_rated: float = 1800 * TWO_PI / 60
    P_rated: float = 745.7

    def __post_init__(self):
        checks = {
            "R_s": self.R_s > 0,
            "L_d": self.L_d > 0,
            "L_q": self.L_q > 0,
            "J": self.J > 0,
            "lambda_pm": self.lambda_pm >= 0,
            "I_rated": self.I_rated > 0,
            "omega_rated": self.omega_rated > 0,
        }
        for name, ok in checks.items():
            if not (ok and math.isfinite(getattr(self, name))):
                raise ContractViolation(f"MachineParams.{name} must be finite and positive, got {getattr(self, name)!r}")
        if int(self.poles) != self.poles or self.poles < 2 or self.poles % 2:
            raise ContractViolation(f"MachineParams.poles must be an even integer >= 2, got {self.poles!r}")

    @property
    def sigma_L(self) -> float:
        """Mean inductance (L_d + L_q)/2."""
        return 0.5 * (self.L_d + self.L_q)

    @property
    def delta_L(self) -> float:
        """Half inductance difference (L_d - L_q)/2; negative for this machine."""
        return 0.5 * (self.L_d - self.L_q)

    @property
    def pole_pairs(self) -> float:
        return self.poles / 2

    @property
    def rated_torque(self) -> float:
        return 1.5 * self.pole_pairs * self.lambda_pm * self.I_rated


@dataclass(frozen=True)
class ElectroMechState:
    """Electrical state in the stationary frame plus rotor angle and speed.

    ``theta`` is the electrical angle in [0, 2*pi); ``omega_r`` is electrical
    rad/s.
    """

    i: FrameVector
    lam: FrameVector
    theta: float
    omega_r: float

    @classmethod
    def from_current(cls, i: FrameVector, theta: float, omega_r: float, params: MachineParams) -> "ElectroMechState":
        lam = flux_linkage_stationary(theta, i, params)
        return cls(i, lam, wrap_angle(theta), float(omega_r))


@dataclass(frozen=True)
class MagnetHfModel:
    """High-frequency equivalent circuit of the machine seen from the stator.

    A stator branch ``R_s + j w L_ls`` feeds the magnetizing inductance ``L_m``
    in parallel with the magnet branch ``R_mag/s + j w L_lmag``, where ``s`` is
    the equivalent slip of the injected harmonic.
    """

    R_mag0: float
    L_lmag: float = 0.0
    L_ls: float = 0.0
    L_m: float = 0.0

    def __post_init__(self):
        if not self.R_mag0 > 0:
            raise ContractViolation("MagnetHfModel.R_mag0 must be > 0")
        if min(self.L_lmag, self.L_ls, self.L_m) < 0:
            raise ContractViolation("MagnetHfModel inductances must be >= 0")

    def impedance(self, omega: float, slip: float, R_s: float, R_mag: float | None = None) -> complex:
        """Input impedance of the circuit at angular frequency ``omega``.

        With zero slip the magnet branch is open and only ``L_m`` remains.
        """
        R_mag = self.R_mag0 if R_mag is None else R_mag
        z_stator = R_s + 1j * omega * self.L_ls
        z_m = 1j * omega * self.L_m
        if slip == 0.0:
            return z_stator + z_m
        z_mag = R_mag / slip + 1j * omega * self.L_lmag
        if self.L_m == 0.0:
            return z_stator
        return z_stator + z_m * z_mag / (z_m + z_mag)


# ---------------------------------------------------------------------------
# Physics formulas
# ---------------------------------------------------------------------------


def _finite_nonneg(name, x):
    if not math.isfinite(x) or x < 0:
        raise DomainError(f"{name} must be finite and >= 0, got {x!r}")


def eddy_loss_density(sigma: float, omega: float, d: float, B: float) -> float:
    """Eddy-current loss per unit volume of a thin conducting plate.

    ``sigma * omega**2 * d**2 * B**2 / 12`` in W/m^3 for conductivity
    ``sigma`` (S/m), field angular frequency ``omega`` (rad/s), plate
    thickness ``d`` (m) and flux density amplitude ``B`` (T).
    """
    for name, x in (("sigma", sigma), ("omega", omega), ("d", d), ("B", B)):
        _finite_nonneg(name, x)
    if sigma == 0 or d == 0:
        raise DomainError("sigma and d must be > 0")
    return sigma * omega * omega * d * d * B * B / 12.0


def skin_depth(rho: float, mu: float, omega: float) -> float:
    """Penetration depth sqrt(2 rho / (omega mu)) in metres."""
    for name, x in (("rho", rho), ("mu", mu), ("omega", omega)):
        _finite_nonneg(name, x)
    if rho == 0 or mu == 0:
        raise DomainError("rho and mu must be > 0")
    if omega == 0:
        raise DomainError("skin depth is infinite at omega = 0")
    return math.sqrt(2.0 * rho / (omega * mu))


def equivalent_slip(n: float) -> float:
    """Slip (n - 1)/n between an n-th order stator field and the rotor."""
    if not math.isfinite(n) or n < 1:
        raise DomainError(f"harmonic order must be >= 1, got {n!r}")
    return (n - 1.0) / n


# ---------------------------------------------------------------------------
# Scalar kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _park(th, a, b):
    c = math.cos(th)
    s = math.sin(th)
    return c * a + s * b, -s * a + c * b


@njit(cache=True)
def _inverse_park(th, d, q):
    c = math.cos(th)
    s = math.sin(th)
    return c * d - s * q, s * d + c * q


@njit(cache=True)
def _flux_stationary(th, ia, ib, SL, DL, lam_pm):
    c2 = math.cos(2.0 * th)
    s2 = math.sin(2.0 * th)
    la = (SL + DL * c2) * ia + DL * s2 * ib + lam_pm * math.cos(th)
    lb = DL * s2 * ia + (SL - DL * c2) * ib + lam_pm * math.sin(th)
    return la, lb


@njit(cache=True)
def _current_from_flux(th, la, lb, L_d, L_q, lam_pm):
    c = math.cos(th)
    s = math.sin(th)
    ld = c * la + s * lb
    lq = -s * la + c * lb
    i_d = (ld - lam_pm) / L_d
    i_q = lq / L_q
    return c * i_d - s * i_q, s * i_d + c * i_q


@njit(cache=True)
def _position_flux(th, ia, ib, DL, lam_pm):
    """Part of the stator flux that depends on rotor position: saliency plus magnet."""
    c2 = math.cos(2.0 * th)
    s2 = math.sin(2.0 * th)
    return DL * (c2 * ia + s2 * ib) + lam_pm * math.cos(th), DL * (s2 * ia - c2 * ib) + lam_pm * math.sin(th)


@njit(cache=True)
def _torque(la, lb, ia, ib, pole_pairs):
    return 1.5 * pole_pairs * (la * ib - lb * ia)


@njit(cache=True)
def _wrap(th):
    th = th % (2.0 * math.pi)
    if th >= 2.0 * math.pi:
        th = 0.0
    return th


@njit(cache=True)
def _eddy_branch(th, ia, ib, lp_d, lp_q, R_branch, wc_dt):
    """Magnet eddy branch: rotor-frame high-pass of the current times R_branch.

    Returns the stationary-frame voltage drop and the updated low-pass states.
    Components that are stationary in the rotor frame (zero slip) see no drop.
    """
    i_d, i_q = _park(th, ia, ib)
    hd = i_d - lp_d
    hq = i_q - lp_q
    lp_d += wc_dt * hd
    lp_q += wc_dt * hq
    va, vb = _inverse_park(th, R_branch * hd, R_branch * hq)
    return va, vb, lp_d, lp_q, hd, hq


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    return float(_wrap(float(theta)))


def _require(v: FrameVector, frame: str, what: str):
    if not isinstance(v, FrameVector) or v.frame != frame:
        got = getattr(v, "frame", type(v).__name__)
        raise ContractViolation(f"{what} must be a {frame}-frame FrameVector, got {got}")


def park(theta: float, v: FrameVector) -> FrameVector:
    """Rotate a stationary-frame vector into the rotor frame."""
    _require(v, STATIONARY, "park input")
    return rotor(*_park(theta, v.x1, v.x2))


def inverse_park(theta: float, v: FrameVector) -> FrameVector:
    """Rotate a rotor-frame vector back into the stationary frame."""
    _require(v, ROTOR, "inverse_park input")
    return stationary(*_inverse_park(theta, v.x1, v.x2))


def clarke(i_abc) -> FrameVector:
    """Amplitude-invariant three-phase to (alpha, beta) transform.

    The zero-sequence component is discarded.
    """
    a, b, c = (float(x) for x in i_abc)
    alpha = (2.0 / 3.0) * (a - 0.5 * b - 0.5 * c)
    beta = (2.0 / 3.0) * (math.sqrt(3.0) / 2.0) * (b - c)
    return stationary(alpha, beta)


def inverse_clarke(v: FrameVector):
    """Phase quantities (a, b, c) with zero zero-sequence."""
    _require(v, STATIONARY, "inverse_clarke input")
    h = math.sqrt(3.0) / 2.0
    return (v.x1, -0.5 * v.x1 + h * v.x2, -0.5 * v.x1 - h * v.x2)


def flux_linkage_rotor(i: FrameVector, params: MachineParams) -> FrameVector:
    """Rotor-frame flux (L_d i_d + lambda_pm, L_q i_q)."""
    _require(i, ROTOR, "current")
    return rotor(params.L_d * i.x1 + params.lambda_pm, params.L_q * i.x2)


def flux_linkage_stationary(theta: float, i: FrameVector, params: MachineParams) -> FrameVector:
    """Stationary-frame flux with the position-dependent saliency matrix."""
    _require(i, STATIONARY, "current")
    return stationary(*_flux_stationary(theta, i.x1, i.x2, params.sigma_L, params.delta_L, params.lambda_pm))


def current_from_flux(theta: float, lam: FrameVector, params: MachineParams) -> FrameVector:
    """Invert the flux relation for the stationary-frame current."""
    _require(lam, STATIONARY, "flux")
    return stationary(*_current_from_flux(theta, lam.x1, lam.x2, params.L_d, params.L_q, params.lambda_pm))


def incremental_inductance(theta: float, params: MachineParams) -> np.ndarray:
    """Stationary-frame 2x2 matrix mapping a small current change to a flux change."""
    SL, DL = params.sigma_L, params.delta_L
    c2, s2 = math.cos(2 * theta), math.sin(2 * theta)
    return np.array([[SL + DL * c2, DL * s2], [DL * s2, SL - DL * c2]])


def position_dependent_flux(theta: float, i: FrameVector, params: MachineParams) -> FrameVector:
    """Stator flux minus its isotropic part sigma_L * i."""
    _require(i, STATIONARY, "current")
    return stationary(*_position_flux(theta, i.x1, i.x2, params.delta_L, params.lambda_pm))


def electromagnetic_torque(lam: FrameVector, i: FrameVector, poles: int) -> float:
    """Air-gap torque (3/2)(poles/2)(lambda_alpha i_beta - lambda_beta i_alpha)."""
    _require(lam, STATIONARY, "flux")
    _require(i, STATIONARY, "current")
    return float(_torque(lam.x1, lam.x2, i.x1, i.x2, poles / 2))


def step_electrical(state: ElectroMechState, v: FrameVector, dt: float, params: MachineParams,
                    control_period: float = 50e-6) -> ElectroMechState:
    """Advance the electrical state by one step of length ``dt``.

    The flux is integrated explicitly from the stator voltage equation and the
    current is then solved algebraically, so the flux/current relation holds
    exactly after every step. Speed is held constant over the step.
    """
    _require(v, STATIONARY, "voltage")
    if not (dt > 0 and dt <= control_period * (1 + 1e-12)):
        raise ContractViolation(f"dt must be in (0, {control_period}], got {dt!r}")
    la = state.lam.x1 + (v.x1 - params.R_s * state.i.x1) * dt
    lb = state.lam.x2 + (v.x2 - params.R_s * state.i.x2) * dt
    th = wrap_angle(state.theta + state.omega_r * dt)
    ia, ib = _current_from_flux(th, la, lb, params.L_d, params.L_q, params.lambda_pm)
    if not all(math.isfinite(x) for x in (la, lb, ia, ib)):
        raise FloatingPointError("electrical state became non-finite")
    return ElectroMechState(stationary(ia, ib), stationary(la, lb), th, state.omega_r)


def step_mechanical(omega_r: float, T_em: float, T_load: float, J: float, dt: float, poles: int = 4) -> float:
    """Euler update of the electrical speed from the torque balance."""
    if not dt > 0:
        raise ContractViolation("dt must be > 0")
    if not J > 0:
        raise ContractViolation("J must be > 0")
    return omega_r + (poles / 2) * (T_em - T_load) / J * dt
