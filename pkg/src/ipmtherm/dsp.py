"""Streaming extraction of one harmonic's phasor from sampled signals.

Chain per channel: a Butterworth bandpass centred on the injected frequency,
a sliding single-bin DFT kept in a circular buffer, and second-order lowpass
smoothing of the magnitude and unwrapped angle.

The DFT window spans one period of a *base* frequency ``omega0`` and is
demodulated at ``harmonic * omega0``. Using the machine fundamental as the
base lets the window cancel every rotor-synchronous harmonic exactly, not only
the injected one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import signal

from .errors import ContractViolation
from .machine_model import FrameVector, MachineParams, _position_flux, stationary

_INT_TOL = 1e-9


@dataclass(frozen=True)
class PhasorEstimate:
    """Magnitude and angle (wrapped to (-pi, pi]) of one extracted harmonic."""

    magnitude: float
    angle: float
    settled: bool

    def __post_init__(self):
        if not self.magnitude >= 0:
            raise ContractViolation("phasor magnitude must be >= 0")


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _biquad_step(coef, z, x):
    """Direct form II transposed; coef = (b0, b1, b2, a1, a2), z = two registers."""
    y = coef[0] * x + z[0]
    z[0] = coef[1] * x - coef[3] * y + z[1]
    z[1] = coef[2] * x - coef[4] * y
    return y


@njit(cache=True)
def _prime(coef, z, x):
    """Set the registers of a unity-DC-gain section to its steady state for input ``x``."""
    z[0] = x * (1.0 - coef[0])
    z[1] = x * (coef[2] - coef[4])
    return x


@njit(cache=True)
def _smooth_step(lp, z, x, count, N):
    """Lowpass stage that starts once the DFT window is full.

    Before that the raw value passes through; the first full-window value
    primes the filter so the smoothed output starts on it instead of
    rising from zero.
    """
    if count < N:
        return x
    if count == N:
        return _prime(lp, z, x)
    return _biquad_step(lp, z, x)


@njit(cache=True)
def _phasor_update(y, z, acc, ist, x, wT):
    """One sliding-DFT step.

    ``acc`` holds (A, B); ``ist`` holds (write index, sample count). Returns
    (magnitude, angle).
    """
    N = y.shape[0]
    idx = ist[0]
    cnt = ist[1]
    ph = wT * cnt
    yi = x * math.cos(ph)
    zi = x * math.sin(ph)
    acc[0] += yi - y[idx]
    acc[1] += zi - z[idx]
    y[idx] = yi
    z[idx] = zi
    idx += 1
    if idx == N:
        idx = 0
    ist[0] = idx
    ist[1] = cnt + 1
    A = acc[0]
    B = acc[1]
    return 2.0 / N * math.sqrt(A * A + B * B), math.atan2(-B, A)


@njit(cache=True)
def _resync(y, z, acc):
    acc[0] = np.sum(y)
    acc[1] = np.sum(z)


@njit(cache=True)
def _unwrap_step(st, ang):
    """st = (previous raw angle, running unwrapped angle, started flag)."""
    if st[2] == 0.0:
        st[0] = ang
        st[1] = ang
        st[2] = 1.0
        return ang
    d = ang - st[0]
    d = (d + math.pi) % (2.0 * math.pi) - math.pi
    st[1] += d
    st[0] = ang
    return st[1]


@njit(cache=True)
def _wrap_pi(a):
    w = (a + math.pi) % (2.0 * math.pi)
    if w <= 0.0:
        w = 2.0 * math.pi
    return w - math.pi


@njit(cache=True)
def _chain_step(bp, lp, bz, dy, dz, acc, ist, lz, unw, xv, xi, wT, resync_every, out4):
    """One sample of the two-channel pipeline (0 = voltage, 1 = current).

    Writes smoothed (|V|, unwrapped angle V, |I|, unwrapped angle I) to ``out4``.
    """
    for ch in range(2):
        x = xv if ch == 0 else xi
        for s in range(bp.shape[0]):
            x = _biquad_step(bp[s], bz[ch, s], x)
        mag, ang = _phasor_update(dy[ch], dz[ch], acc[ch], ist[ch], x, wT)
        if ist[ch, 1] % resync_every == 0:
            _resync(dy[ch], dz[ch], acc[ch])
        cnt = ist[ch, 1]
        N = dy.shape[1]
        out4[2 * ch] = _smooth_step(lp, lz[2 * ch], mag, cnt, N)
        out4[2 * ch + 1] = _smooth_step(lp, lz[2 * ch + 1], _unwrap_step(unw[ch], ang), cnt, N)


@njit(cache=True)
def _seq_chain_step(bp, lp, bz, dy, dz, acc, ist, lz, unw, xva, xvb, xia, xib, wT, resync_every, out4):
    """One sample of the positive-sequence pipeline.

    Channels 0..3 carry (v_alpha, v_beta, i_alpha, i_beta) through the
    bandpass and the sliding DFT. The alpha and beta phasors of each quantity
    are combined as (X_alpha + j X_beta)/2, which keeps the forward-rotating
    component at the analysed harmonic and cancels the backward one. Writes
    the smoothed (|V|, unwrapped angle V, |I|, unwrapped angle I) to ``out4``.
    """
    for q in range(2):
        re = 0.0
        im = 0.0
        for ax in range(2):
            ch = 2 * q + ax
            if ch == 0:
                x = xva
            elif ch == 1:
                x = xvb
            elif ch == 2:
                x = xia
            else:
                x = xib
            for s in range(bp.shape[0]):
                x = _biquad_step(bp[s], bz[ch, s], x)
            _phasor_update(dy[ch], dz[ch], acc[ch], ist[ch], x, wT)
            if ist[ch, 1] % resync_every == 0:
                _resync(dy[ch], dz[ch], acc[ch])
            # phasor (2/N)(A - jB); beta enters multiplied by j
            N = dy.shape[1]
            pr = 2.0 / N * acc[ch, 0]
            pi_ = -2.0 / N * acc[ch, 1]
            if ax == 0:
                re += 0.5 * pr
                im += 0.5 * pi_
            else:
                re -= 0.5 * pi_
                im += 0.5 * pr
        cnt = ist[2 * q, 1]
        out4[2 * q] = _smooth_step(lp, lz[2 * q], math.sqrt(re * re + im * im), cnt, N)
        out4[2 * q + 1] = _smooth_step(lp, lz[2 * q + 1], _unwrap_step(unw[q], math.atan2(im, re)), cnt, N)


@njit(cache=True)
def _chain_block(bp, lp, N, wT, v, i):
    n = v.shape[0]
    out = np.empty((n, 4))
    bz = np.zeros((2, bp.shape[0], 2))
    dy = np.zeros((2, N))
    dz = np.zeros((2, N))
    acc = np.zeros((2, 2))
    ist = np.zeros((2, 2), dtype=np.int64)
    lz = np.zeros((4, 2))
    unw = np.zeros((2, 3))
    out4 = np.zeros(4)
    for k in range(n):
        _chain_step(bp, lp, bz, dy, dz, acc, ist, lz, unw, v[k], i[k], wT, 64 * N, out4)
        out[k] = out4
    return out


@njit(cache=True)
def _seq_block(bp, lp, N, wT, va, vb, ia, ib):
    n = va.shape[0]
    out = np.empty((n, 4))
    bz = np.zeros((4, bp.shape[0], 2))
    dy = np.zeros((4, N))
    dz = np.zeros((4, N))
    acc = np.zeros((4, 2))
    ist = np.zeros((4, 2), dtype=np.int64)
    lz = np.zeros((4, 2))
    unw = np.zeros((2, 3))
    out4 = np.zeros(4)
    for k in range(n):
        _seq_chain_step(bp, lp, bz, dy, dz, acc, ist, lz, unw, va[k], vb[k], ia[k], ib[k], wT, 64 * N, out4)
        out[k] = out4
    return out


# ---------------------------------------------------------------------------
# Filter design
# ---------------------------------------------------------------------------


def bandpass_sections(f0: float, fs: float, q: float) -> np.ndarray:
    """Butterworth bandpass from a second-order lowpass prototype, as two biquad sections.

    The analog band edges are placed geometrically around the pre-warped
    centre with a -3 dB width of ``centre / q``; the bilinear transform then
    maps the centre exactly onto ``f0``, where the gain is one. Returns a
    (2, 5) array of (b0, b1, b2, a1, a2) rows.
    """
    if not (0 < f0 < fs / 2):
        raise ContractViolation(f"bandpass centre {f0} Hz must lie in (0, fs/2)")
    if not q > 0:
        raise ContractViolation("q must be > 0")
    w0 = 2.0 * fs * math.tan(math.pi * f0 / fs)
    bw = w0 / q
    lo = 0.5 * (-bw + math.sqrt(bw * bw + 4.0 * w0 * w0))
    z, p, k = signal.butter(2, [lo, lo + bw], btype="bandpass", analog=True, output="zpk")
    sos = signal.zpk2sos(*signal.bilinear_zpk(z, p, k, fs))
    return np.ascontiguousarray(sos[:, [0, 1, 2, 4, 5]] / sos[:, [3]])


def lowpass_coefficients(fc: float, fs: float) -> np.ndarray:
    """Second-order Butterworth lowpass via the bilinear transform."""
    if not (0 < fc < fs / 2):
        raise ContractViolation(f"lowpass corner {fc} Hz must lie in (0, fs/2)")
    K = math.tan(math.pi * fc / fs)
    r2 = math.sqrt(2.0)
    nrm = 1.0 / (1.0 + r2 * K + K * K)
    b0 = K * K * nrm
    return np.array([b0, 2.0 * b0, b0, 2.0 * (K * K - 1.0) * nrm, (1.0 - r2 * K + K * K) * nrm])


def _check_stable(coef):
    a1, a2 = coef[3], coef[4]
    if not (abs(a2) < 1.0 and abs(a1) < 1.0 + a2):
        raise ContractViolation(f"biquad poles not strictly inside the unit circle (a1={a1}, a2={a2})")


class Biquad:
    """Second-order IIR section with its two delay registers."""

    def __init__(self, coef):
        coef = np.asarray(coef, dtype=float)
        if coef.shape != (5,):
            raise ContractViolation("biquad needs (b0, b1, b2, a1, a2)")
        _check_stable(coef)
        self.coef = coef
        self.z = np.zeros(2)

    @classmethod
    def lowpass(cls, fc: float, fs: float) -> "Biquad":
        return cls(lowpass_coefficients(fc, fs))

    def response(self, f: float, fs: float) -> complex:
        """Complex frequency response at ``f`` Hz."""
        zi = np.exp(-1j * 2 * math.pi * f / fs)
        b0, b1, b2, a1, a2 = self.coef
        return complex((b0 + b1 * zi + b2 * zi * zi) / (1 + a1 * zi + a2 * zi * zi))

    def reset(self):
        self.z[:] = 0.0

    def step(self, x: float) -> float:
        return float(_biquad_step(self.coef, self.z, float(x)))

    def filter(self, xs) -> np.ndarray:
        return np.array([self.step(x) for x in xs])


BiquadState = Biquad


def biquad_step(state: Biquad, x: float) -> float:
    """Advance ``state`` by one sample and return the output."""
    return state.step(x)


class SectionCascade:
    """Biquad sections applied in series."""

    def __init__(self, sections):
        self.sections = [Biquad(row) for row in np.atleast_2d(sections)]

    @classmethod
    def bandpass(cls, f0: float, fs: float, q: float = 5.0) -> "SectionCascade":
        return cls(bandpass_sections(f0, fs, q))

    def response(self, f: float, fs: float) -> complex:
        h = 1.0 + 0j
        for sec in self.sections:
            h *= sec.response(f, fs)
        return h

    def reset(self):
        for sec in self.sections:
            sec.reset()

    def step(self, x: float) -> float:
        for sec in self.sections:
            x = sec.step(x)
        return x

    def filter(self, xs) -> np.ndarray:
        return np.array([self.step(x) for x in xs])


# ---------------------------------------------------------------------------
# Sliding DFT
# ---------------------------------------------------------------------------


def window_length(omega0: float, T: float, strict: bool = True) -> tuple[int, float]:
    """Samples per base period and the exact (possibly fractional) value."""
    if not (omega0 > 0 and T > 0):
        raise ContractViolation("omega0 and T must be > 0")
    exact = 2.0 * math.pi / (omega0 * T)
    N = int(round(exact))
    if N < 2:
        raise ContractViolation(f"window of {exact:.3f} samples is too short")
    if strict and abs(N - exact) >= _INT_TOL:
        raise ContractViolation(
            f"base period is {exact:.6f} samples, not an integer; pick another speed or pass strict=False")
    return N, exact


def leakage_bound(N: int, harmonic: int, omega0: float, T: float) -> float:
    """Worst relative magnitude error for a pure tone when N is not a whole period.

    The mirror-image term of a real tone contributes at most
    ``|sin(N w T)| / (N |sin(w T)|)`` relative to the tone itself, with
    ``w = harmonic * omega0``. It vanishes when N spans whole periods.
    """
    wT = harmonic * omega0 * T
    den = N * abs(math.sin(wT))
    return abs(math.sin(N * wT)) / den if den > 0 else math.inf


class PhasorExtractor:
    """Circular-buffer single-bin DFT.

    ``update`` consumes one sample and returns the current estimate. The
    accumulators are recomputed by a direct sum every ``resync_every`` samples
    to cap floating-point drift of the recursion.
    """

    def __init__(self, omega0: float, T: float, harmonic: int = 1, strict: bool = True,
                 resync_every: int | None = None):
        if int(harmonic) != harmonic or harmonic < 1:
            raise ContractViolation("harmonic must be a positive integer")
        self.N, self.N_exact = window_length(omega0, T, strict)
        self.omega0 = float(omega0)
        self.T = float(T)
        self.harmonic = int(harmonic)
        self.leakage = leakage_bound(self.N, self.harmonic, omega0, T)
        self.resync_every = int(resync_every) if resync_every else 64 * self.N
        self.wT = self.harmonic * self.omega0 * self.T
        self.y = np.zeros(self.N)
        self.z = np.zeros(self.N)
        self.acc = np.zeros(2)
        self.ist = np.zeros(2, dtype=np.int64)

    @property
    def count(self) -> int:
        return int(self.ist[1])

    @property
    def A(self) -> float:
        return float(self.acc[0])

    @property
    def B(self) -> float:
        return float(self.acc[1])

    def update(self, x: float) -> PhasorEstimate:
        mag, ang = _phasor_update(self.y, self.z, self.acc, self.ist, float(x), self.wT)
        if self.ist[1] % self.resync_every == 0:
            _resync(self.y, self.z, self.acc)
        return PhasorEstimate(mag, ang, bool(self.ist[1] >= self.N))

    def direct_sums(self) -> tuple[float, float]:
        return float(np.sum(self.y)), float(np.sum(self.z))


PhasorExtractorState = PhasorExtractor


def phasor_update(state: PhasorExtractor, x: float) -> PhasorEstimate:
    """Feed one sample to the extractor."""
    return state.update(x)


# ---------------------------------------------------------------------------
# Smoothing
# ---------------------------------------------------------------------------


def smoother_settle_samples(lowpass_hz: float, fs: float) -> int:
    """Samples in four closed-loop time constants ``4 / (zeta * omega_c)`` of the smoothing lowpass."""
    return int(math.ceil(4.0 / (math.sqrt(0.5) * 2 * math.pi * lowpass_hz) * fs))


class Smoother:
    """Second-order Butterworth lowpass applied to magnitude and unwrapped angle.

    Unsettled inputs pass through unfiltered. The first settled input primes
    both filters at their steady state, so the output starts on that value
    rather than rising from zero. The output is flagged settled once the
    input has been settled for four closed-loop time constants of the filter,
    ``4 / (zeta * omega_c)``.
    """

    def __init__(self, lowpass_hz: float, fs: float):
        coef = lowpass_coefficients(lowpass_hz, fs)
        self.mag = Biquad(coef)
        self.ang = Biquad(coef)
        self.unwrap = np.zeros(3)
        self.settle_samples = smoother_settle_samples(lowpass_hz, fs)
        self._settled_for = 0
        self.unwrapped_angle = 0.0

    def update(self, est: PhasorEstimate) -> PhasorEstimate:
        raw = _unwrap_step(self.unwrap, est.angle)
        if not est.settled:
            m, a = est.magnitude, raw
        elif self._settled_for == 0:
            m = float(_prime(self.mag.coef, self.mag.z, est.magnitude))
            a = float(_prime(self.ang.coef, self.ang.z, raw))
        else:
            m, a = self.mag.step(est.magnitude), self.ang.step(raw)
        self.unwrapped_angle = a
        self._settled_for = self._settled_for + 1 if est.settled else 0
        return PhasorEstimate(max(m, 0.0), float(_wrap_pi(a)), self._settled_for >= self.settle_samples)


def smooth(state: Smoother, estimate: PhasorEstimate) -> PhasorEstimate:
    """Lowpass one phasor estimate."""
    return state.update(estimate)


# ---------------------------------------------------------------------------
# Voltage conditioning and the full chain
# ---------------------------------------------------------------------------


def remove_position_emf(v: FrameVector, theta0: float, i0: FrameVector, theta1: float, i1: FrameVector,
                        T: float, params: MachineParams) -> FrameVector:
    """Subtract the voltage induced by the position-dependent flux over one sample period.

    The stator flux splits into ``sigma_L * i`` and a part that depends on the
    rotor angle (saliency and magnet). Removing the average derivative of the
    second part over ``[t0, t1]`` leaves an isotropic R-L response at every
    harmonic, so a single phase can be used for the resistance.
    """
    x0 = _position_flux(theta0, i0.x1, i0.x2, params.delta_L, params.lambda_pm)
    x1 = _position_flux(theta1, i1.x1, i1.x2, params.delta_L, params.lambda_pm)
    return stationary(v.x1 - (x1[0] - x0[0]) / T, v.x2 - (x1[1] - x0[1]) / T)


class HfPhasorChain:
    """Bandpass, sliding DFT and smoothing for a voltage and a current channel.

    ``update`` advances both channels by one sample; ``process`` runs whole
    arrays through a fresh chain with compiled code.
    """

    def __init__(self, f_inj: float, fs: float, base_hz: float, harmonic: int, q: float = 5.0,
                 lowpass_hz: float = 0.5, strict: bool = True):
        self.fs = float(fs)
        self.bp_sections = bandpass_sections(f_inj, fs, q)
        self.lp_coef = lowpass_coefficients(lowpass_hz, fs)
        self.bp_v = SectionCascade(self.bp_sections)
        self.bp_i = SectionCascade(self.bp_sections)
        w0 = 2 * math.pi * base_hz
        self.dft_v = PhasorExtractor(w0, 1.0 / fs, harmonic, strict)
        self.dft_i = PhasorExtractor(w0, 1.0 / fs, harmonic, strict)
        self.sm_v = Smoother(lowpass_hz, fs)
        self.sm_i = Smoother(lowpass_hz, fs)

    def update(self, v: float, i: float) -> tuple[PhasorEstimate, PhasorEstimate]:
        ev = self.dft_v.update(self.bp_v.step(v))
        ei = self.dft_i.update(self.bp_i.step(i))
        return self.sm_v.update(ev), self.sm_i.update(ei)

    def process(self, v, i) -> np.ndarray:
        """Columns: |V|, angle V, |I|, angle I (angles unwrapped), one row per sample."""
        v = np.ascontiguousarray(v, dtype=float)
        i = np.ascontiguousarray(i, dtype=float)
        if v.shape != i.shape:
            raise ContractViolation("voltage and current streams must have equal length")
        return _chain_block(self.bp_sections, self.lp_coef, self.dft_v.N, self.dft_v.wT, v, i)

    def process_positive(self, v_alpha, v_beta, i_alpha, i_beta) -> np.ndarray:
        """Like ``process`` but for the forward-rotating component of alpha-beta pairs."""
        arrs = [np.ascontiguousarray(a, dtype=float) for a in (v_alpha, v_beta, i_alpha, i_beta)]
        if len({a.shape for a in arrs}) != 1:
            raise ContractViolation("voltage and current streams must have equal length")
        return _seq_block(self.bp_sections, self.lp_coef, self.dft_v.N, self.dft_v.wT, *arrs)
