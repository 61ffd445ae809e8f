"""Fast invariant checks that can run from an installed package (``ipmtherm selftest``)."""

from __future__ import annotations

import math

import numpy as np

from . import dsp, hf_injection as hf, machine_model as mm
from .thermal import TempCoefficients, magnet_resistance_at, rotor_temperature, stator_resistance_at


def _park_orthogonal(rng):
    worst = 0.0
    for th in rng.uniform(-10, 10, 1000):
        T = np.array([[math.cos(th), math.sin(th)], [-math.sin(th), math.cos(th)]])
        worst = max(worst, np.abs(T.T @ T - np.eye(2)).max())
    return worst < 1e-12, f"max |T'T - I| = {worst:.1e}"


def _flux_frames(rng):
    p = mm.MachineParams()
    worst = 0.0
    for th, a, b in rng.uniform(-5, 5, (1000, 3)):
        i = mm.stationary(a, b)
        direct = mm.flux_linkage_stationary(th, i, p)
        via = mm.inverse_park(th, mm.flux_linkage_rotor(mm.park(th, i), p))
        worst = max(worst, abs(direct.x1 - via.x1) + abs(direct.x2 - via.x2))
    return worst < 1e-10, f"max deviation {worst:.1e} Wb"


def _clarke_injection(rng):
    worst = 0.0
    for th in rng.uniform(0, 2 * math.pi, 100):
        M, n = 0.1, 5
        v = mm.clarke(hf.hf_current_reference_abc(M, n, th))
        ref = hf.hf_current_reference(M, n, th)
        worst = max(worst, abs(v.x1 - ref.x1), abs(v.x2 - ref.x2))
    return worst < 1e-12, f"max deviation {worst:.1e} A"


def _flux_reference(rng):
    p = mm.MachineParams()
    worst = 0.0
    for th in rng.uniform(0, 2 * math.pi, 1000):
        di = hf.hf_current_reference(0.1, 5, th)
        a = mm.incremental_inductance(th, p) @ di.as_array()
        b = hf.hf_flux_reference(0.1, 5, th, p).as_array()
        worst = max(worst, np.abs(a - b).max())
    return worst < 1e-12, f"max deviation {worst:.1e} Wb"


def _skin_depth(_rng):
    mu = 1.05 * mm.MU0
    got = [1e3 * mm.skin_depth(1.4e-6, mu, 2 * math.pi * f) for f in (300, 420, 540)]
    ok = all(abs(g - e) <= 0.05 for g, e in zip(got, (33.6, 28.4, 25.0)))
    return ok, "depths " + ", ".join(f"{g:.2f} mm" for g in got)


def _phasor(rng):
    T, f0 = 1 / 20000, 250.0
    worst = 0.0
    for _ in range(20):
        C, phi = rng.uniform(0.1, 10), rng.uniform(-math.pi, math.pi)
        ext = dsp.PhasorExtractor(2 * math.pi * f0, T)
        for k in range(ext.N):
            est = ext.update(C * math.cos(2 * math.pi * f0 * T * k + phi))
        worst = max(worst, abs(est.magnitude - C) / C, abs(math.remainder(est.angle - phi, 2 * math.pi)))
    return worst < 1e-9, f"max error {worst:.1e}"


def _temperature_roundtrip(rng):
    c = TempCoefficients()
    worst = 0.0
    for T_r, T_s in rng.uniform(0, 150, (200, 2)):
        R = stator_resistance_at(T_s, c) + magnet_resistance_at(T_r, c)
        worst = max(worst, abs(rotor_temperature(R, T_s, c) - T_r))
    return worst < 1e-9, f"max error {worst:.1e} C"


CHECKS = (
    ("park transform is orthogonal", _park_orthogonal),
    ("stationary flux equals rotor-frame path", _flux_frames),
    ("clarke of three-phase offsets equals two-axis reference", _clarke_injection),
    ("inductance matrix maps current reference to flux reference", _flux_reference),
    ("skin depths at 300/420/540 Hz", _skin_depth),
    ("sliding DFT recovers synthetic phasors", _phasor),
    ("rotor temperature inverts the resistance model", _temperature_roundtrip),
)


def run_selftest(echo=print) -> bool:
    """Run every check with one printed line each; True if all passed."""
    rng = np.random.default_rng(12345)
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # report and keep going
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
