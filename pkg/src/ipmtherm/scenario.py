"""Scenario orchestration: run the compiled loop and summarise the result."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import CONTROL_PERIOD, ScenarioConfig
from .dsp import bandpass_sections, leakage_bound, lowpass_coefficients, smoother_settle_samples, window_length
from .errors import SimulationDivergence
from .hf_injection import ROTATING_FLUX, window_steps
from .kernel import (LOG_COLUMNS, TAP_COLUMNS, MODE_FLUX, MODE_TORQUE, ST_INJ_DW, ST_INJ_MAX, ST_INJ_MIN, ST_INJ_N,
                     ST_PRE_AMAX, ST_PRE_AMIN, ST_PRE_BMAX, ST_PRE_BMIN, ST_PRE_MAX, ST_PRE_MIN, ST_PRE_N,
                     ST_PRE_SUM, ST_PRE_TSUM, ST_SEQ_IM, ST_SEQ_RE, ST_SIZE, KernelParams, simulate)
from .machine_model import TWO_PI

log = logging.getLogger(__name__)

PRE_STATS_FROM_S = 0.5
INJ_STATS_SKIP_S = 1.0
SETTLE_BAND = 0.05


@dataclass
class RunLog:
    """Uniformly sampled simulation record.

    ``data`` has one column per entry of ``columns``. Angles are in rad,
    temperatures in degrees C; HF and estimate columns are NaN outside
    injection windows or while unavailable.
    """

    data: np.ndarray
    decimation: int
    control_period: float = CONTROL_PERIOD
    columns: tuple = LOG_COLUMNS
    tap: np.ndarray | None = None

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, name) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self["t"]


@dataclass
class WindowSummary:
    index: int
    start_s: float
    end_s: float
    n_settled: int
    R_hf_mean: float | None
    R_true_mean: float | None
    R_rel_err: float | None
    T_r_est_mean: float | None
    T_r_true_mean: float | None
    T_err_c: float | None
    T_err_max_sample_c: float | None
    settling_time_s: float | None


@dataclass
class Summary:
    speed_rpm: float
    mode: str
    M: float
    n: int
    duration_s: float
    thermal_compression: float
    decimation: int
    dsp_window: dict
    windows: list = field(default_factory=list)
    max_temp_error_c: float | None = None
    max_temp_error_sample_c: float | None = None
    flux: dict = field(default_factory=dict)
    speed_ripple_pct: float | None = None
    hf_current_amplitude: float | None = None
    hf_current_ratio: float | None = None
    torque_mean_pre: float | None = None
    T_load: float = 0.0

    def settled_R(self) -> list:
        return [w.R_hf_mean for w in self.windows if w.R_hf_mean is not None]


def kernel_params(cfg: ScenarioConfig) -> tuple[KernelParams, np.ndarray, np.ndarray, dict]:
    """Translate a validated config into kernel inputs."""
    m, d, inj, dsp, th, run = cfg.machine, cfg.dtc, cfg.injection, cfg.dsp, cfg.thermal, cfg.run
    Tc = CONTROL_PERIOD
    p2 = m.pole_pairs
    w_mech = run.speed_setpoint_rpm * TWO_PI / 60
    w_e = w_mech * p2
    n_steps = int(round(run.duration_s / Tc))

    N, N_exact = window_length(w_e, Tc, strict=dsp.strict_window)
    leak = leakage_bound(N, inj.n, w_e, Tc)
    if abs(N - N_exact) > 1e-9:
        log.warning("phasor window %.4f samples rounded to %d; mirror-term leakage bound %.2e", N_exact, N, leak)
    f_inj = inj.n * w_e / TWO_PI
    bp = bandpass_sections(f_inj, 1.0 / Tc, dsp.bandpass_q)
    lp = lowpass_coefficients(dsp.lowpass_hz, 1.0 / Tc)

    w_start, w_on, w_period = window_steps(inj, Tc)
    w_slip = (inj.n - 1) * w_e
    wc = TWO_PI * th.eddy_corner_hz
    plant = th.plant
    thermal_every = int(round(th.step_s / Tc))
    pre_start = min(int(round(PRE_STATS_FROM_S / Tc)), w_start // 2)

    p = KernelParams(
        n_steps=n_steps, sub=run.substeps, Tc=Tc, decim=run.decimation, seed=int(run.seed),
        R_s0=m.R_s, L_d=m.L_d, L_q=m.L_q, lam_pm=m.lambda_pm, pole_pairs=float(p2), J=m.J,
        lam_ref=d.lambda_ref, flux_band=d.flux_band, torque_band=d.torque_band, V_dc=d.V_dc, kp=d.kp, ki=d.ki,
        T_limit=d.torque_limit, est_wc=TWO_PI * d.estimator_corner_hz, est_clamp=d.estimator_clamp,
        w_ref=w_e, T_load=run.load_pct_of_rated / 100 * m.rated_torque,
        theta0=math.radians(run.initial_angle_deg),
        inj_mode=MODE_FLUX if inj.mode == ROTATING_FLUX else MODE_TORQUE, M=inj.M, n=float(inj.n),
        win_start=w_start, win_on=w_on, win_period=w_period,
        N=N, harmonic=inj.n, w0T=inj.n * w_e * Tc, decouple=bool(dsp.decouple),
        positive_seq=dsp.sequence == "positive", smooth_settle=smoother_settle_samples(dsp.lowpass_hz, 1.0 / Tc), tap=bool(dsp.tap),
        i_floor=dsp.current_floor_a,
        resync_every=64 * N,
        alpha_cu=th.alpha_cu, alpha_mag=th.alpha_mag, T0=th.T0, T_amb=th.ambient_c,
        R_mag0=th.r_mag0_table.at(run.speed_setpoint_rpm),
        branch_gain=(w_slip * w_slip + wc * wc) / (w_slip * w_slip), eddy_wc=wc,
        C_s=plant.C_s_eff, C_r=plant.C_r_eff, R_sa=plant.R_sa, R_rs=plant.R_rs, R_ra=plant.R_ra,
        thermal_every=thermal_every, rotor_loss_ref=th.rotor_loss_w, I_rated=m.I_rated,
        w_e_rated=m.omega_rated * p2,
        sigma_i=run.current_noise_a, sigma_vdc=run.vdc_noise_v,
        pre_start=pre_start, inj_skip=int(round(INJ_STATS_SKIP_S / Tc)),
    )
    info = {"N": N, "N_exact": N_exact, "leakage_bound": leak, "harmonic": inj.n, "f_inj_hz": f_inj}
    return p, bp, lp, info


def _windows(cfg: ScenarioConfig):
    inj, T = cfg.injection, cfg.run.duration_s
    out = []
    if inj.on_duration <= 0:
        return out
    k = 0
    while True:
        s = inj.start + k * inj.period
        if s >= T - 1e-12:
            break
        out.append((s, min(s + inj.on_duration, T)))
        k += 1
    return out


def _settling_time(t, R, start):
    ok = np.isfinite(R)
    if not ok.any():
        return None
    t, R = t[ok], R[ok]
    final = R[-1]
    outside = np.nonzero(np.abs(R - final) > SETTLE_BAND * abs(final))[0]
    if len(outside) == 0:
        return float(t[0] - start)
    last = outside[-1]
    if last + 1 >= len(t):
        return None
    return float(t[last + 1] - start)


def summarize(cfg: ScenarioConfig, runlog: RunLog, stats: np.ndarray, info: dict) -> Summary:
    th, m = cfg.thermal, cfg.machine
    coeffs = th.coefficients(m.R_s, cfg.run.speed_setpoint_rpm)
    t = runlog.t
    R = runlog["R_hf"]
    T_est = runlog["T_r_est"]
    T_s = runlog["T_s_true"]
    T_r = runlog["T_r_true"]
    R_true = coeffs.R_s0 * (1 + coeffs.alpha_cu * (T_s - coeffs.T0)) + \
        coeffs.R_mag0 * (1 + coeffs.alpha_mag * (T_r - coeffs.T0))

    s = Summary(
        speed_rpm=cfg.run.speed_setpoint_rpm, mode=cfg.injection.mode, M=cfg.injection.M, n=cfg.injection.n,
        duration_s=cfg.run.duration_s, thermal_compression=th.plant.compression,
        decimation=runlog.decimation, dsp_window=info,
        T_load=cfg.run.load_pct_of_rated / 100 * m.rated_torque,
    )
    errs, sample_errs = [], []
    for idx, (a, b) in enumerate(_windows(cfg)):
        in_win = (t >= a - 1e-12) & (t < b - 1e-12)
        sel = in_win & (t >= a + cfg.dsp.settle_s - 1e-12) & np.isfinite(R)
        n_set = int(sel.sum())
        if n_set:
            Rm, Rt = float(R[sel].mean()), float(R_true[sel].mean())
            Te, Tt = float(T_est[sel].mean()), float(T_r[sel].mean())
            err = abs(Te - Tt)
            serr = float(np.max(np.abs(T_est[sel] - T_r[sel])))
            errs.append(err)
            sample_errs.append(serr)
            w = WindowSummary(idx, a, b, n_set, Rm, Rt, (Rm - Rt) / Rt, Te, Tt, err, serr,
                              _settling_time(t[in_win], R[in_win], a))
        else:
            w = WindowSummary(idx, a, b, 0, None, None, None, None, None, None, None,
                              _settling_time(t[in_win], R[in_win], a))
        s.windows.append(w)
    s.max_temp_error_c = max(errs) if errs else None
    s.max_temp_error_sample_c = max(sample_errs) if sample_errs else None

    lam_ref = cfg.dtc.lambda_ref
    if stats[ST_PRE_N] > 0:
        mean = stats[ST_PRE_SUM] / stats[ST_PRE_N]
        ripple = max(stats[ST_PRE_MAX] - mean, mean - stats[ST_PRE_MIN])
        ca = 0.5 * (stats[ST_PRE_AMAX] + stats[ST_PRE_AMIN])
        cb = 0.5 * (stats[ST_PRE_BMAX] + stats[ST_PRE_BMIN])
        s.flux.update(pre_mean=float(mean), pre_min=float(stats[ST_PRE_MIN]), pre_max=float(stats[ST_PRE_MAX]),
                      pre_ripple_pct=float(100 * ripple / lam_ref),
                      pre_center_offset_pct=float(100 * math.hypot(ca, cb) / lam_ref))
        s.torque_mean_pre = float(stats[ST_PRE_TSUM] / stats[ST_PRE_N])
    if stats[ST_INJ_N] > 0:
        n_inj = stats[ST_INJ_N]
        s.flux.update(inj_min=float(stats[ST_INJ_MIN]), inj_max=float(stats[ST_INJ_MAX]))
        w_ref = cfg.run.speed_setpoint_rpm * TWO_PI / 60 * m.pole_pairs
        s.speed_ripple_pct = float(100 * stats[ST_INJ_DW] / w_ref)
        amp = math.hypot(stats[ST_SEQ_RE], stats[ST_SEQ_IM]) / n_inj
        s.hf_current_amplitude = float(amp)
        s.hf_current_ratio = float(amp / cfg.injection.M) if cfg.injection.M > 0 else None
    return s


def run_scenario(cfg: ScenarioConfig) -> tuple[RunLog, Summary]:
    """Simulate one scenario; deterministic for a given config (including its seed)."""
    p, bp, lp, info = kernel_params(cfg)
    n_rows = (p.n_steps + p.decim - 1) // p.decim
    data = np.zeros((n_rows, len(LOG_COLUMNS)))
    stats = np.zeros(ST_SIZE)
    tap = np.zeros((n_rows if p.tap else 0, len(TAP_COLUMNS)))
    status = simulate(p, bp, lp, data, stats, tap)
    if status >= 0:
        raise SimulationDivergence(status, status * p.Tc)
    runlog = RunLog(data, p.decim, tap=tap if p.tap else None)
    return runlog, summarize(cfg, runlog, stats, info)


def sweep_speeds(cfg: ScenarioConfig, speeds) -> list[Summary]:
    """Run the scenario once per speed setpoint and collect the summaries."""
    return [run_scenario(cfg.with_run(speed_setpoint_rpm=float(v)))[1] for v in speeds]
