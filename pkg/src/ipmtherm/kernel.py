"""Compiled closed-loop simulation.

One call runs a whole scenario at the 20 kHz control rate: plant substeps,
measurement, flux estimation, speed loop, injection, DTC switching, phasor
extraction and the thermal plant. The arithmetic is the same scalar kernels
that back the object API of the individual modules.

Per control step ``k`` (time ``k * Tc``):

1. sample the plant current and encoder angle;
2. close the previous period: estimator update with the applied voltage and
   the trapezoidal mean current, and one sample of the HF phasor pipeline;
3. speed PI, injection terms, hysteresis comparators and vector selection;
4. integrate the plant over the period with the chosen inverter voltage;
5. every ``thermal_every`` steps, advance the thermal network with the
   averaged losses and refresh the plant resistances.
"""

from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

from .dsp import _biquad_step, _chain_step, _seq_chain_step, _wrap_pi
from .dtc_drive import (SWITCH_TABLE, _estimate_flux, _hyst_flux, _hyst_torque, _phase_to_ab, _sector,
                        _select, _speed_pi, _vector_torque_offset)
from .hf_injection import _hf_flux, _hf_torque
from .machine_model import _current_from_flux, _eddy_branch, _position_flux, _torque, _wrap
from .thermal import _rotor_temperature, _thermal_euler

LOG_COLUMNS = ("t", "i_a", "i_b", "i_c", "v_alpha", "v_beta", "lambda_alpha", "lambda_beta", "T_em",
               "speed_rpm", "V_hf_mag", "V_hf_ang", "I_hf_mag", "I_hf_ang", "R_hf", "T_s_true", "T_r_true",
               "T_r_est", "injection")
TAP_COLUMNS = ("t", "v_in", "i_in", "v_bp", "i_bp")


# indices into the statistics vector filled by the kernel
ST_PRE_N, ST_PRE_SUM, ST_PRE_MAX, ST_PRE_MIN = 0, 1, 2, 3
ST_PRE_AMAX, ST_PRE_AMIN, ST_PRE_BMAX, ST_PRE_BMIN = 4, 5, 6, 7
ST_INJ_N, ST_INJ_MAX, ST_INJ_MIN, ST_INJ_DW = 8, 9, 10, 11
ST_SEQ_RE, ST_SEQ_IM = 12, 13
ST_PRE_TSUM = 14
ST_SIZE = 15

KernelParams = namedtuple("KernelParams", [
    # timing
    "n_steps", "sub", "Tc", "decim", "seed",
    # machine
    "R_s0", "L_d", "L_q", "lam_pm", "pole_pairs", "J",
    # drive
    "lam_ref", "flux_band", "torque_band", "V_dc", "kp", "ki", "T_limit", "est_wc", "est_clamp",
    # operating point
    "w_ref", "T_load", "theta0",
    # injection
    "inj_mode", "M", "n", "win_start", "win_on", "win_period",
    # dsp
    "N", "harmonic", "w0T", "decouple", "positive_seq", "smooth_settle", "tap", "i_floor", "resync_every",
    # thermal and plant
    "alpha_cu", "alpha_mag", "T0", "T_amb", "R_mag0", "branch_gain", "eddy_wc",
    "C_s", "C_r", "R_sa", "R_rs", "R_ra", "thermal_every", "rotor_loss_ref", "I_rated", "w_e_rated",
    # noise
    "sigma_i", "sigma_vdc",
    # statistics
    "pre_start", "inj_skip",
])

MODE_FLUX = 0
MODE_TORQUE = 1


@njit(cache=True)
def _window_active(k, start, on, period):
    if on <= 0 or k < start:
        return False
    return (k - start) % period < on


@njit(cache=True)
def simulate(p, bp_coef, lp_coef, log, stats, tap):
    """Run the scenario described by ``p``.

    ``bp_coef`` is the (2, 5) bandpass cascade, ``lp_coef`` the (5,) lowpass.
    ``log`` receives decimated rows of ``LOG_COLUMNS``; ``stats`` the
    full-rate statistics. With ``p.tap`` set, ``tap`` receives rows of
    ``TAP_COLUMNS`` on the same grid as ``log``: the phase-a or alpha
    voltage and current fed to the phasor pipeline and their bandpassed
    values, NaN when the pipeline did not run. Returns -1 on success or the step index at which
    the state became non-finite.
    """
    np.random.seed(p.seed)
    Tc = p.Tc
    dt = Tc / p.sub
    p2 = p.pole_pairs
    sq3 = math.sqrt(3.0)

    # plant state: start at the operating point with only magnet flux
    th = _wrap(p.theta0)
    la = p.lam_pm * math.cos(th)
    lb = p.lam_pm * math.sin(th)
    w = p.w_ref
    lp_d = 0.0
    lp_q = 0.0
    T_s = p.T_amb
    T_r = p.T_amb
    R_s_pl = p.R_s0 * (1.0 + p.alpha_cu * (T_s - p.T0))
    R_branch = p.R_mag0 * (1.0 + p.alpha_mag * (T_r - p.T0)) * p.branch_gain

    # drive state
    y1a = 0.0
    y1b = 0.0
    y2a = la
    y2b = lb
    integ = p.T_load
    dphi = 1
    dtau = 0
    row = 0
    va_m = 0.0
    vb_m = 0.0
    ia_mp = 0.0
    ib_mp = 0.0
    th_p = th
    active_p = False

    # phasor pipeline: phase mode uses channels 0 (voltage) and 1 (current);
    # positive-sequence mode uses v_alpha, v_beta, i_alpha, i_beta
    N = p.N
    bz = np.zeros((4, bp_coef.shape[0], 2))
    dy = np.zeros((4, N))
    dz = np.zeros((4, N))
    acc = np.zeros((4, 2))
    ist = np.zeros((4, 2), dtype=np.int64)
    lz = np.zeros((4, 2))
    unw = np.zeros((2, 3))
    dsp_n = 0
    out4 = np.zeros(4)
    tz = np.zeros((2, bp_coef.shape[0], 2))
    tap_v = np.nan
    tap_i = np.nan
    tap_vf = np.nan
    tap_if = np.nan
    Vm = np.nan
    Va = np.nan
    Im = np.nan
    Ia = np.nan
    R_hf = np.nan
    T_est = np.nan

    # thermal accumulators
    acc_cu = 0.0
    acc_eddy = 0.0
    acc_i2 = 0.0
    th_cnt = 0
    n_acc = 0

    stats[:] = 0.0
    stats[ST_PRE_MAX] = -np.inf
    stats[ST_PRE_MIN] = np.inf
    stats[ST_PRE_AMAX] = -np.inf
    stats[ST_PRE_AMIN] = np.inf
    stats[ST_PRE_BMAX] = -np.inf
    stats[ST_PRE_BMIN] = np.inf
    stats[ST_INJ_MAX] = -np.inf
    stats[ST_INJ_MIN] = np.inf

    n_log = 0
    for k in range(p.n_steps):
        # 1. sampling
        ia, ib = _current_from_flux(th, la, lb, p.L_d, p.L_q, p.lam_pm)
        if p.sigma_i > 0.0:
            sa_ = ia + p.sigma_i * np.random.normal(0.0, 1.0)
            sb_ = (-0.5 * ia + 0.5 * sq3 * ib) + p.sigma_i * np.random.normal(0.0, 1.0)
            ia_m = sa_
            ib_m = (sa_ + 2.0 * sb_) / sq3
        else:
            ia_m = ia
            ib_m = ib
        vdc_m = p.V_dc
        if p.sigma_vdc > 0.0:
            vdc_m += p.sigma_vdc * np.random.normal(0.0, 1.0)
        R_s_hat = p.R_s0 * (1.0 + p.alpha_cu * (T_s - p.T0))

        # 2. close the previous period
        if k > 0:
            iam = 0.5 * (ia_m + ia_mp)
            ibm = 0.5 * (ib_m + ib_mp)
            y1a, y1b, y2a, y2b = _estimate_flux(y1a, y1b, y2a, y2b, va_m - R_s_hat * iam, vb_m - R_s_hat * ibm,
                                                p.est_wc, p.est_clamp, Tc)
            tap_v = np.nan
            tap_i = np.nan
            tap_vf = np.nan
            tap_if = np.nan
            if active_p:
                xv = va_m
                xvb = vb_m
                if p.decouple:
                    x1a, x1b = _position_flux(th, ia_m, ib_m, p.L_d * 0.5 - p.L_q * 0.5, p.lam_pm)
                    x0a, x0b = _position_flux(th_p, ia_mp, ib_mp, p.L_d * 0.5 - p.L_q * 0.5, p.lam_pm)
                    xv = va_m - (x1a - x0a) / Tc
                    xvb = vb_m - (x1b - x0b) / Tc
                if p.positive_seq:
                    _seq_chain_step(bp_coef, lp_coef, bz, dy, dz, acc, ist, lz, unw, xv, xvb, iam, ibm, p.w0T,
                                    p.resync_every, out4)
                else:
                    _chain_step(bp_coef, lp_coef, bz, dy, dz, acc, ist, lz, unw, xv, iam, p.w0T, p.resync_every,
                                out4)
                dsp_n += 1
                if p.tap:
                    tap_v = xv
                    tap_i = iam
                    tap_vf = xv
                    tap_if = iam
                    for s_ in range(bp_coef.shape[0]):
                        tap_vf = _biquad_step(bp_coef[s_], tz[0, s_], tap_vf)
                        tap_if = _biquad_step(bp_coef[s_], tz[1, s_], tap_if)
                Vm = out4[0]
                Va = _wrap_pi(out4[1])
                Im = out4[2]
                Ia = _wrap_pi(out4[3])
                if dsp_n >= N + p.smooth_settle and Im > p.i_floor:
                    R_hf = Vm / Im * math.cos(out4[3] - out4[1])
                    T_est = _rotor_temperature(R_hf, T_s, p.alpha_cu, p.alpha_mag, p.T0, p.R_s0, p.R_mag0)
                else:
                    R_hf = np.nan
                    T_est = np.nan

        # drive-side estimates at t_k
        lha = y1a + y2a
        lhb = y1b + y2b
        lmag = math.sqrt(lha * lha + lhb * lhb)
        T_hat = _torque(lha, lhb, ia_m, ib_m, p2)

        # 3. speed loop and injection, then the switching decision
        T_ref, integ = _speed_pi((p.w_ref - w) / p2, integ, p.kp, p.ki, p.T_limit, Tc)

        active = _window_active(k, p.win_start, p.win_on, p.win_period)
        if active and not active_p:
            bz[:] = 0.0
            dy[:] = 0.0
            dz[:] = 0.0
            acc[:] = 0.0
            ist[:] = 0
            lz[:] = 0.0
            unw[:] = 0.0
            tz[:] = 0.0
            dsp_n = 0
        if not active:
            Vm = np.nan
            Va = np.nan
            Im = np.nan
            Ia = np.nan
            R_hf = np.nan
            T_est = np.nan

        dla = 0.0
        dlb = 0.0
        dT = 0.0
        if active:
            if p.inj_mode == MODE_FLUX:
                dla, dlb = _hf_flux(p.M, p.n, th, 0.5 * (p.L_d + p.L_q), 0.5 * (p.L_d - p.L_q))
                dT = _vector_torque_offset(th, dla, dlb, lha, lhb, ia_m, ib_m, p.L_d, p.L_q, p2)
            else:
                dT = _hf_torque(p.M, p.n, th, ia_m, ib_m, 0.5 * (p.L_d - p.L_q), p.lam_pm, p2)

        if lmag > 0.0:
            ra = p.lam_ref * lha / lmag + dla
            rb = p.lam_ref * lhb / lmag + dlb
        else:
            ra = p.lam_ref + dla
            rb = dlb
        dphi = _hyst_flux(math.sqrt(ra * ra + rb * rb) - lmag, p.flux_band, dphi)
        dtau = _hyst_torque(T_ref + dT - T_hat, p.torque_band, dtau)
        row = _select(_sector(lha, lhb), dphi, dtau, row)
        sa = SWITCH_TABLE[row, 0]
        sb = SWITCH_TABLE[row, 1]
        sc = SWITCH_TABLE[row, 2]
        va_m, vb_m = _phase_to_ab(sa, sb, sc, vdc_m)
        va, vb = _phase_to_ab(sa, sb, sc, p.V_dc)

        # statistics at the control rate
        t_k = k * Tc
        if not active and k >= p.pre_start and k < p.win_start:
            stats[ST_PRE_N] += 1.0
            stats[ST_PRE_SUM] += lmag
            stats[ST_PRE_MAX] = max(stats[ST_PRE_MAX], lmag)
            stats[ST_PRE_MIN] = min(stats[ST_PRE_MIN], lmag)
            stats[ST_PRE_AMAX] = max(stats[ST_PRE_AMAX], lha)
            stats[ST_PRE_AMIN] = min(stats[ST_PRE_AMIN], lha)
            stats[ST_PRE_BMAX] = max(stats[ST_PRE_BMAX], lhb)
            stats[ST_PRE_BMIN] = min(stats[ST_PRE_BMIN], lhb)
            stats[ST_PRE_TSUM] += T_hat
        if active and (k - p.win_start) % p.win_period >= p.inj_skip:
            stats[ST_INJ_N] += 1.0
            stats[ST_INJ_MAX] = max(stats[ST_INJ_MAX], lmag)
            stats[ST_INJ_MIN] = min(stats[ST_INJ_MIN], lmag)
            stats[ST_INJ_DW] = max(stats[ST_INJ_DW], abs(w - p.w_ref))
            cn = math.cos(p.n * th)
            sn = math.sin(p.n * th)
            stats[ST_SEQ_RE] += ia * cn + ib * sn
            stats[ST_SEQ_IM] += ib * cn - ia * sn

        # logging (plant truth for current and temperatures, drive side for flux/torque)
        if k % p.decim == 0:
            r = log[n_log]
            r[0] = t_k
            r[1] = ia
            r[2] = -0.5 * ia + 0.5 * sq3 * ib
            r[3] = -0.5 * ia - 0.5 * sq3 * ib
            r[4] = va
            r[5] = vb
            r[6] = lha
            r[7] = lhb
            r[8] = T_hat
            r[9] = w / p2 * 60.0 / (2.0 * math.pi)
            r[10] = Vm
            r[11] = Va
            r[12] = Im
            r[13] = Ia
            r[14] = R_hf
            r[15] = T_s
            r[16] = T_r
            r[17] = T_est
            r[18] = 1.0 if active else 0.0
            if p.tap:
                q = tap[n_log]
                q[0] = t_k
                q[1] = tap_v
                q[2] = tap_i
                q[3] = tap_vf
                q[4] = tap_if
            n_log += 1

        ia_mp = ia_m
        ib_mp = ib_m
        th_p = th
        active_p = active

        # 4. plant over the period
        for j in range(p.sub):
            ia_, ib_ = _current_from_flux(th, la, lb, p.L_d, p.L_q, p.lam_pm)
            vea, veb, lp_d, lp_q, hd, hq = _eddy_branch(th, ia_, ib_, lp_d, lp_q, R_branch, p.eddy_wc * dt)
            Tem = _torque(la, lb, ia_, ib_, p2)
            la += (va - R_s_pl * ia_ - vea) * dt
            lb += (vb - R_s_pl * ib_ - veb) * dt
            th = _wrap(th + w * dt)
            w += p2 * (Tem - p.T_load) / p.J * dt
            i2 = ia_ * ia_ + ib_ * ib_
            acc_cu += 1.5 * R_s_pl * i2
            acc_eddy += 1.5 * R_branch * (hd * hd + hq * hq)
            acc_i2 += i2
            n_acc += 1
        if not (math.isfinite(la) and math.isfinite(lb) and math.isfinite(w) and math.isfinite(lmag)):
            return k

        # 5. thermal network
        th_cnt += 1
        if th_cnt == p.thermal_every:
            P_cu = acc_cu / n_acc
            i2m = acc_i2 / n_acc
            we = w / p.w_e_rated
            P_mag = acc_eddy / n_acc + p.rotor_loss_ref * i2m / (p.I_rated * p.I_rated) * we * we
            T_s, T_r = _thermal_euler(T_s, T_r, p.T_amb, P_cu, P_mag, p.C_s, p.C_r, p.R_sa, p.R_rs, p.R_ra,
                                      p.thermal_every * Tc)
            R_s_pl = p.R_s0 * (1.0 + p.alpha_cu * (T_s - p.T0))
            R_branch = p.R_mag0 * (1.0 + p.alpha_mag * (T_r - p.T0)) * p.branch_gain
            acc_cu = 0.0
            acc_eddy = 0.0
            acc_i2 = 0.0
            n_acc = 0
            th_cnt = 0
    return -1
