"""Independent reference models used only by the test-suite.

``neuron_reference`` integrates the hand-reduced three-state neuron equations
with fixed-step RK4 (numba), sharing no code with the circuit compiler or
the event-located solver. With the h-Tron superconducting, node H merges into
C, the bias cut-set gives ``i_main = I_b - i_ctrl`` and the remaining states
are the coupling current ``i1`` and the two nanowire currents ``j1``, ``j2``::

    2 L_c di1/dt = V_M - V_C - R_h i1
    L_1   dj1/dt = V_C - R_snw1 j1
    L_2   dj2/dt = V_M - R_snw2 j2
    V_C = R_1 (i1 - j1)
    V_M = R_2 (I_b - i1 + I_in - j2)

Nanowire switching is checked after every step. When a guard crosses inside
a step the step is redone up to the linearly interpolated crossing, the mode
flips and the remainder of the step is integrated in the new mode.
"""
from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _rhs(i1, j1, j2, p, r1s, r2s):
    # p: lc, l1, l2, r1, r2, rh, ib, iin
    vc = p[3] * (i1 - j1)
    vm = p[4] * (p[6] - i1 + p[7] - j2)
    return ((vm - vc - p[5] * i1) / (2.0 * p[0]), (vc - r1s * j1) / p[1],
            (vm - r2s * j2) / p[2])


@numba.njit(cache=True)
def _rk4(y, h, p, r1s, r2s):
    a0, a1, a2 = _rhs(y[0], y[1], y[2], p, r1s, r2s)
    b0, b1, b2 = _rhs(y[0] + 0.5 * h * a0, y[1] + 0.5 * h * a1, y[2] + 0.5 * h * a2, p, r1s, r2s)
    c0, c1, c2 = _rhs(y[0] + 0.5 * h * b0, y[1] + 0.5 * h * b1, y[2] + 0.5 * h * b2, p, r1s, r2s)
    d0, d1, d2 = _rhs(y[0] + h * c0, y[1] + h * c1, y[2] + h * c2, p, r1s, r2s)
    w = h / 6.0
    return (y[0] + w * (a0 + 2.0 * b0 + 2.0 * c0 + d0),
            y[1] + w * (a1 + 2.0 * b1 + 2.0 * c1 + d1),
            y[2] + w * (a2 + 2.0 * b2 + 2.0 * c2 + d2))


@numba.njit(cache=True)
def _guard(j, resistive, ic, ir):
    # positive once the switching condition is met
    if resistive:
        return ir - abs(j)
    return abs(j) - ic


@numba.njit(cache=True)
def _integrate(y0, p, snw, t_end, dt, pool):
    # snw: ic1, ir1, rhs1, ic2, ir2, rhs2
    n_steps = int(math.ceil(t_end / dt))
    n_bins = n_steps // pool + 1
    bt = np.zeros(n_bins)
    bv = np.full(n_bins, -np.inf)
    ev_t = np.zeros(200000)
    ev_k = np.zeros(200000, dtype=np.int64)
    n_ev = 0
    y = (y0[0], y0[1], y0[2])
    s1 = False
    s2 = False
    t = 0.0
    for k in range(n_steps):
        h = dt
        done = 0.0
        while h > 0.0:
            r1s = snw[2] if s1 else 0.0
            r2s = snw[5] if s2 else 0.0
            yn = _rk4(y, h, p, r1s, r2s)
            g1a = _guard(y[1], s1, snw[0], snw[1])
            g1b = _guard(yn[1], s1, snw[0], snw[1])
            g2a = _guard(y[2], s2, snw[3], snw[4])
            g2b = _guard(yn[2], s2, snw[3], snw[4])
            th1 = 2.0
            th2 = 2.0
            if g1b >= 0.0:
                th1 = g1a / (g1a - g1b) if g1a < 0.0 else 0.0
            if g2b >= 0.0:
                th2 = g2a / (g2a - g2b) if g2a < 0.0 else 0.0
            if th1 > 1.0 and th2 > 1.0:
                y = yn
                done += h
                h = 0.0
                break
            which = 1 if th1 <= th2 else 2
            th = min(th1, th2)
            if th > 0.0:
                y = _rk4(y, th * h, p, r1s, r2s)
            done += th * h
            h -= th * h
            if which == 1:
                s1 = not s1
            else:
                s2 = not s2
            if n_ev < ev_t.shape[0]:
                ev_t[n_ev] = t + done
                ev_k[n_ev] = which * 2 + (1 if (s1 if which == 1 else s2) else 0)
                n_ev += 1
        t = (k + 1) * dt
        vm = p[4] * (p[6] - y[0] + p[7] - y[2])
        b = k // pool
        if vm > bv[b]:
            bv[b] = vm
            bt[b] = t
    return bt, bv, ev_t[:n_ev], ev_k[:n_ev]


def neuron_reference(cfg, dt: float = 0.05e-12, pool: int = 200):
    """Max-pooled output waveform and SNW events of the reduced neuron.

    Returns ``(t, v_out, events)``: one sample per ``pool`` steps holding the
    largest ``V_M`` of that bin, and ``(time, device, to_resistive)`` tuples.
    """
    from cryospike.neuron import init_bias_split

    r1 = cfg.sm_ctrl.resistance(cfg.state_ctrl)
    r2 = cfg.sm_main.resistance(cfg.state_main)
    p = np.array([cfg.l_c, cfg.snw_ctrl.l_nw, cfg.snw_main.l_nw, r1, r2, 0.0,
                  cfg.i_bias, cfg.i_in])
    snw = np.array([cfg.snw_ctrl.i_c, cfg.snw_ctrl.i_r, cfg.snw_ctrl.r_hs,
                    cfg.snw_main.i_c, cfg.snw_main.i_r, cfg.snw_main.r_hs])
    split = init_bias_split(cfg)
    y0 = np.array([split[0], split[2], split[3]])
    bt, bv, et, ek = _integrate(y0, p, snw, cfg.t_end, dt, pool)
    keep = np.isfinite(bv)
    events = [(float(t), "snw1" if k // 2 == 1 else "snw2", bool(k % 2)) for t, k in zip(et, ek)]
    return bt[keep], bv[keep], events


def single_oscillator_period(l: float, r_s: float, r_hs: float, i_c: float, i_r: float,
                             i_b: float) -> float:
    """Period from the two exponential legs solved independently for the crossing times."""
    # resistive leg: i(t) = i_inf + (i_c - i_inf) exp(-t/tau1), stop at i_r
    tau1 = l / (r_s + r_hs)
    i_inf1 = i_b * r_s / (r_s + r_hs)
    t1 = -tau1 * math.log((i_r - i_inf1) / (i_c - i_inf1))
    # superconducting leg: i(t) = i_b + (i_r - i_b) exp(-t/tau2), stop at i_c
    tau2 = l / r_s
    t2 = -tau2 * math.log((i_c - i_b) / (i_r - i_b))
    return t1 + t2


@numba.njit(cache=True)
def _ramp_split(p, ramp, t_end, dt):
    # p: lcc, lcm, l1, l2, r1, r2, ib ; bias ramps linearly over ``ramp`` then holds
    i1 = 0.0
    j1 = 0.0
    j2 = 0.0
    n = int(math.ceil(t_end / dt))
    for k in range(n):
        t = k * dt
        y = (i1, j1, j2)
        ks = np.zeros((4, 3))
        for s in range(4):
            h = 0.0 if s == 0 else (0.5 * dt if s < 3 else dt)
            tt = t + h
            ib = p[6] * min(tt / ramp, 1.0)
            dib = p[6] / ramp if tt < ramp else 0.0
            if s == 0:
                a = y
            else:
                a = (y[0] + h * ks[s - 1, 0], y[1] + h * ks[s - 1, 1], y[2] + h * ks[s - 1, 2])
            vc = p[4] * (a[0] - a[1])
            vm = p[5] * (ib - a[0] - a[2])
            ks[s, 0] = (p[1] * dib + vm - vc) / (p[0] + p[1])
            ks[s, 1] = vc / p[2]
            ks[s, 2] = vm / p[3]
        i1 += dt / 6.0 * (ks[0, 0] + 2 * ks[1, 0] + 2 * ks[2, 0] + ks[3, 0])
        j1 += dt / 6.0 * (ks[0, 1] + 2 * ks[1, 1] + 2 * ks[2, 1] + ks[3, 1])
        j2 += dt / 6.0 * (ks[0, 2] + 2 * ks[1, 2] + 2 * ks[2, 2] + ks[3, 2])
    return i1, j1, j2


def ramped_bias_split(l_c_ctrl, l_c_main, l_nw_ctrl, l_nw_main, r_ctrl, r_main, i_bias,
                      ramp=50e-9, t_end=5e-6, dt=1e-12):
    """Control/main nanowire currents after a slow bias ramp into the all-superconducting
    neuron (input off), fixed-step RK4 with the ramp entering through ``L_c,main dI_b/dt``."""
    p = np.array([l_c_ctrl, l_c_main, l_nw_ctrl, l_nw_main, r_ctrl, r_main, i_bias])
    i1, j1, j2 = _ramp_split(p, ramp, t_end, dt)
    return j1, j2
