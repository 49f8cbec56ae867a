"""Compiled right-hand sides and the fixed-step RK4 loop for the plant.

State is the motor angle and velocity ``(th, om)``; with zero winding
inductance the current is algebraic.  All model constants travel in one
float64 vector indexed by the ``P_*`` constants below.  Exogenous inputs
(human knee angle, torque reference) are evaluated inside the loop from a
packed signal so that every RK4 stage sees the exact input at its own time.
"""

import math

import numba as nb
import numpy as np

P_INV_J = 0
P_B = 1
P_KT = 2
P_KB = 3
P_INV_R = 4
P_IMAX = 5
P_KC = 6
P_BC = 7
P_N = 8
P_V = 9
P_KP = 10
P_VMAX = 11
N_PARAMS = 12

SIG_NONE = 0
SIG_SINE = 1
SIG_SPLINE = 2


@nb.njit(cache=True)
def _clamp(x, lim):
    if x > lim:
        return lim
    if x < -lim:
        return -lim
    return x


@nb.njit(cache=True)
def signal_eval(t, kind, prm, c, cd):
    if kind == SIG_SINE:
        w = 2.0 * math.pi * prm[1]
        a = w * t + prm[2]
        return prm[3] + prm[0] * math.sin(a), prm[0] * w * math.cos(a)
    if kind == SIG_SPLINE:
        h = prm[0]
        period = prm[1]
        if period > 0.0:
            t = t - period * math.floor(t / period)
        i = int(t / h)
        m = c.shape[1]
        if i < 0:
            i = 0
        elif i >= m:
            i = m - 1
        d = t - i * h
        u = ((c[0, i] * d + c[1, i]) * d + c[2, i]) * d + c[3, i]
        ud = ((cd[0, i] * d + cd[1, i]) * d + cd[2, i]) * d + cd[3, i]
        return u, ud
    return 0.0, 0.0


@nb.njit(cache=True)
def locked_rhs(th, om, u, ud, p):
    # output held at zero; coupling spring loads the gear
    cur = _clamp((p[P_V] - p[P_KB] * om) * p[P_INV_R], p[P_IMAX])
    tau_a = (p[P_KC] * th + p[P_BC] * om) / p[P_N]
    return om, (p[P_KT] * cur - p[P_B] * om - tau_a / p[P_N]) * p[P_INV_J]


@nb.njit(cache=True)
def free_rhs(th, om, u, ud, p):
    cur = _clamp((p[P_V] - p[P_KB] * om) * p[P_INV_R], p[P_IMAX])
    return om, (p[P_KT] * cur - p[P_B] * om) * p[P_INV_J]


@nb.njit(cache=True)
def backdriven_rhs(th, om, u, ud, p):
    # u, ud: human knee angle and velocity
    cur = _clamp((p[P_V] - p[P_KB] * om) * p[P_INV_R], p[P_IMAX])
    tau_a = p[P_KC] * (th / p[P_N] - u) + p[P_BC] * (om / p[P_N] - ud)
    return om, (p[P_KT] * cur - p[P_B] * om - tau_a / p[P_N]) * p[P_INV_J]


@nb.njit(cache=True)
def closed_loop_rhs(th, om, u, ud, p):
    # u: torque reference; proportional torque loop commands winding voltage
    tau_a = (p[P_KC] * th + p[P_BC] * om) / p[P_N]
    volts = _clamp(p[P_KP] * (u - tau_a), p[P_VMAX])
    cur = _clamp((volts - p[P_KB] * om) * p[P_INV_R], p[P_IMAX])
    return om, (p[P_KT] * cur - p[P_B] * om - tau_a / p[P_N]) * p[P_INV_J]


@nb.njit(cache=True)
def rk4(rhs, th0, om0, t0, nsteps, dt, p, kind, prm, c, cd):
    """Integrate ``nsteps`` RK4 steps; returns (theta, omega, fail_index)."""
    th_out = np.empty(nsteps + 1)
    om_out = np.empty(nsteps + 1)
    th_out[0] = th0
    om_out[0] = om0
    th = th0
    om = om0
    half = 0.5 * dt
    for k in range(nsteps):
        t = t0 + k * dt
        u0, ud0 = signal_eval(t, kind, prm, c, cd)
        u1, ud1 = signal_eval(t + half, kind, prm, c, cd)
        u2, ud2 = signal_eval(t + dt, kind, prm, c, cd)
        a0, a1 = rhs(th, om, u0, ud0, p)
        b0, b1 = rhs(th + half * a0, om + half * a1, u1, ud1, p)
        c0, c1 = rhs(th + half * b0, om + half * b1, u1, ud1, p)
        d0, d1 = rhs(th + dt * c0, om + dt * c1, u2, ud2, p)
        th = th + dt / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
        om = om + dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        if not (math.isfinite(th) and math.isfinite(om)):
            return th_out[: k + 1], om_out[: k + 1], k + 1
        th_out[k + 1] = th
        om_out[k + 1] = om
    return th_out, om_out, -1


@nb.njit(cache=True)
def rhs_eval(rhs, th, om, u, ud, p):
    return rhs(th, om, u, ud, p)
