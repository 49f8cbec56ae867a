"""Time-domain simulation, metric extraction and frequency response.

All plant runs use fixed-step classical RK4.  The requested step ``dt`` is
an upper bound: it is reduced, per design, so that the fastest mechanical
pole sits at least ``STABILITY_MARGIN`` times inside the RK4 stability
limit on the negative real axis.  Small motors have a very fast
damping pole (b_m / J_m grows as r_g**-3), which a fixed global step would
not survive.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels as K
from .errors import DivergenceError, DomainError, NotFoundError, UnsupportedConfigError, ValidationError
from .motor import MotorParams
from .plant import (
    ControlGains,
    DrivetrainConfig,
    PlantState,
    RationalTF,
    coupling_torque,
    motor_current,
    pack_params,
)

DEFAULT_DT = 5e-5
RK4_STABILITY = 2.785  # |lambda dt| limit of RK4 on the negative real axis
STABILITY_MARGIN = 20.0
STEADY_TORQUE_RATE = 1e-3  # N m/s
STEADY_SPEED_RATE = 1e-3  # rad/s^2 at the motor


@dataclass
class SimTrace:
    dt: float
    time: np.ndarray
    motor_angle: np.ndarray
    motor_velocity: np.ndarray
    current: np.ndarray
    output_torque: np.ndarray
    output_speed: np.ndarray
    gear_ratio: float = 1.0

    COLUMNS = (
        ("time", "time_s"),
        ("motor_angle", "motor_angle_rad"),
        ("motor_velocity", "motor_velocity_rad_s"),
        ("current", "current_a"),
        ("output_torque", "output_torque_nm"),
        ("output_speed", "output_speed_rad_s"),
    )

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        n = len(self.time)
        for attr, _ in self.COLUMNS:
            if len(getattr(self, attr)) != n:
                raise ValidationError(f"column {attr} has mismatched length")

    def __len__(self):
        return len(self.time)

    def state(self, k: int) -> PlantState:
        return PlantState(
            motor_angle=float(self.motor_angle[k]),
            motor_velocity=float(self.motor_velocity[k]),
            current=float(self.current[k]),
            output_torque=float(self.output_torque[k]),
            gear_ratio=self.gear_ratio,
        )

    def to_csv(self, path, comments=()):
        _write_columns(path, [(h, getattr(self, a)) for a, h in self.COLUMNS], comments)


@dataclass
class FrequencyResponse:
    frequencies: np.ndarray  # Hz
    magnitude_db: np.ndarray
    phase_deg: np.ndarray

    def __post_init__(self):
        if not (len(self.frequencies) == len(self.magnitude_db) == len(self.phase_deg)):
            raise ValidationError("frequency response arrays differ in length")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValidationError("frequencies must be strictly increasing")

    def to_csv(self, path, comments=()):
        cols = [
            ("frequency_hz", self.frequencies),
            ("magnitude_db", self.magnitude_db),
            ("phase_deg", self.phase_deg),
        ]
        _write_columns(path, cols, comments)


def _write_columns(path, cols, comments=()):
    close = False
    if hasattr(path, "write"):
        fh = path
    else:
        fh = open(path, "w", newline="")
        close = True
    try:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([h for h, _ in cols])
        for row in zip(*(c for _, c in cols)):
            w.writerow([repr(float(v)) for v in row])
    finally:
        if close:
            fh.close()


# ---------------------------------------------------------------------------
# generic integrator

@dataclass
class Trajectory:
    dt: float
    time: np.ndarray
    states: np.ndarray  # shape (len(time), dim)


def integrate(derivs: Callable, x0, duration: float, dt: float = DEFAULT_DT) -> Trajectory:
    """Fixed-step RK4 of ``x' = derivs(t, x)`` from ``t = 0`` to ``duration``.

    Plain-Python loop; the plant simulations use the compiled loop in
    ``_kernels`` but solve the same recurrence.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if not duration >= 0:
        raise ValidationError("duration must be non-negative")
    nsteps = int(round(duration / dt))
    x = np.array(x0, dtype=float).reshape(-1)
    out = np.empty((nsteps + 1, x.size))
    out[0] = x
    h = dt
    for k in range(nsteps):
        t = k * h
        k1 = np.asarray(derivs(t, x), dtype=float)
        k2 = np.asarray(derivs(t + h / 2, x + h / 2 * k1), dtype=float)
        k3 = np.asarray(derivs(t + h / 2, x + h / 2 * k2), dtype=float)
        k4 = np.asarray(derivs(t + h, x + h * k3), dtype=float)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at step {k + 1}", step=k + 1)
        out[k + 1] = x
    return Trajectory(dt=h, time=np.arange(nsteps + 1) * h, states=out)


# ---------------------------------------------------------------------------
# exogenous inputs

_EMPTY = np.zeros((4, 1))


class InputSignal:
    """Scalar time signal (value and derivative) usable inside compiled RK4."""

    def __init__(self, kind, prm, c=_EMPTY, cd=_EMPTY, spline=None):
        self.kind = kind
        self.prm = np.asarray(prm, dtype=float)
        self.c = np.ascontiguousarray(c, dtype=float)
        self.cd = np.ascontiguousarray(cd, dtype=float)
        self._spline = spline

    @classmethod
    def zero(cls):
        return cls(K.SIG_NONE, np.zeros(4))

    @classmethod
    def sine(cls, amplitude, freq, phase=0.0, offset=0.0):
        return cls(K.SIG_SINE, [amplitude, freq, phase, offset])

    @classmethod
    def from_samples(cls, values, dt, periodic=False):
        """Cubic-spline signal through uniformly spaced samples starting at t = 0.

        With ``periodic=True`` the samples are one period (the sample after
        the last one equals the first) and the signal wraps forever.
        """
        y = np.asarray(values, dtype=float)
        if y.size < 4:
            raise ValidationError("need at least 4 samples for a spline input")
        if periodic:
            y = np.append(y, y[0])
            t = np.arange(y.size) * dt
            spl = CubicSpline(t, y, bc_type="periodic")
            period = t[-1]
        else:
            t = np.arange(y.size) * dt
            spl = CubicSpline(t, y)
            period = 0.0
        dspl = spl.derivative()
        cd = np.vstack([np.zeros((1, dspl.c.shape[1])), dspl.c])
        return cls(K.SIG_SPLINE, [dt, period, 0.0, 0.0], spl.c, cd, spline=(spl, dspl))

    def __call__(self, t):
        """Return (value, derivative) at times ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == K.SIG_NONE:
            return np.zeros_like(t), np.zeros_like(t)
        if self.kind == K.SIG_SINE:
            amp, f, ph, off = self.prm
            w = 2 * np.pi * f
            return off + amp * np.sin(w * t + ph), amp * w * np.cos(w * t + ph)
        spl, dspl = self._spline
        period = self.prm[1]
        tt = np.mod(t, period) if period > 0 else t
        return spl(tt), dspl(tt)

    def packed(self):
        return self.kind, self.prm, self.c, self.cd


# ---------------------------------------------------------------------------
# plant runs

_MODES = {
    "locked": K.locked_rhs,
    "free": K.free_rhs,
    "backdriven": K.backdriven_rhs,
    "closed_loop": K.closed_loop_rhs,
}


def _stiffness(m: MotorParams, d: DrivetrainConfig, mode: str, kp: float = 0.0):
    """Spring and damping seen by the rotor in each linear regime."""
    n = d.gear_ratio
    k_eff = 0.0 if mode == "free" else d.coupling_stiffness / n**2
    if mode == "closed_loop":
        k_eff *= 1.0 + kp * m.torque_constant * n / m.resistance
    b_sat = m.damping + d.coupling_damping / n**2
    b_lin = b_sat + m.torque_constant * m.backemf_constant / m.resistance
    return k_eff, (b_sat, b_lin)


def plant_rates(m: MotorParams, d: DrivetrainConfig, mode: str, kp: float = 0.0):
    """(fastest, slowest) pole magnitudes over the saturated and linear regimes."""
    k_eff, dampings = _stiffness(m, d, mode, kp)
    J = m.rotor_inertia
    fast, slow = 0.0, math.inf
    for B in dampings:
        roots = np.roots([J, B, k_eff])
        mags = np.abs(roots)
        fast = max(fast, float(mags.max()))
        re = np.abs(roots.real)
        re = re[re > 1e-12 * max(1.0, float(mags.max()))]
        if re.size:
            slow = min(slow, float(re.min()))
    return fast, slow


def stable_step(m: MotorParams, d: DrivetrainConfig, mode: str, dt: float = DEFAULT_DT, kp: float = 0.0) -> float:
    fast, _ = plant_rates(m, d, mode, kp)
    return min(dt, RK4_STABILITY / (STABILITY_MARGIN * fast))


def run_plant(mode, p, duration, dt, x0=(0.0, 0.0), signal: Optional[InputSignal] = None, t0=0.0, design=None):
    """Integrate one plant configuration; returns (time, theta_m, omega_m)."""
    rhs = _MODES[mode]
    sig = (signal or InputSignal.zero()).packed()
    nsteps = int(round(duration / dt))
    th, om, fail = K.rk4(rhs, float(x0[0]), float(x0[1]), float(t0), nsteps, float(dt), p, *sig)
    if fail >= 0:
        raise DivergenceError(f"{mode} simulation diverged at step {fail}", step=fail, design=design)
    t = t0 + np.arange(nsteps + 1) * dt
    return t, th, om


def _make_trace(dt, t, th, om, current, torque, n):
    return SimTrace(
        dt=dt,
        time=t,
        motor_angle=th,
        motor_velocity=om,
        current=current,
        output_torque=torque,
        output_speed=om / n,
        gear_ratio=n,
    )


def _run_until_steady(mode, m, d, p, dt, rate, tol, max_chunks=60):
    _, slow = plant_rates(m, d, mode)
    chunk = max(5.0 / slow, 0.02) if math.isfinite(slow) else 0.05
    chunk = dt * math.ceil(chunk / dt)
    pieces = []
    x0 = (0.0, 0.0)
    t0 = 0.0
    for _ in range(max_chunks):
        t, th, om = run_plant(mode, p, chunk, dt, x0, t0=t0, design=(m.gap_radius, d.gear_ratio))
        pieces.append((t, th, om) if not pieces else (t[1:], th[1:], om[1:]))
        x0 = (th[-1], om[-1])
        t0 = t[-1]
        if abs(rate(th[-1], om[-1])) < tol:
            break
    else:
        raise NotFoundError(f"{mode} run did not settle within {t0:.3g} s")
    return tuple(np.concatenate(c) for c in zip(*pieces))


def simulate_locked_output(m: MotorParams, d: DrivetrainConfig, dt: float = DEFAULT_DT) -> SimTrace:
    """Full-voltage run against a locked joint, from rest until the torque settles."""
    h = stable_step(m, d, "locked", dt)
    p = pack_params(m, d, volts=d.supply_voltage, current_limit=m.max_current)
    n = d.gear_ratio

    def rate(th, om):
        _, acc = K.rhs_eval(K.locked_rhs, th, om, 0.0, 0.0, p)
        return (d.coupling_stiffness * om + d.coupling_damping * acc) / n

    t, th, om = _run_until_steady("locked", m, d, p, h, rate, STEADY_TORQUE_RATE)
    cur = motor_current(om, m, d.supply_voltage, m.max_current)
    return _make_trace(h, t, th, om, cur, coupling_torque(th, om, d), n)


def simulate_free_output(
    m: MotorParams, d: DrivetrainConfig, dt: float = DEFAULT_DT, current_limit: bool = False
) -> SimTrace:
    """Full-voltage run with the output unloaded, from rest until the speed settles."""
    h = stable_step(m, d, "free", dt)
    lim = m.max_current if current_limit else math.inf
    p = pack_params(m, d, volts=d.supply_voltage, current_limit=lim)
    n = d.gear_ratio

    # judged on the motor side so the run does not depend on n
    def rate(th, om):
        return K.rhs_eval(K.free_rhs, th, om, 0.0, 0.0, p)[1]

    t, th, om = _run_until_steady("free", m, d, p, h, rate, STEADY_SPEED_RATE)
    cur = motor_current(om, m, d.supply_voltage, lim)
    return _make_trace(h, t, th, om, cur, np.zeros_like(t), n)


def simulate_max_torque(m: MotorParams, n: float, d: Optional[DrivetrainConfig] = None, dt: float = DEFAULT_DT) -> float:
    """Peak interaction torque (N m) against a locked joint at full voltage."""
    d = (d or DrivetrainConfig()).with_ratio(n)
    tr = simulate_locked_output(m, d, dt)
    return float(np.max(np.abs(tr.output_torque)))


def simulate_max_speed(
    m: MotorParams, n: float, d: Optional[DrivetrainConfig] = None, dt: float = DEFAULT_DT, current_limit: bool = False
) -> float:
    """Peak output speed (rad/s) with the output unloaded at full voltage."""
    d = (d or DrivetrainConfig()).with_ratio(n)
    tr = simulate_free_output(m, d, dt, current_limit)
    return float(np.max(np.abs(tr.output_speed)))


def gait_signal(theta_h, dt, periodic):
    return InputSignal.from_samples(theta_h, dt, periodic=periodic)


def simulate_backdriven(
    m: MotorParams,
    d: DrivetrainConfig,
    signal: InputSignal,
    duration: float,
    dt: float = DEFAULT_DT,
    x0=None,
    step_unit: Optional[float] = None,
) -> SimTrace:
    """Unpowered motor dragged by a prescribed knee angle.

    Starts with the coupling relaxed (motor tracking the knee) unless ``x0``
    is given.  ``step_unit`` forces an integer number of steps per unit time
    span (one gait cycle) so cycle boundaries fall on samples.
    """
    h = stable_step(m, d, "backdriven", dt)
    if step_unit:
        h = step_unit / math.ceil(step_unit / h - 1e-9)
    n = d.gear_ratio
    if x0 is None:
        u0, ud0 = signal(0.0)
        x0 = (n * float(u0), n * float(ud0))
    p = pack_params(m, d)
    t, th, om = run_plant("backdriven", p, duration, h, x0=x0, signal=signal, design=(m.gap_radius, n))
    u, ud = signal(t)
    cur = motor_current(om, m, 0.0)
    return _make_trace(h, t, th, om, cur, coupling_torque(th, om, d, u, ud), n)


def simulate_backdrive(
    m: MotorParams,
    n: float,
    gait,
    d: Optional[DrivetrainConfig] = None,
    dt: float = DEFAULT_DT,
    cycles: int = 3,
    period: Optional[float] = None,
):
    """RMS and peak backdrive torque (N m) over steady gait cycles.

    ``gait`` is a GaitTrace with a ``theta_h`` channel.  A trace shorter than
    the simulated span is treated as one periodic cycle.  The first cycle is
    always discarded; more are dropped when the slowest pole needs longer
    than one cycle to fade, and two full cycles are kept for the metrics.
    """
    d = (d or DrivetrainConfig()).with_ratio(n)
    if period is None:
        period = getattr(gait, "cycle_period", None) or 1.0
    theta = gait.channel("theta_h")
    _, slow = plant_rates(m, d, "backdriven")
    discard = max(1, math.ceil(5.0 / (slow * period))) if math.isfinite(slow) else 1
    total = max(cycles, discard + 2)
    duration = total * period
    span = len(theta) * gait.dt
    periodic = span < duration - 0.5 * gait.dt
    sig = gait_signal(theta, gait.dt, periodic)
    tr = simulate_backdriven(m, d, sig, duration, dt, step_unit=period)
    k0 = int(round(discard * period / tr.dt))
    tau = tr.output_torque[k0:-1]
    if tau.size == 0:
        return 0.0, 0.0
    return float(np.sqrt(np.mean(tau**2))), float(np.max(np.abs(tau)))


def simulate_closed_loop(
    m: MotorParams,
    d: DrivetrainConfig,
    g: ControlGains,
    reference: InputSignal,
    duration: float,
    dt: float = DEFAULT_DT,
) -> SimTrace:
    """Proportional torque loop tracking ``reference`` with the knee fixed."""
    if g.ki != 0.0:
        raise UnsupportedConfigError("integral gain is not supported; set ki = 0")
    h = stable_step(m, d, "closed_loop", dt, kp=g.kp)
    p = pack_params(m, d, kp=g.kp)
    t, th, om = run_plant("closed_loop", p, duration, h, signal=reference, design=(m.gap_radius, d.gear_ratio))
    tau = coupling_torque(th, om, d)
    ref, _ = reference(t)
    cur = motor_current(om, m, g.kp * (ref - tau))
    return _make_trace(h, t, th, om, cur, tau, d.gear_ratio)


# ---------------------------------------------------------------------------
# frequency domain

def frequency_response(tf: RationalTF, f_lo: float, f_hi: float, points: int = 200) -> FrequencyResponse:
    if not (0 < f_lo < f_hi):
        raise ValidationError("need 0 < f_lo < f_hi")
    if points < 2:
        raise ValidationError("need at least 2 points")
    f = np.geomspace(f_lo, f_hi, int(points))
    H = tf.response(2 * np.pi * f)
    mag = 20 * np.log10(np.abs(H))
    phase = np.degrees(np.unwrap(np.angle(H)))
    return FrequencyResponse(frequencies=f, magnitude_db=mag, phase_deg=phase)


def bandwidth_neg3db(tf: RationalTF, f_lo: float = 1e-3, f_hi: float = 1e4, tol: float = 1e-3) -> float:
    """Lowest frequency (Hz) where the gain falls 3 dB below its DC value."""
    dc = abs(tf.dc_gain()) if tf.den[-1] != 0 else math.inf
    if not (math.isfinite(dc) and dc > 0):
        raise DomainError("bandwidth needs a finite nonzero DC gain")
    target = dc * 10 ** (-3.0 / 20.0)

    def below(f):
        return abs(tf.response(2 * np.pi * f)) < target

    grid = np.geomspace(f_lo, f_hi, 4001)
    mask = np.abs(tf.response(2 * np.pi * grid)) < target
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise NotFoundError(f"gain never drops 3 dB below DC within [{f_lo}, {f_hi}] Hz")
    i = int(idx[0])
    lo = grid[i - 1] if i > 0 else 0.0
    hi = grid[i]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if below(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
