"""Knee-angle traces: synthetic waveforms, CSV ingestion and resampling.

The standard backdrive input is a smooth two-harmonic approximation of
normative knee flexion,

    theta_h(t) = A * (0.35 - 0.28 cos(2 pi f t) - 0.17 cos(4 pi f t - 0.6))

with its analytic derivative as the velocity channel.  Measured data can be
substituted through CSV files.  Angles are radians everywhere inside the
package; degree columns are converted on load.

CSV schema (first column must be ``time_s``)::

    time_s, theta_h_rad[, theta_h_vel_rad_s]
    time_s, q_r_rad, q_l_rad

``_deg`` / ``_deg_s`` tags are accepted in place of ``_rad`` / ``_rad_s``.
Columns with any other header are carried through untouched.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import TraceFormatError, ValidationError

ANGLE_MIN = -math.pi / 2
ANGLE_MAX = math.pi
UNIFORM_TOL = 1e-6  # s

ANGLE_CHANNELS = ("theta_h", "q_r", "q_l")
# canonical channel order when writing
CHANNEL_ORDER = ("theta_h", "theta_h_vel", "q_r", "q_r_vel", "q_l", "q_l_vel")

# fundamental and second-harmonic terms of the synthetic knee waveform
_MEAN = 0.35
_H1 = 0.28
_H2 = 0.17
_H2_PHASE = 0.6


def knee_angle(t, cycle_freq: float = 1.0, amplitude_scale: float = 1.0):
    w = 2 * np.pi * cycle_freq
    t = np.asarray(t, dtype=float)
    return amplitude_scale * (_MEAN - _H1 * np.cos(w * t) - _H2 * np.cos(2 * w * t - _H2_PHASE))


def knee_velocity(t, cycle_freq: float = 1.0, amplitude_scale: float = 1.0):
    w = 2 * np.pi * cycle_freq
    t = np.asarray(t, dtype=float)
    return amplitude_scale * (_H1 * w * np.sin(w * t) + 2 * w * _H2 * np.sin(2 * w * t - _H2_PHASE))


@dataclass
class GaitTrace:
    """Uniformly sampled knee angles (rad) and optional velocities (rad/s)."""

    dt: float
    time: np.ndarray
    channels: dict
    extras: dict = field(default_factory=dict)
    cycle_period: Optional[float] = None

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.channels = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        n = len(self.time)
        if n < 2:
            raise ValidationError("a trace needs at least two samples")
        expected = self.time[0] + np.arange(n) * self.dt
        if np.max(np.abs(self.time - expected)) > UNIFORM_TOL:
            raise ValidationError("time stamps are not uniformly spaced at dt")
        if "theta_h" not in self.channels and not {"q_r", "q_l"} <= self.channels.keys():
            raise ValidationError("trace needs theta_h or both q_r and q_l")
        for name, v in self.channels.items():
            if len(v) != n:
                raise ValidationError(f"channel {name} length differs from time")
            if not np.all(np.isfinite(v)):
                raise ValidationError(f"channel {name} has non-finite values")
            if name in ANGLE_CHANNELS and (v.min() < ANGLE_MIN or v.max() > ANGLE_MAX):
                raise ValidationError(f"channel {name} leaves the knee range [-pi/2, pi]")
        for name, v in self.extras.items():
            if len(v) != n:
                raise ValidationError(f"column {name} length differs from time")

    def __len__(self):
        return len(self.time)

    @property
    def duration(self) -> float:
        return len(self.time) * self.dt

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise ValidationError(f"trace has no {name!r} channel") from None

    def velocity(self, name: str = "theta_h") -> np.ndarray:
        """Stored velocity channel, else central differences of the angle."""
        vel = self.channels.get(f"{name}_vel")
        if vel is not None:
            return vel
        return np.gradient(self.channel(name), self.dt)


def synthetic_knee_trace(
    cycle_freq: float = 1.0,
    duration: Optional[float] = None,
    dt: float = 1e-3,
    amplitude_scale: float = 1.0,
) -> GaitTrace:
    """Single-joint knee trace with analytic velocity."""
    if not cycle_freq > 0:
        raise ValidationError("cycle_freq must be positive")
    period = 1.0 / cycle_freq
    if duration is None:
        duration = period
    if duration < period * (1 - 1e-9):
        raise ValidationError("duration must cover at least one gait cycle")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    t = np.arange(int(round(duration / dt))) * dt
    return GaitTrace(
        dt=dt,
        time=t,
        channels={
            "theta_h": knee_angle(t, cycle_freq, amplitude_scale),
            "theta_h_vel": knee_velocity(t, cycle_freq, amplitude_scale),
        },
        cycle_period=period,
    )


def two_leg_synthetic(
    cycle_freq: float = 1.0,
    duration: Optional[float] = None,
    dt: float = 1e-3,
    phase_offset: float = 0.5,
    amplitude_scale: float = 1.0,
) -> GaitTrace:
    """Left knee follows the synthetic waveform; right knee lags by ``phase_offset`` cycles."""
    if not 0 <= phase_offset < 1:
        raise ValidationError("phase_offset must lie in [0, 1)")
    base = synthetic_knee_trace(cycle_freq, duration, dt, amplitude_scale)
    t = base.time
    shift = phase_offset / cycle_freq
    return GaitTrace(
        dt=dt,
        time=t,
        channels={
            "q_r": knee_angle(t - shift, cycle_freq, amplitude_scale),
            "q_l": base.channels["theta_h"],
        },
        cycle_period=base.cycle_period,
    )


def resample(trace: GaitTrace, dt: float) -> GaitTrace:
    """Cubic-spline resampling onto a new uniform step over the same span."""
    if not dt > 0:
        raise ValidationError("dt must be positive")
    t0, t1 = trace.time[0], trace.time[-1]
    n = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
    t = t0 + np.arange(n) * dt

    def interp(v):
        return CubicSpline(trace.time, v)(t)

    extras = {}
    for k, v in trace.extras.items():
        if np.issubdtype(np.asarray(v).dtype, np.number):
            extras[k] = interp(np.asarray(v, dtype=float))
    return GaitTrace(
        dt=dt,
        time=t,
        channels={k: interp(v) for k, v in trace.channels.items()},
        extras=extras,
        cycle_period=trace.cycle_period,
    )


# ---------------------------------------------------------------------------
# CSV

def _parse_header(name: str):
    """Map a column header to (channel, scale) or None for unknown columns."""
    for suffix, scale in (("_vel_rad_s", 1.0), ("_vel_deg_s", math.pi / 180)):
        if name.endswith(suffix):
            base = name[: -len(suffix)]
            if base in ANGLE_CHANNELS:
                return f"{base}_vel", scale
    for suffix, scale in (("_rad", 1.0), ("_deg", math.pi / 180)):
        if name.endswith(suffix):
            base = name[: -len(suffix)]
            if base in ANGLE_CHANNELS:
                return base, scale
    return None


def load_trace(path) -> GaitTrace:
    """Read a gait CSV.  Lines starting with ``#`` are comments."""
    header = None
    header_line = None
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            cells = next(csv.reader([stripped]))
            cells = [c.strip() for c in cells]
            if header is None:
                header, header_line = cells, lineno
                continue
            if len(cells) != len(header):
                raise TraceFormatError(f"expected {len(header)} fields, got {len(cells)}", lineno)
            rows.append((lineno, cells))
    if header is None:
        raise TraceFormatError("file has no header row", 1)
    if header[0] != "time_s":
        raise TraceFormatError("first column must be 'time_s'", header_line)
    if len(set(header)) != len(header):
        raise TraceFormatError("duplicate column names", header_line)
    if len(rows) < 2:
        raise TraceFormatError("need at least two data rows", header_line)

    mapping = [_parse_header(h) for h in header[1:]]
    names = {m[0] for m in mapping if m}
    if "theta_h" not in names and not {"q_r", "q_l"} <= names:
        raise TraceFormatError(
            "missing required columns: need theta_h_rad, or q_r_rad and q_l_rad", header_line
        )

    time = np.empty(len(rows))
    for i, (lineno, cells) in enumerate(rows):
        try:
            time[i] = float(cells[0])
        except ValueError:
            raise TraceFormatError(f"bad time value {cells[0]!r}", lineno) from None
    dt = (time[-1] - time[0]) / (len(time) - 1)
    if not dt > 0:
        raise TraceFormatError("time stamps must increase", rows[1][0])
    expected = time[0] + np.arange(len(time)) * dt
    bad = np.flatnonzero(np.abs(time - expected) > UNIFORM_TOL)
    if bad.size:
        raise TraceFormatError("non-uniform time stamps", rows[int(bad[0])][0])

    channels, extras = {}, {}
    for j, (h, m) in enumerate(zip(header[1:], mapping), start=1):
        raw = [cells[j] for _, cells in rows]
        if m is None:
            try:
                extras[h] = np.array([float(x) for x in raw])
            except ValueError:
                extras[h] = np.array(raw, dtype=object)
            continue
        name, scale = m
        vals = np.empty(len(rows))
        for i, (lineno, cells) in enumerate(rows):
            try:
                vals[i] = float(cells[j]) * scale
            except ValueError:
                raise TraceFormatError(f"bad value {cells[j]!r} in column {h}", lineno) from None
        channels[name] = vals
    try:
        return GaitTrace(dt=float(dt), time=time, channels=channels, extras=extras)
    except ValidationError as exc:
        raise TraceFormatError(str(exc), header_line) from exc


def save_trace(trace: GaitTrace, path, comments=()) -> None:
    """Write a trace with radian-tagged headers; extras follow the known channels."""
    cols = [("time_s", trace.time)]
    for name in CHANNEL_ORDER:
        if name in trace.channels:
            tag = "_rad_s" if name.endswith("_vel") else "_rad"
            cols.append((name + tag, trace.channels[name]))
    for name, v in trace.extras.items():
        cols.append((name, v))
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([h for h, _ in cols])
        for i in range(len(trace.time)):
            w.writerow([_fmt(c[i]) for _, c in cols])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
