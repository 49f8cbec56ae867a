"""Angle-based assistance law that needs no gait-phase estimate.

Per sample:

    y_raw = sin(q_r) - sin(q_l)
    y     = (1 - alpha) * y + alpha * y_raw
    tau_r = kappa * y(t - shift),  tau_l = -tau_r

The shift is quantized to whole samples and realized with a zero-filled ring
buffer, so the first ``round(shift / dT)`` outputs are zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError
from .gait import GaitTrace, resample

DT_MATCH_TOL = 1e-9  # relative


def cutoff_frequency(alpha: float, sample_period: float) -> float:
    """First-order smoothing cutoff (Hz) implied by ``alpha`` at step ``sample_period``."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if not sample_period > 0:
        raise ValidationError("sample_period must be positive")
    return alpha / ((1 - alpha) * 2 * math.pi * sample_period)


def raw_asymmetry(q_r, q_l):
    """sin(q_r) - sin(q_l); works on scalars and arrays."""
    q_r = np.asarray(q_r, dtype=float)
    q_l = np.asarray(q_l, dtype=float)
    if not (np.all(np.isfinite(q_r)) and np.all(np.isfinite(q_l))):
        raise ValidationError("knee angles must be finite")
    out = np.sin(q_r) - np.sin(q_l)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 0.04
    sample_period: float = 1e-3  # s
    gain: float = 10.0  # N m per unit asymmetry; negative gives resistance
    time_shift: float = 0.25  # s
    torque_cap: Optional[float] = None  # N m, off by default

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if not self.sample_period > 0:
            raise ValidationError("sample_period must be positive")
        if not math.isfinite(self.gain):
            raise ValidationError("gain must be finite")
        if not self.time_shift >= 0:
            raise ValidationError("time_shift must be non-negative")
        if self.torque_cap is not None and not self.torque_cap > 0:
            raise ValidationError("torque_cap must be positive")

    @property
    def delay_samples(self) -> int:
        return int(round(self.time_shift / self.sample_period))

    @property
    def cutoff(self) -> float:
        return cutoff_frequency(self.alpha, self.sample_period)


@dataclass
class ControllerState:
    y: float = 0.0
    delay_line: np.ndarray = field(default_factory=lambda: np.zeros(0))
    head: int = 0
    delayed: float = 0.0  # y(t - shift) emitted on the latest step

    @classmethod
    def initial(cls, config: ControllerConfig) -> "ControllerState":
        return cls(delay_line=np.zeros(config.delay_samples))

    def shift(self, y: float) -> float:
        """Push ``y`` and return the value from ``len(delay_line)`` samples ago."""
        if self.delay_line.size == 0:
            self.delayed = y
            return y
        out = float(self.delay_line[self.head])
        self.delay_line[self.head] = y
        self.head = (self.head + 1) % self.delay_line.size
        self.delayed = out
        return out


def lowpass_step(state: ControllerState, y_raw: float, alpha: float) -> float:
    """Advance the smoothing recursion one sample; alpha = 1 passes y_raw through."""
    if not 0 < alpha <= 1:
        raise ValidationError("alpha must lie in (0, 1]")
    state.y = (1 - alpha) * state.y + alpha * y_raw
    return state.y


def assist_torques(state: ControllerState, config: ControllerConfig):
    """(tau_r, tau_l) from the delayed smoothed asymmetry held in ``state``."""
    tau = config.gain * state.delayed
    if config.torque_cap is not None:
        tau = min(max(tau, -config.torque_cap), config.torque_cap)
    return tau, -tau


class AngleBasedController:
    """Streaming controller; feed one (q_r, q_l) pair per sample period."""

    def __init__(self, config: Optional[ControllerConfig] = None):
        self.config = config or ControllerConfig()
        self.state = ControllerState.initial(self.config)

    def reset(self):
        self.state = ControllerState.initial(self.config)

    def step(self, q_r: float, q_l: float):
        """Returns (y_raw, y, tau_r, tau_l) for this sample."""
        y_raw = raw_asymmetry(q_r, q_l)
        y = lowpass_step(self.state, y_raw, self.config.alpha)
        self.state.shift(y)
        tau_r, tau_l = assist_torques(self.state, self.config)
        return y_raw, y, tau_r, tau_l


@dataclass
class TorqueTrace:
    time: np.ndarray
    q_r: np.ndarray
    q_l: np.ndarray
    y_raw: np.ndarray
    y: np.ndarray
    tau_r: np.ndarray
    tau_l: np.ndarray

    COLUMNS = ("time_s", "q_r_rad", "q_l_rad", "y_raw", "y", "tau_r_nm", "tau_l_nm")

    def to_csv(self, path, comments=()):
        close = not hasattr(path, "write")
        fh = open(path, "w", newline="") if close else path
        try:
            for line in comments:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            cols = (self.time, self.q_r, self.q_l, self.y_raw, self.y, self.tau_r, self.tau_l)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])
        finally:
            if close:
                fh.close()


def run_controller(trace: GaitTrace, config: Optional[ControllerConfig] = None) -> TorqueTrace:
    """Stream a two-leg trace through a fresh controller."""
    config = config or ControllerConfig()
    if abs(trace.dt - config.sample_period) > DT_MATCH_TOL * config.sample_period:
        trace = resample(trace, config.sample_period)
        if abs(trace.dt - config.sample_period) > DT_MATCH_TOL * config.sample_period:
            raise ValidationError("could not resample trace to the controller sample period")
    q_r = trace.channel("q_r")
    q_l = trace.channel("q_l")
    ctl = AngleBasedController(config)
    n = len(trace.time)
    out = np.empty((4, n))
    for k in range(n):
        out[:, k] = ctl.step(q_r[k], q_l[k])
    return TorqueTrace(trace.time.copy(), q_r.copy(), q_l.copy(), *out)
