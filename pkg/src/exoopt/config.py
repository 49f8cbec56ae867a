"""Numerical and search settings shared by the optimizer and the CLI."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Optional

from .errors import ValidationError
from .gait import GaitTrace, synthetic_knee_trace
from .plant import ControlGains, DrivetrainConfig
from .sim import DEFAULT_DT

CONFIG_ENV = "EXOOPT_CONFIG"

# gearbox, housing and output structure of the prototype actuator:
# 0.530 kg assembly minus the 0.112 kg motor
STRUCTURE_MASS = 0.418


@dataclass(frozen=True)
class RunConfig:
    k_c: float = 100.0  # N m/rad
    kp: float = 1.0
    dt: float = DEFAULT_DT  # s, upper bound on the RK4 step
    rg_min: float = 0.005
    rg_max: float = 0.05
    n_min: float = 1.0
    n_max: float = 60.0
    supply_voltage: float = 42.0
    coupling_damping: float = 0.0
    gait_cycle_freq: float = 1.0  # Hz
    gait_amplitude_scale: float = 1.0
    gait_dt: float = 1e-3
    gait_file: Optional[str] = None
    structure_mass: float = STRUCTURE_MASS
    rg_tol: float = 1e-4  # m
    n_rel_tol: float = 1e-3
    active_tol: float = 0.01  # fraction of threshold

    def __post_init__(self):
        positive = ("k_c", "kp", "dt", "rg_min", "rg_max", "supply_voltage",
                    "gait_cycle_freq", "gait_dt", "rg_tol", "n_rel_tol", "active_tol")
        for f in positive:
            if not getattr(self, f) > 0:
                raise ValidationError(f"{f} must be positive")
        if not self.coupling_damping >= 0:
            raise ValidationError("coupling_damping must be non-negative")
        if not self.gait_amplitude_scale >= 0:
            raise ValidationError("gait_amplitude_scale must be non-negative")
        if not self.structure_mass >= 0:
            raise ValidationError("structure_mass must be non-negative")
        if not self.rg_min < self.rg_max:
            raise ValidationError("rg_min must be below rg_max")
        if not 1 <= self.n_min < self.n_max:
            raise ValidationError("need 1 <= n_min < n_max")

    def drivetrain(self, n: float = 36.0) -> DrivetrainConfig:
        return DrivetrainConfig(
            gear_ratio=n,
            coupling_stiffness=self.k_c,
            coupling_damping=self.coupling_damping,
            supply_voltage=self.supply_voltage,
        )

    def gains(self) -> ControlGains:
        return ControlGains(kp=self.kp)

    def gait(self) -> GaitTrace:
        if self.gait_file:
            from .gait import load_trace

            tr = load_trace(self.gait_file)
            tr.cycle_period = 1.0 / self.gait_cycle_freq
            return tr
        return synthetic_knee_trace(
            cycle_freq=self.gait_cycle_freq,
            dt=self.gait_dt,
            amplitude_scale=self.gait_amplitude_scale,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


def load_config(path: Optional[str] = None) -> RunConfig:
    """Defaults overlaid with a JSON config file (``path`` or $EXOOPT_CONFIG)."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path}: {exc}") from exc
    if isinstance(data, dict) and "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return RunConfig.from_dict(data)
