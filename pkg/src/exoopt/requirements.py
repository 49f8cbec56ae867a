"""Age-specific actuator requirements.

Peak knee extension moment follows a quadratic fit in age (children 3-13 y
plus adults pinned at 18 y).  The actuator must supply 30 % of it with a
safety factor of two.  Speed, closed-loop natural frequency and unpowered
backdrive limits are age independent.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError, ValidationError

AGE_MIN = 3.0
AGE_MAX = 18.0

KNEE_FIT = (0.08277, 0.4427, -0.4424)  # N m per age^2, age, 1
ASSIST_FRACTION = 0.3
SAFETY_FACTOR = 2.0

DEFAULT_SPEED = 2 * math.pi  # rad/s, 1 Hz gait
DEFAULT_NATURAL_FREQUENCY = 20.0  # Hz
DEFAULT_BACKDRIVE = 5.0  # N m


@dataclass(frozen=True)
class Requirements:
    age: float
    required_torque: float  # N m
    required_speed: float = DEFAULT_SPEED  # rad/s
    required_natural_frequency: float = DEFAULT_NATURAL_FREQUENCY  # Hz
    max_backdrive: float = DEFAULT_BACKDRIVE  # N m

    def __post_init__(self):
        for f in ("required_torque", "required_speed", "required_natural_frequency", "max_backdrive"):
            v = getattr(self, f)
            if not v >= 0:
                raise ValidationError(f"{f} must be non-negative, got {v!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check_age(age: float) -> float:
    age = float(age)
    if not AGE_MIN <= age <= AGE_MAX:
        raise DomainError(f"age {age!r} is outside the fitted range [{AGE_MIN:g}, {AGE_MAX:g}] years")
    return age


def peak_knee_moment(age: float) -> float:
    """Peak knee extension moment (N m) at ``age`` years."""
    age = _check_age(age)
    a2, a1, a0 = KNEE_FIT
    return a2 * age**2 + a1 * age + a0


def required_torque(age: float) -> float:
    return ASSIST_FRACTION * peak_knee_moment(age) * SAFETY_FACTOR


_OVERRIDABLE = ("required_torque", "required_speed", "required_natural_frequency", "max_backdrive")


def requirements_for_age(age: float, overrides: Optional[dict] = None) -> Requirements:
    """Bundle the four thresholds for ``age``; ``overrides`` replace any of them."""
    values = {"required_torque": required_torque(age)}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _OVERRIDABLE:
            raise ValidationError(f"unknown requirement {key!r}")
        value = float(value)
        if not value > 0:
            raise ValidationError(f"override {key} must be positive, got {value!r}")
        values[key] = value
    return Requirements(age=float(age), **values)
