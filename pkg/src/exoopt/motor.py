"""Gap-radius scaling of the brushless motor.

Every electromechanical parameter follows a power law in the air-gap radius
``r_g`` with the rotor and stator radial thickness held fixed.  The built
prototype motor (``REFERENCE_MOTOR``) anchors the laws; any other size is
obtained by multiplying each reference value by ``(r_g / 0.021) ** k``.

Damping and supply voltage carry no scaling law and stay at their reference
values.  Optimizer results are sensitive to the damping value: it dominates
both the free-running speed and the unpowered backdrive torque.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import DomainError

RG_MIN = 0.005
RG_MAX = 0.08


@dataclass(frozen=True)
class MotorParams:
    """Electromechanical parameters of one motor size (SI units)."""

    gap_radius: float  # m
    motor_radius: float  # m
    mass: float  # kg
    rotor_inertia: float  # kg m^2
    damping: float  # N m s/rad
    torque_constant: float  # N m/A
    backemf_constant: float  # V s/rad
    resistance: float  # ohm
    inductance: float  # H
    max_voltage: float  # V
    max_current: float  # A
    max_motor_torque: float  # N m

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not v > 0:
                raise DomainError(f"{f.name} must be positive, got {v!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MotorParams":
        return cls(**{f.name: float(data[f.name]) for f in dataclasses.fields(cls)})


REFERENCE_MOTOR = MotorParams(
    gap_radius=0.021,
    motor_radius=0.026,
    mass=0.112,
    rotor_inertia=9.9e-6,
    damping=0.01,
    torque_constant=0.04,
    backemf_constant=0.04,
    resistance=0.74,
    inductance=2.98e-4,
    max_voltage=42.0,
    max_current=16.5,
    max_motor_torque=0.66,
)

# exponent k in  value ∝ r_g**k
SCALING_EXPONENTS = {
    "motor_radius": 1,
    "mass": 2,
    "rotor_inertia": 3,
    "damping": 0,
    "torque_constant": 1,
    "backemf_constant": 1,
    "resistance": -1,
    "inductance": -1,
    "max_voltage": 0,
    "max_current": 1,
    "max_motor_torque": 2,
}


def _check_radius(r_g: float) -> float:
    r_g = float(r_g)
    if not r_g >= RG_MIN:
        raise DomainError(f"gap radius {r_g!r} m is below the lower bound {RG_MIN} m")
    if not r_g <= RG_MAX:
        raise DomainError(f"gap radius {r_g!r} m is above the upper bound {RG_MAX} m")
    return r_g


def scale_motor(r_g: float) -> MotorParams:
    """Return the parameter set of a motor with gap radius ``r_g`` (m).

    Raises DomainError outside ``[RG_MIN, RG_MAX]``.
    """
    r_g = _check_radius(r_g)
    ratio = r_g / REFERENCE_MOTOR.gap_radius
    values = {
        name: getattr(REFERENCE_MOTOR, name) * ratio**k
        for name, k in SCALING_EXPONENTS.items()
    }
    return MotorParams(gap_radius=r_g, **values)


def motor_mass(r_g: float) -> float:
    """Motor mass in kg; square law in the gap radius."""
    r_g = _check_radius(r_g)
    return REFERENCE_MOTOR.mass * (r_g / REFERENCE_MOTOR.gap_radius) ** 2
