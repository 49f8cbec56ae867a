"""Coupled actuator / human-limb model in its four configurations.

The actuator is a brushless motor (current algebraic, winding inductance
neglected) driving an ideal gear of ratio ``n``; the gear output reaches the
shank through a torsional coupling ``k_c`` (strap and frame compliance).
The four configurations differ only in what is held fixed:

* closed loop: proportional torque feedback commands winding voltage,
  knee angle fixed at zero;
* locked output: full supply voltage, knee angle fixed (stall torque);
* free output: full supply voltage, no load (no-load speed);
* back-driven: motor unpowered, knee angle prescribed by the wearer.

Human-side inertia and muscle torque are carried for completeness but never
integrated: every configuration prescribes the knee angle.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import UnsupportedConfigError, ValidationError
from .motor import MotorParams


@dataclass(frozen=True)
class DrivetrainConfig:
    gear_ratio: float = 36.0
    coupling_stiffness: float = 100.0  # N m/rad
    coupling_damping: float = 0.0  # N m s/rad
    supply_voltage: float = 42.0  # V
    human_inertia: Optional[float] = None  # kg m^2, unused

    def __post_init__(self):
        if not self.gear_ratio >= 1:
            raise ValidationError(f"gear_ratio must be >= 1, got {self.gear_ratio!r}")
        if not self.coupling_stiffness > 0:
            raise ValidationError("coupling_stiffness must be positive")
        if not self.coupling_damping >= 0:
            raise ValidationError("coupling_damping must be non-negative")
        if not self.supply_voltage > 0:
            raise ValidationError("supply_voltage must be positive")

    def with_ratio(self, n: float) -> "DrivetrainConfig":
        return dataclasses.replace(self, gear_ratio=float(n))


@dataclass(frozen=True)
class ControlGains:
    kp: float = 1.0
    ki: float = 0.0

    def __post_init__(self):
        if not self.kp > 0:
            raise ValidationError("kp must be positive")
        if not self.ki >= 0:
            raise ValidationError("ki must be non-negative")


@dataclass(frozen=True)
class PlantState:
    """Snapshot of the drivetrain.  Gear-side quantities follow the ideal gear."""

    motor_angle: float
    motor_velocity: float
    current: float
    output_torque: float
    gear_ratio: float
    human_angle: float = 0.0
    human_torque: float = 0.0

    @property
    def gear_input_angle(self) -> float:
        return self.motor_angle

    @property
    def gear_output_angle(self) -> float:
        return self.motor_angle / self.gear_ratio

    @property
    def gear_output_torque(self) -> float:
        return self.output_torque

    @property
    def gear_input_torque(self) -> float:
        return self.output_torque / self.gear_ratio


@dataclass(frozen=True)
class RationalTF:
    """Ratio of polynomials in s, coefficients in descending powers."""

    num: tuple
    den: tuple

    def __init__(self, num: Sequence[float], den: Sequence[float]):
        num = tuple(float(c) for c in num)
        den = tuple(float(c) for c in den)
        if not den or den[0] == 0.0:
            raise ValidationError("denominator leading coefficient must be nonzero")
        if not num:
            raise ValidationError("numerator must have at least one coefficient")
        if _degree(num) > len(den) - 1:
            raise ValidationError("transfer function must be proper")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def response(self, omega):
        """Complex response at angular frequencies ``omega`` (rad/s)."""
        return self(1j * np.asarray(omega, dtype=float))

    def dc_gain(self) -> float:
        return float(self.num[-1] / self.den[-1])

    def to_dict(self) -> dict:
        return {"num": list(self.num), "den": list(self.den)}

    @classmethod
    def from_dict(cls, data: dict) -> "RationalTF":
        return cls(data["num"], data["den"])


def _degree(coeffs) -> int:
    for i, c in enumerate(coeffs):
        if c != 0.0:
            return len(coeffs) - 1 - i
    return 0


def _require_plain_coupling(d: DrivetrainConfig):
    if d.coupling_damping != 0.0:
        raise UnsupportedConfigError(
            "transfer functions assume zero coupling damping"
        )


def closed_loop_torque_tf(m: MotorParams, d: DrivetrainConfig, g: ControlGains) -> RationalTF:
    """Output torque over torque reference with the knee held still."""
    if g.ki != 0.0:
        raise UnsupportedConfigError("integral gain is not supported; set ki = 0")
    _require_plain_coupling(d)
    n, kc, kp = d.gear_ratio, d.coupling_stiffness, g.kp
    R, J, b = m.resistance, m.rotor_inertia, m.damping
    kt, kb = m.torque_constant, m.backemf_constant
    num = [0.0, 0.0, kp * kc * kt * n]
    den = [n**2 * R * J, n**2 * (R * b + kb * kt), kc * (R + kp * kt * n)]
    return RationalTF(num, den)


def natural_frequency(m: MotorParams, d: DrivetrainConfig, g: ControlGains) -> float:
    """Undamped natural frequency of the closed torque loop, rad/s."""
    if g.ki != 0.0:
        raise UnsupportedConfigError("integral gain is not supported; set ki = 0")
    n, kc, kp = d.gear_ratio, d.coupling_stiffness, g.kp
    R, J, kt = m.resistance, m.rotor_inertia, m.torque_constant
    return math.sqrt(kc * (R + kp * kt * n) / (n**2 * R * J))


def backdrive_tf(m: MotorParams, d: DrivetrainConfig) -> RationalTF:
    """Interaction torque over knee angle with the motor unpowered."""
    _require_plain_coupling(d)
    n, kc = d.gear_ratio, d.coupling_stiffness
    R, J, b = m.resistance, m.rotor_inertia, m.damping
    kt, kb = m.torque_constant, m.backemf_constant
    visc = R * b + kb * kt
    num = [-kc * n**2 * J * R, -kc * n**2 * visc, 0.0]
    den = [n**2 * J * R, n**2 * visc, R * kc]
    return RationalTF(num, den)


# ---------------------------------------------------------------------------
# time-domain right-hand sides

def pack_params(
    m: MotorParams,
    d: DrivetrainConfig,
    *,
    volts: float = 0.0,
    kp: float = 0.0,
    current_limit: float = math.inf,
    voltage_limit: float = math.inf,
) -> np.ndarray:
    p = np.zeros(K.N_PARAMS)
    p[K.P_INV_J] = 1.0 / m.rotor_inertia
    p[K.P_B] = m.damping
    p[K.P_KT] = m.torque_constant
    p[K.P_KB] = m.backemf_constant
    p[K.P_INV_R] = 1.0 / m.resistance
    p[K.P_IMAX] = current_limit
    p[K.P_KC] = d.coupling_stiffness
    p[K.P_BC] = d.coupling_damping
    p[K.P_N] = d.gear_ratio
    p[K.P_V] = volts
    p[K.P_KP] = kp
    p[K.P_VMAX] = voltage_limit
    return p


def _as_xy(state):
    if isinstance(state, PlantState):
        return float(state.motor_angle), float(state.motor_velocity)
    th, om = state
    return float(th), float(om)


def locked_output_derivatives(state, m: MotorParams, d: DrivetrainConfig, commanded_V: float) -> np.ndarray:
    """Motor angle/velocity rates with the joint locked; current clamps at I_max."""
    p = pack_params(m, d, volts=commanded_V, current_limit=m.max_current)
    return np.array(K.rhs_eval(K.locked_rhs, *_as_xy(state), 0.0, 0.0, p))


def free_output_derivatives(
    state, m: MotorParams, d: DrivetrainConfig, commanded_V: float, current_limit: bool = False
) -> np.ndarray:
    """Rates with the output unloaded.

    The current is not clamped by default: the no-load speed model has no
    current saturation.  Pass ``current_limit=True`` to clamp at I_max.
    """
    lim = m.max_current if current_limit else math.inf
    p = pack_params(m, d, volts=commanded_V, current_limit=lim)
    return np.array(K.rhs_eval(K.free_rhs, *_as_xy(state), 0.0, 0.0, p))


def backdriven_derivatives(
    state, m: MotorParams, d: DrivetrainConfig, theta_h: float, theta_h_dot: float = 0.0
) -> np.ndarray:
    """Rates of the unpowered motor dragged through the coupling by the knee."""
    p = pack_params(m, d)
    return np.array(K.rhs_eval(K.backdriven_rhs, *_as_xy(state), float(theta_h), float(theta_h_dot), p))


def closed_loop_derivatives(
    state, m: MotorParams, d: DrivetrainConfig, g: ControlGains, torque_ref: float
) -> np.ndarray:
    """Rates under proportional torque control (V = kp * torque error), knee fixed."""
    if g.ki != 0.0:
        raise UnsupportedConfigError("integral gain is not supported; set ki = 0")
    p = pack_params(m, d, kp=g.kp)
    return np.array(K.rhs_eval(K.closed_loop_rhs, *_as_xy(state), float(torque_ref), 0.0, p))


def motor_current(omega, m: MotorParams, volts, limit: float = math.inf):
    """Algebraic winding current for back-EMF at motor speed ``omega``."""
    cur = (np.asarray(volts, dtype=float) - m.backemf_constant * np.asarray(omega, dtype=float)) / m.resistance
    return np.clip(cur, -limit, limit)


def coupling_torque(theta_m, omega_m, d: DrivetrainConfig, theta_h=0.0, theta_h_dot=0.0):
    """Interaction torque transmitted to the shank."""
    n = d.gear_ratio
    return d.coupling_stiffness * (np.asarray(theta_m) / n - theta_h) + d.coupling_damping * (
        np.asarray(omega_m) / n - theta_h_dot
    )
