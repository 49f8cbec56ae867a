"""Sizing and simulation toolkit for quasi-direct-drive knee exoskeleton actuators."""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .controller import (
    AngleBasedController,
    ControllerConfig,
    ControllerState,
    assist_torques,
    cutoff_frequency,
    lowpass_step,
    raw_asymmetry,
    run_controller,
)
from .errors import (
    DivergenceError,
    DomainError,
    ExoOptError,
    InfeasibleError,
    NotFoundError,
    TraceFormatError,
    UnsupportedConfigError,
    ValidationError,
)
from .gait import GaitTrace, load_trace, resample, save_trace, synthetic_knee_trace, two_leg_synthetic
from .motor import REFERENCE_MOTOR, MotorParams, motor_mass, scale_motor
from .optimizer import (
    ConstraintReport,
    OptimizationResult,
    constraint_grid,
    evaluate_design,
    feasible_gear_interval,
    optimize,
    sweep_ages,
)
from .plant import (
    ControlGains,
    DrivetrainConfig,
    PlantState,
    RationalTF,
    backdrive_tf,
    closed_loop_torque_tf,
    natural_frequency,
)
from .requirements import Requirements, requirements_for_age
from .sim import (
    bandwidth_neg3db,
    frequency_response,
    integrate,
    simulate_backdrive,
    simulate_free_output,
    simulate_locked_output,
    simulate_max_speed,
    simulate_max_torque,
)
