"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 infeasible design or failed
simulation.  Settings resolve as defaults < JSON config file (--config or
$EXOOPT_CONFIG) < flags, and the resolved config is echoed in every output.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .controller import ControllerConfig, run_controller
from .errors import (
    DivergenceError,
    DomainError,
    InfeasibleError,
    NotFoundError,
    TraceFormatError,
    UnsupportedConfigError,
    ValidationError,
)
from .gait import load_trace, two_leg_synthetic
from .motor import scale_motor
from .optimizer import METRICS, OptimizationResult, constraint_grid, evaluate_design, sweep_ages
from .plant import backdrive_tf, closed_loop_torque_tf
from .requirements import requirements_for_age
from .sim import bandwidth_neg3db, frequency_response

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3


class UsageError(ValueError):
    pass


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def parse_range(text: str, *, integer_step=False):
    """``lo:hi:count`` -> linspace, or ``lo:hi:step`` -> inclusive arange when ``integer_step``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range {text!r} must look like lo:hi:{'step' if integer_step else 'count'}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        third = float(parts[2])
    except ValueError:
        raise UsageError(f"range {text!r} has a non-numeric field") from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise UsageError(f"range {text!r} needs finite lo <= hi")
    if integer_step:
        if not third > 0:
            raise UsageError(f"range {text!r} needs a positive step")
        k = int(math.floor((hi - lo) / third + 1e-9))
        return lo + third * np.arange(k + 1)
    if third != int(third) or third < 1:
        raise UsageError(f"range {text!r} needs a positive integer count")
    count = int(third)
    if count == 1 and lo != hi:
        raise UsageError(f"range {text!r}: a single point needs lo == hi")
    return np.linspace(lo, hi, count)


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def _write_json(doc, path):
    with _output(path) as fh:
        json.dump(_clean(doc), fh, indent=2, allow_nan=False)
        fh.write("\n")


def _config_comment(cfg: RunConfig, extra: dict):
    return [
        "config: " + json.dumps(_clean(cfg.to_dict()), sort_keys=True),
        "args: " + json.dumps(_clean(extra), sort_keys=True),
    ]


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.replace(
        k_c=args.kc,
        kp=args.kp,
        dt=args.dt,
        rg_min=args.rg_min,
        rg_max=args.rg_max,
        n_min=args.n_min,
        n_max=args.n_max,
        supply_voltage=args.supply_voltage,
        gait_file=args.gait_file,
        gait_amplitude_scale=args.gait_amplitude,
    )


def _overrides(args):
    return {
        "required_torque": args.tau_req,
        "required_speed": args.omega_req,
        "required_natural_frequency": args.fn_req,
        "max_backdrive": args.tau_b_max,
    }


# ---------------------------------------------------------------------------
# commands

def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    req = requirements_for_age(args.age, _overrides(args))
    report = evaluate_design(args.rg, args.n, req, cfg)
    _write_json(
        {
            "command": "evaluate",
            "config": cfg.to_dict(),
            "design": {"r_g": args.rg, "n": args.n},
            "requirements": req.to_dict(),
            "report": report.to_dict(),
        },
        args.output,
    )
    return EXIT_OK if report.overall else EXIT_INFEASIBLE


def _summary(results):
    lines = [f"{'age':>5} {'r_g_opt[m]':>11} {'n_opt':>7} {'mass[kg]':>9}  active"]
    for r in results:
        if isinstance(r, OptimizationResult):
            lines.append(
                f"{r.age:5.1f} {r.r_g_opt:11.5f} {r.n_opt:7.3f} {r.actuator_mass:9.4f}  "
                + (", ".join(r.active_constraints) or "-")
            )
        else:
            lines.append(f"{r.age:5.1f} {'infeasible':>11}  binding: {', '.join(r.binding) or '?'}")
    return "\n".join(lines)


def cmd_optimize(args) -> int:
    cfg = resolve_config(args)
    ages = [args.age] if args.age is not None else list(parse_range(args.ages, integer_step=True))
    results = sweep_ages(ages, cfg, _overrides(args), jobs=args.jobs)
    _write_json(
        {
            "command": "optimize",
            "config": cfg.to_dict(),
            "overrides": {k: v for k, v in _overrides(args).items() if v is not None},
            "results": [r.to_dict() for r in results],
        },
        args.output,
    )
    print(_summary(results), file=sys.stderr)
    ok = all(isinstance(r, OptimizationResult) for r in results)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_grid(args) -> int:
    cfg = resolve_config(args)
    rg = parse_range(args.rg)
    ns = parse_range(args.n)
    if args.age is not None:
        requirements_for_age(args.age)
    table = constraint_grid(args.metric, rg, ns, cfg, jobs=args.jobs)
    comments = _config_comment(cfg, {"metric": args.metric, "rg": args.rg, "n": args.n, "age": args.age})
    with _output(args.output) as fh:
        table.to_csv(fh, comments)
    bad = int(np.isnan(table.values).sum())
    if bad:
        print(f"warning: {bad} grid cells failed and hold NaN", file=sys.stderr)
    return EXIT_OK


def cmd_bode(args) -> int:
    cfg = resolve_config(args)
    m = scale_motor(args.rg)
    d = cfg.drivetrain(args.n)
    if args.tf == "closed_loop":
        tf = closed_loop_torque_tf(m, d, cfg.gains())
    else:
        tf = backdrive_tf(m, d)
    resp = frequency_response(tf, args.flo, args.fhi, args.points)
    extra = {"tf": args.tf, "rg": args.rg, "n": args.n, "flo": args.flo, "fhi": args.fhi, "points": args.points}
    comments = _config_comment(cfg, extra) + ["tf: " + json.dumps(_clean(tf.to_dict()))]
    with _output(args.output) as fh:
        resp.to_csv(fh, comments)
    try:
        bw = float(bandwidth_neg3db(tf))
        print(f"bandwidth_-3dB_hz: {bw!r}", file=sys.stderr)
    except (DomainError, NotFoundError) as exc:
        print(f"bandwidth_-3dB_hz: n/a ({exc})", file=sys.stderr)
    return EXIT_OK


def cmd_controller(args) -> int:
    ccfg = ControllerConfig(
        alpha=args.alpha,
        sample_period=args.sample_period,
        gain=args.kappa,
        time_shift=args.shift,
        torque_cap=args.torque_cap,
    )
    if args.input:
        trace = load_trace(args.input)
    else:
        trace = two_leg_synthetic(
            cycle_freq=args.cycle_freq,
            duration=args.cycles / args.cycle_freq,
            dt=args.sample_period,
            phase_offset=args.phase_offset,
        )
    out = run_controller(trace, ccfg)
    extra = {
        "alpha": ccfg.alpha,
        "sample_period": ccfg.sample_period,
        "kappa": ccfg.gain,
        "shift": ccfg.time_shift,
        "delay_samples": ccfg.delay_samples,
        "torque_cap": ccfg.torque_cap,
        "input": args.input,
        "synthetic": None if args.input else {
            "cycle_freq": args.cycle_freq, "cycles": args.cycles, "phase_offset": args.phase_offset,
        },
    }
    with _output(args.output) as fh:
        out.to_csv(fh, ["controller: " + json.dumps(_clean(extra), sort_keys=True)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def _finite(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite: {text!r}")
    return v


def _add_common(p, *, jobs=False):
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="JSON config file (default: $EXOOPT_CONFIG)")
    g.add_argument("--kc", type=_positive, help="coupling stiffness k_c [N m/rad]")
    g.add_argument("--kp", type=_positive, help="proportional torque gain")
    g.add_argument("--dt", type=_positive, help="upper bound on the integration step [s]")
    g.add_argument("--rg-min", type=_positive, help="search lower bound on gap radius [m]")
    g.add_argument("--rg-max", type=_positive, help="search upper bound on gap radius [m]")
    g.add_argument("--n-min", type=_positive, help="search lower bound on gear ratio")
    g.add_argument("--n-max", type=_positive, help="search upper bound on gear ratio")
    g.add_argument("--supply-voltage", type=_positive, help="supply voltage [V]")
    g.add_argument("--gait-file", help="knee trace CSV used for backdrive")
    g.add_argument("--gait-amplitude", type=_finite, help="scale of the synthetic knee trace")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")


def _add_requirement_overrides(p):
    g = p.add_argument_group("requirement overrides")
    g.add_argument("--tau-req", type=_positive, help="required torque [N m]")
    g.add_argument("--omega-req", type=_positive, help="required speed [rad/s]")
    g.add_argument("--fn-req", type=_positive, help="required natural frequency [Hz]")
    g.add_argument("--tau-b-max", type=_positive, help="backdrive limit [N m]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exoopt", description="Exoskeleton actuator sizing toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="check one design against an age's requirements")
    p.add_argument("--rg", type=_positive, required=True, help="gap radius [m]")
    p.add_argument("--n", type=_positive, required=True, help="gear ratio")
    p.add_argument("--age", type=_finite, required=True, help="age [years]")
    _add_common(p)
    _add_requirement_overrides(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="minimum-mass design for one age or an age sweep")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--age", type=_finite, help="single age [years]")
    grp.add_argument("--ages", help="sweep lo:hi:step, inclusive")
    _add_common(p, jobs=True)
    _add_requirement_overrides(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("grid", help="one metric over an (r_g, n) grid as CSV")
    p.add_argument("--metric", choices=METRICS, required=True)
    p.add_argument("--rg", required=True, help="lo:hi:count in metres")
    p.add_argument("--n", required=True, help="lo:hi:count")
    p.add_argument("--age", type=_finite, help="age echoed into the metadata")
    _add_common(p, jobs=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bode", help="frequency response CSV; -3 dB bandwidth to stderr")
    p.add_argument("--rg", type=_positive, default=0.021, help="gap radius [m] (default 0.021)")
    p.add_argument("--n", type=_positive, default=36.0, help="gear ratio (default 36)")
    p.add_argument("--flo", type=_positive, default=0.1, help="lowest frequency [Hz]")
    p.add_argument("--fhi", type=_positive, default=1000.0, help="highest frequency [Hz]")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--tf", choices=("closed_loop", "backdrive"), default="closed_loop")
    _add_common(p)
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("controller", help="run the angle-based assistance law")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="two-leg trace CSV (q_r, q_l)")
    src.add_argument("--synthetic", action="store_true", help="use the synthetic two-leg gait")
    p.add_argument("--alpha", type=_positive, default=0.04)
    p.add_argument("--kappa", type=_finite, default=10.0, help="gain [N m]")
    p.add_argument("--shift", type=_finite, default=0.25, help="time shift [s]")
    p.add_argument("--sample-period", type=_positive, default=1e-3, help="[s]")
    p.add_argument("--torque-cap", type=_positive, help="symmetric torque limit [N m]")
    p.add_argument("--cycle-freq", type=_positive, default=1.0, help="synthetic gait frequency [Hz]")
    p.add_argument("--cycles", type=_positive, default=4.0, help="synthetic gait length in cycles")
    p.add_argument("--phase-offset", type=_finite, default=0.5, help="right-leg lag, fraction of a cycle")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_controller)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ValidationError, DomainError, TraceFormatError, UnsupportedConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InfeasibleError, DivergenceError, NotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
