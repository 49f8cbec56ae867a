"""Minimum-mass actuator sizing over gap radius and gear ratio.

Mass depends on the gap radius only, so the optimum is the smallest radius
that admits any feasible gear ratio.  At fixed radius the torque limit grows
with the ratio while speed, natural frequency and backdrive transparency all
degrade, which makes the feasible ratios one interval ``[n_lo, n_hi]`` found
by two bisections.  A bisection over the radius on the emptiness of that
interval gives the optimum.  ``brute_force_optimum`` evaluates a dense grid
instead and is kept as an independent check of the search.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import DivergenceError, DomainError, InfeasibleError, ValidationError
from .motor import motor_mass, scale_motor
from .plant import natural_frequency
from .requirements import Requirements, requirements_for_age
from .sim import simulate_backdrive, simulate_max_speed, simulate_max_torque

log = logging.getLogger(__name__)

TORQUE = "required_torque"
SPEED = "max_speed"
BANDWIDTH = "natural_frequency"
BACKDRIVE = "backdrive"
LABELS = (TORQUE, SPEED, BANDWIDTH, BACKDRIVE)

METRICS = ("max_torque", "max_speed", "natural_frequency", "backdrive_avg", "backdrive_peak", "mass")

# single-stage reductions commonly available off the shelf (1 = no stage)
STAGE_RATIOS = (1.0, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)


# ---------------------------------------------------------------------------
# metrics

@functools.lru_cache(maxsize=8)
def _gait(cfg: RunConfig):
    return cfg.gait()


@functools.lru_cache(maxsize=200_000)
def _metric(metric: str, r_g: float, n: float, cfg: RunConfig) -> float:
    if metric == "mass":
        return actuator_mass(r_g, cfg)
    m = scale_motor(r_g)
    d = cfg.drivetrain(n)
    try:
        if metric == "max_torque":
            return simulate_max_torque(m, n, d, cfg.dt)
        if metric == "max_speed":
            return simulate_max_speed(m, n, d, cfg.dt)
        if metric == "natural_frequency":
            return natural_frequency(m, d, cfg.gains()) / (2 * math.pi)
        if metric in ("backdrive_avg", "backdrive_peak"):
            avg, peak = _backdrive(r_g, n, cfg)
            return avg if metric == "backdrive_avg" else peak
    except DivergenceError as exc:
        raise DivergenceError(f"design r_g={r_g:g} m, n={n:g}: {exc}", step=exc.step, design=(r_g, n)) from exc
    raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")


@functools.lru_cache(maxsize=100_000)
def _backdrive(r_g: float, n: float, cfg: RunConfig):
    m = scale_motor(r_g)
    return simulate_backdrive(m, n, _gait(cfg), cfg.drivetrain(n), cfg.dt, period=1.0 / cfg.gait_cycle_freq)


def design_metric(metric: str, r_g: float, n: float, cfg: Optional[RunConfig] = None) -> float:
    """One performance figure of design (r_g, n); natural frequency in Hz."""
    return _metric(metric, float(r_g), float(n), cfg or RunConfig())


def actuator_mass(r_g: float, cfg: Optional[RunConfig] = None) -> float:
    """Motor mass plus a ratio-independent gearbox/structure allowance (kg)."""
    cfg = cfg or RunConfig()
    return motor_mass(r_g) + cfg.structure_mass


@dataclass(frozen=True)
class ConstraintReport:
    max_torque: float  # N m
    max_speed: float  # rad/s
    natural_frequency: float  # Hz
    backdrive_avg: float  # N m, RMS over steady cycles
    backdrive_peak: float  # N m
    feasible: dict
    margins: dict  # positive = satisfied, in each constraint's units

    @property
    def overall(self) -> bool:
        return all(self.feasible[k] for k in LABELS)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["overall"] = self.overall
        return out


def _margins(values: dict, req: Requirements) -> dict:
    return {
        TORQUE: values["max_torque"] - req.required_torque,
        SPEED: values["max_speed"] - req.required_speed,
        BANDWIDTH: values["natural_frequency"] - req.required_natural_frequency,
        BACKDRIVE: req.max_backdrive - values["backdrive_avg"],
    }


def _check_bounds(r_g, n, cfg: RunConfig):
    if not cfg.rg_min <= r_g <= cfg.rg_max:
        raise DomainError(f"gap radius {r_g!r} m outside search bounds [{cfg.rg_min}, {cfg.rg_max}]")
    if not cfg.n_min <= n <= cfg.n_max:
        raise DomainError(f"gear ratio {n!r} outside search bounds [{cfg.n_min}, {cfg.n_max}]")


def evaluate_design(r_g: float, n: float, req: Requirements, cfg: Optional[RunConfig] = None) -> ConstraintReport:
    """Run all four constraint evaluations for one design point."""
    cfg = cfg or RunConfig()
    r_g, n = float(r_g), float(n)
    _check_bounds(r_g, n, cfg)
    values = {k: _metric(k, r_g, n, cfg) for k in METRICS if k != "mass"}
    margins = _margins(values, req)
    return ConstraintReport(
        max_torque=values["max_torque"],
        max_speed=values["max_speed"],
        natural_frequency=values["natural_frequency"],
        backdrive_avg=values["backdrive_avg"],
        backdrive_peak=values["backdrive_peak"],
        feasible={k: bool(v > 0) for k, v in margins.items()},
        margins=margins,
    )


# ---------------------------------------------------------------------------
# search

def _torque_ok(r_g, n, req, cfg):
    return _metric("max_torque", r_g, n, cfg) > req.required_torque


def _upper_ok(r_g, n, req, cfg):
    # cheapest checks first
    return (
        _metric("natural_frequency", r_g, n, cfg) > req.required_natural_frequency
        and _metric("max_speed", r_g, n, cfg) > req.required_speed
        and _metric("backdrive_avg", r_g, n, cfg) < req.max_backdrive
    )


def _bisect_ratio(good, bad, pred, rel_tol):
    """Shrink [good, bad] (either order) until the ends agree to ``rel_tol``."""
    while max(good, bad) / min(good, bad) > 1 + rel_tol:
        mid = math.sqrt(good * bad)
        if pred(mid):
            good = mid
        else:
            bad = mid
    return good


def feasible_gear_interval(r_g: float, req: Requirements, cfg: Optional[RunConfig] = None):
    """Feasible gear ratios ``(n_lo, n_hi)`` at radius ``r_g``, or None when empty.

    Both ends are feasible points located to relative ``cfg.n_rel_tol``.
    """
    cfg = cfg or RunConfig()
    r_g = float(r_g)
    lo, hi = cfg.n_min, cfg.n_max
    if not _torque_ok(r_g, hi, req, cfg):
        return None
    if _torque_ok(r_g, lo, req, cfg):
        n_lo = lo
    else:
        n_lo = _bisect_ratio(hi, lo, lambda n: _torque_ok(r_g, n, req, cfg), cfg.n_rel_tol)
    if not _upper_ok(r_g, n_lo, req, cfg):
        return None
    if _upper_ok(r_g, hi, req, cfg):
        n_hi = hi
    else:
        n_hi = _bisect_ratio(n_lo, hi, lambda n: _upper_ok(r_g, n, req, cfg), cfg.n_rel_tol)
    return (n_lo, n_hi)


@dataclass(frozen=True)
class OptimizationResult:
    age: float
    r_g_opt: float  # m
    n_opt: float
    actuator_mass: float  # kg
    active_constraints: tuple
    report: ConstraintReport
    n_interval: tuple

    def to_dict(self) -> dict:
        return {
            "age": self.age,
            "r_g_opt": self.r_g_opt,
            "n_opt": self.n_opt,
            "n_realizable": realizable_ratio(self.n_opt),
            "actuator_mass": self.actuator_mass,
            "active_constraints": list(self.active_constraints),
            "n_interval": list(self.n_interval),
            "report": self.report.to_dict(),
        }


def _thresholds(req: Requirements) -> dict:
    return {
        TORQUE: req.required_torque,
        SPEED: req.required_speed,
        BANDWIDTH: req.required_natural_frequency,
        BACKDRIVE: req.max_backdrive,
    }


def active_constraints(report: ConstraintReport, req: Requirements, tol: float = 0.01) -> tuple:
    """Labels whose slack is below ``tol`` times the threshold."""
    out = []
    for label, thr in _thresholds(req).items():
        if math.isfinite(thr) and abs(report.margins[label]) < tol * thr:
            out.append(label)
    return tuple(out)


def _binding_at(r_g, req, cfg):
    if not _torque_ok(r_g, cfg.n_max, req, cfg):
        return [TORQUE]
    n_lo = feasible_gear_interval(r_g, dataclasses.replace(req, max_backdrive=math.inf,
                                                           required_speed=0.0,
                                                           required_natural_frequency=0.0), cfg)[0]
    rep = evaluate_design(r_g, n_lo, req, cfg)
    return [k for k in LABELS if not rep.feasible[k]]


def optimize(req: Requirements, cfg: Optional[RunConfig] = None) -> OptimizationResult:
    """Smallest-mass design meeting ``req``; raises InfeasibleError if none in bounds."""
    cfg = cfg or RunConfig()
    lo, hi = cfg.rg_min, cfg.rg_max
    iv = feasible_gear_interval(hi, req, cfg)
    if iv is None:
        binding = _binding_at(hi, req, cfg)
        raise InfeasibleError(
            f"no feasible design up to r_g = {hi} m; binding: {', '.join(binding)}",
            binding=binding,
            age=req.age,
        )
    r_best = hi
    iv_lo = feasible_gear_interval(lo, req, cfg)
    if iv_lo is not None:
        r_best, iv = lo, iv_lo
    else:
        while hi - lo > cfg.rg_tol:
            mid = 0.5 * (lo + hi)
            iv_mid = feasible_gear_interval(mid, req, cfg)
            if iv_mid is None:
                lo = mid
            else:
                hi, iv = mid, iv_mid
        r_best = hi
    n_lo, n_hi = iv
    n_opt = 0.5 * (n_lo + n_hi)
    report = evaluate_design(r_best, n_opt, req, cfg)
    if not report.overall:
        # midpoint off the feasible set only if monotonicity is violated; keep a feasible end
        for cand in (n_lo, n_hi):
            rep = evaluate_design(r_best, cand, req, cfg)
            if rep.overall:
                n_opt, report = cand, rep
                break
    return OptimizationResult(
        age=req.age,
        r_g_opt=r_best,
        n_opt=n_opt,
        actuator_mass=actuator_mass(r_best, cfg),
        active_constraints=active_constraints(report, req, cfg.active_tol),
        report=report,
        n_interval=(n_lo, n_hi),
    )


@dataclass(frozen=True)
class SweepFailure:
    age: float
    reason: str
    binding: tuple = ()

    def to_dict(self) -> dict:
        return {"age": self.age, "infeasible": True, "reason": self.reason, "binding": list(self.binding)}


def _optimize_age(age, cfg, overrides):
    req = requirements_for_age(age, overrides)
    try:
        return optimize(req, cfg)
    except (InfeasibleError, DivergenceError) as exc:
        return SweepFailure(age=float(age), reason=str(exc), binding=tuple(getattr(exc, "binding", None) or ()))


def parallel_map(fn, items, jobs: int = 1):
    """Order-stable map, over worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def sweep_ages(ages: Sequence[float], cfg: Optional[RunConfig] = None, overrides: Optional[dict] = None, jobs: int = 1):
    """Optimize each age; infeasible ages become SweepFailure entries."""
    cfg = cfg or RunConfig()
    ages = sorted(float(a) for a in ages)
    for a in ages:
        requirements_for_age(a)  # domain check before any work
    return parallel_map(functools.partial(_optimize_age, cfg=cfg, overrides=overrides), ages, jobs)


# ---------------------------------------------------------------------------
# grids

@dataclass
class GridTable:
    metric: str
    rg_values: np.ndarray
    n_values: np.ndarray
    values: np.ndarray  # shape (len(rg_values), len(n_values)); NaN marks failed cells

    def rows(self):
        for i, r in enumerate(self.rg_values):
            for j, n in enumerate(self.n_values):
                yield float(r), float(n), float(self.values[i, j])

    def to_csv(self, path, comments=()):
        close = not hasattr(path, "write")
        fh = open(path, "w", newline="") if close else path
        try:
            for line in comments:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r_g_m", "n", self.metric])
            for r, n, v in self.rows():
                w.writerow([repr(r), repr(n), repr(v)])
        finally:
            if close:
                fh.close()


def _grid_cell(args, metric, cfg):
    r, n = args
    try:
        return _metric(metric, r, n, cfg)
    except (DivergenceError, ArithmeticError) as exc:
        log.warning("grid cell r_g=%g n=%g failed: %s", r, n, exc)
        return math.nan


def constraint_grid(
    metric: str,
    rg_values: Sequence[float],
    n_values: Sequence[float],
    cfg: Optional[RunConfig] = None,
    jobs: int = 1,
) -> GridTable:
    """Evaluate ``metric`` on the full (r_g, n) product grid."""
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")
    cfg = cfg or RunConfig()
    rg = np.asarray(rg_values, dtype=float)
    ns = np.asarray(n_values, dtype=float)
    if rg.size < 1 or ns.size < 1:
        raise ValidationError("grid axes must be non-empty")
    for r in rg:
        scale_motor(r)
    if np.any(ns < 1):
        raise DomainError("gear ratios must be >= 1")
    cells = [(float(r), float(n)) for r in rg for n in ns]
    vals = parallel_map(functools.partial(_grid_cell, metric=metric, cfg=cfg), cells, jobs)
    return GridTable(metric=metric, rg_values=rg, n_values=ns, values=np.array(vals).reshape(rg.size, ns.size))


def feasibility_grids(rg_values, n_values, reqs: Sequence[Requirements], cfg: Optional[RunConfig] = None, jobs: int = 1):
    """Constraint values on a dense grid, skipping cells already infeasible for every ``req``.

    Checks run cheapest first (natural frequency, speed, torque, backdrive);
    a later metric is computed only where some requirement set still passes
    all earlier ones.  Skipped cells hold NaN.
    """
    cfg = cfg or RunConfig()
    rg = np.asarray(rg_values, dtype=float)
    ns = np.asarray(n_values, dtype=float)
    shape = (rg.size, ns.size)
    cells = [(float(r), float(n)) for r in rg for n in ns]
    alive = np.ones((len(reqs), len(cells)), dtype=bool)
    grids = {}
    order = (
        ("natural_frequency", lambda v, q: v > q.required_natural_frequency),
        ("max_speed", lambda v, q: v > q.required_speed),
        ("max_torque", lambda v, q: v > q.required_torque),
        ("backdrive_avg", lambda v, q: v < q.max_backdrive),
    )
    for metric, passes in order:
        todo = np.flatnonzero(alive.any(axis=0))
        vals = np.full(len(cells), math.nan)
        got = parallel_map(functools.partial(_grid_cell, metric=metric, cfg=cfg), [cells[i] for i in todo], jobs)
        vals[todo] = got
        for k, q in enumerate(reqs):
            with np.errstate(invalid="ignore"):
                alive[k] &= passes(vals, q)
        grids[metric] = vals.reshape(shape)
    grids["feasible"] = alive.reshape((len(reqs),) + shape)
    return rg, ns, grids


def brute_force_optimum(req: Requirements, cfg: Optional[RunConfig] = None, rg_count: int = 200,
                        n_count: int = 200, grids=None, index: int = 0):
    """Dense-grid optimum: smallest grid radius with any feasible grid ratio.

    Returns ``(r_g, n_lo, n_hi)`` over the feasible grid ratios at that
    radius, or None.  Pass precomputed ``feasibility_grids`` output (and the
    position of ``req`` in it) to share one grid between several ages.
    """
    cfg = cfg or RunConfig()
    if grids is None:
        rg = np.linspace(cfg.rg_min, cfg.rg_max, rg_count)
        ns = np.linspace(cfg.n_min, cfg.n_max, n_count)
        grids = feasibility_grids(rg, ns, [req], cfg)
        index = 0
    rg, ns, g = grids
    feas = g["feasible"][index]
    rows = np.flatnonzero(feas.any(axis=1))
    if rows.size == 0:
        return None
    i = int(rows[0])
    cols = np.flatnonzero(feas[i])
    return float(rg[i]), float(ns[cols[0]]), float(ns[cols[-1]])


def realizable_ratio(n: float, stages: Sequence[float] = STAGE_RATIOS) -> float:
    """Nearest ratio (in log distance) built from at most two catalogue stages."""
    options = sorted({a * b for a in stages for b in stages})
    return min(options, key=lambda x: abs(math.log(x / n)))
