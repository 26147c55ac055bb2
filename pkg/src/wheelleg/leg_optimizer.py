"""Exhaustive grid search over leg geometry minimising squared static torques."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NoFeasibleDesignError
from .leg_model import (
    DEFAULT_ROM,
    OK,
    LegGeometry,
    RomSpec,
    solve_ik_arrays,
    squared_torques_arrays,
    with_lengths,
)

G = 9.81
ROBOT_MASS = 85.0
MAX_PAYLOAD = 70.0
# two-leg support carrying robot plus full payload
DEFAULT_VERTICAL_FORCE = (ROBOT_MASS + MAX_PAYLOAD) * G / 2.0


@dataclass(frozen=True)
class ParamGrid:
    """Candidate axes as ``(start, stop, step)`` triples (stop inclusive)."""

    upper_len_range: tuple[float, float, float] = (0.30, 0.50, 0.005)
    lower_len_range: tuple[float, float, float] = (0.25, 0.45, 0.005)
    pivot_offset_range: tuple[float, float, float] = (0.0, 0.0, 0.005)

    def __post_init__(self):
        for name in ("upper_len_range", "lower_len_range", "pivot_offset_range"):
            lo, hi, step = getattr(self, name)
            if not step > 0:
                raise ValueError(f"{name}: step must be positive")
            if hi < lo:
                raise ValueError(f"{name}: empty interval")

    def axes(self):
        return tuple(_axis(r) for r in (self.upper_len_range, self.lower_len_range, self.pivot_offset_range))

    def candidates(self) -> list[tuple[float, float, float]]:
        ups, lows, pivs = self.axes()
        return [(u, lo, p) for u in ups for lo in lows for p in pivs]


def _axis(rng):
    lo, hi, step = rng
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 9) for k in range(n)]


@dataclass(frozen=True)
class DesignObjective:
    rom: RomSpec = DEFAULT_ROM
    vertical_force: float = DEFAULT_VERTICAL_FORCE
    infeasibility_penalty: float = 1e6
    feasible_floor: float = 1.0

    def __post_init__(self):
        if not self.vertical_force > 0:
            raise ValueError("vertical_force must be positive")
        if self.infeasibility_penalty < 0:
            raise ValueError("infeasibility_penalty must be non-negative")
        if not 0.0 <= self.feasible_floor <= 1.0:
            raise ValueError("feasible_floor must be in [0, 1]")


@dataclass
class DesignResult:
    best_geometry: LegGeometry
    best_cost: float
    cost_table: dict[tuple[float, float, float], float]
    feasible_fraction: dict[tuple[float, float, float], float] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["upper_len", "lower_len", "pivot_offset", "cost", "feasible_fraction"])
        for key in sorted(self.cost_table):
            u, lo, p = key
            w.writerow([f"{u:.4f}", f"{lo:.4f}", f"{p:.4f}", repr(self.cost_table[key]), repr(self.feasible_fraction[key])])
        return buf.getvalue()


def torque_cost(geom: LegGeometry, objective: DesignObjective) -> tuple[float, float]:
    """Sum of squared torques over the RoM grid, plus a penalty per infeasible point."""
    x, z = objective.rom.points()
    if x.size == 0:
        raise ValueError("RoM grid is empty")
    q1, q2, status = solve_ik_arrays(geom, x, z)
    ok = status == OK
    per_point = squared_torques_arrays(geom, q1[ok], q2[ok], 0.0, objective.vertical_force)
    n_bad = int(x.size - np.count_nonzero(ok))
    cost = float(math.fsum(per_point.tolist())) + n_bad * objective.infeasibility_penalty
    return cost, float(np.count_nonzero(ok)) / x.size


def _evaluate(args):
    template, objective, key = args
    return torque_cost(with_lengths(template, *key), objective)


def grid_search(
    grid: ParamGrid,
    objective: DesignObjective,
    template: LegGeometry | None = None,
    jobs: int = 1,
) -> DesignResult:
    """Evaluate every candidate and return the cheapest feasible one.

    Ties go to the lexicographically smallest ``(upper, lower, pivot)``. The
    reduction runs over the candidate list in a fixed order, so the result
    does not depend on ``jobs``.
    """
    template = template or LegGeometry()
    keys = grid.candidates()
    if not keys:
        raise ValueError("parameter grid is empty")
    work = [(template, objective, k) for k in keys]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        results = [_evaluate(w) for w in work]

    cost_table = {k: r[0] for k, r in zip(keys, results)}
    fractions = {k: r[1] for k, r in zip(keys, results)}

    best_key = None
    for key in sorted(keys):
        if fractions[key] < objective.feasible_floor:
            continue
        if best_key is None or cost_table[key] < cost_table[best_key]:
            best_key = key
    if best_key is None:
        raise NoFeasibleDesignError(
            f"no candidate reaches feasible fraction {objective.feasible_floor:.3f} "
            f"(best {max(fractions.values()):.3f})"
        )
    return DesignResult(
        best_geometry=with_lengths(template, *best_key),
        best_cost=cost_table[best_key],
        cost_table=cost_table,
        feasible_fraction=fractions,
    )


def geometry_fragment(geom: LegGeometry) -> str:
    """Winner as a TOML fragment for the ``[leg]`` table of the robot config."""
    return (
        "[leg]\n"
        f"upper_len = {geom.upper_len!r}\n"
        f"lower_len = {geom.lower_len!r}\n"
        f"pivot_offset = {geom.pivot_offset!r}\n"
    )
