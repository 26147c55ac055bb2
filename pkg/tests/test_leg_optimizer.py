import math

import numpy as np
import pytest

from wheelleg.errors import NoFeasibleDesignError
from wheelleg.leg_model import DEFAULT_ROM, FootForce, LegGeometry, RomSpec, inverse_kinematics, static_torques
from wheelleg.leg_optimizer import (
    DEFAULT_VERTICAL_FORCE,
    DesignObjective,
    ParamGrid,
    geometry_fragment,
    grid_search,
    torque_cost,
)

SMALL = ParamGrid((0.36, 0.42, 0.01), (0.32, 0.37, 0.01), (0.0, 0.0, 0.005))


def test_default_vertical_force_is_two_leg_share():
    assert DEFAULT_VERTICAL_FORCE == pytest.approx(155 * 9.81 / 2)
    assert DEFAULT_VERTICAL_FORCE == pytest.approx(760.275)


def test_full_extension_point_costs_nothing():
    g = LegGeometry(0.35, 0.35, singularity_margin=0.0, min_parallelogram_angle=0.0)
    obj = DesignObjective(rom=RomSpec((0.0, 0.0), (-0.70, -0.70), 0.01))
    cost, frac = torque_cost(g, obj)
    assert frac == 1.0
    assert cost == pytest.approx(0.0, abs=1e-20)


def test_quadratic_scaling_in_force():
    g = LegGeometry()
    c1, _ = torque_cost(g, DesignObjective(vertical_force=300.0))
    c2, _ = torque_cost(g, DesignObjective(vertical_force=600.0))
    assert c2 == pytest.approx(4 * c1, rel=1e-12)


def test_three_point_hand_oracle():
    g = LegGeometry(0.35, 0.35)
    rom = RomSpec((0.0, 0.02), (-0.5, -0.5), 0.01)
    f = 500.0
    expected = 0.0
    for x in (0.0, 0.01, 0.02):
        t1, t2 = static_torques(g, inverse_kinematics(g, (x, -0.5)), FootForce(0.0, f))
        expected += t1 * t1 + t2 * t2
    cost, frac = torque_cost(g, DesignObjective(rom=rom, vertical_force=f))
    assert frac == 1.0
    assert cost == pytest.approx(expected, rel=1e-12)


def test_penalty_per_infeasible_point():
    g = LegGeometry(0.20, 0.20)  # far too short for most of the default RoM
    cost, frac = torque_cost(g, DesignObjective(infeasibility_penalty=1e6))
    n = DEFAULT_ROM.points()[0].size
    n_bad = round((1 - frac) * n)
    assert n_bad > 0
    assert cost >= n_bad * 1e6


def test_single_candidate_grid():
    grid = ParamGrid((0.40, 0.40, 0.01), (0.35, 0.35, 0.01))
    res = grid_search(grid, DesignObjective())
    assert (res.best_geometry.upper_len, res.best_geometry.lower_len) == (0.40, 0.35)
    assert len(res.cost_table) == 1


def test_result_equals_rescan_and_is_exhaustive():
    res = grid_search(SMALL, DesignObjective())
    ups, lows, pivs = SMALL.axes()
    assert len(res.cost_table) == len(ups) * len(lows) * len(pivs)
    feasible = {k: c for k, c in res.cost_table.items() if res.feasible_fraction[k] >= 1.0}
    best_key = min(sorted(feasible), key=lambda k: feasible[k])
    assert res.best_cost == feasible[best_key]
    assert (res.best_geometry.upper_len, res.best_geometry.lower_len, res.best_geometry.pivot_offset) == best_key
    assert all(res.best_cost <= c for c in feasible.values())
    assert all(0.0 <= f <= 1.0 for f in res.feasible_fraction.values())


def test_independent_of_worker_count():
    a = grid_search(SMALL, DesignObjective(), jobs=1)
    b = grid_search(SMALL, DesignObjective(), jobs=2)
    assert a.cost_table == b.cost_table
    assert a.best_geometry == b.best_geometry
    assert a.to_csv() == b.to_csv()


def test_tie_break_prefers_lexicographically_smallest():
    # pivot offset axis only shifts x; a symmetric RoM gives equal costs for +/- pivots
    grid = ParamGrid((0.40, 0.40, 0.01), (0.35, 0.35, 0.01), (-0.01, 0.01, 0.01))
    rom = RomSpec((0.0, 0.0), (-0.6, -0.6), 0.01)
    res = grid_search(grid, DesignObjective(rom=rom))
    costs = sorted(res.cost_table.items())
    best = min(c for _, c in costs)
    first = next(k for k, c in costs if c == best)
    assert (res.best_geometry.upper_len, res.best_geometry.lower_len, res.best_geometry.pivot_offset) == first


def test_shrinking_rom_never_increases_best_cost():
    big = DesignObjective(rom=RomSpec((-0.04, 0.14), (-0.71, -0.41), 0.02))
    small = DesignObjective(rom=RomSpec((0.0, 0.10), (-0.65, -0.45), 0.02))
    # nested grids: every point of the small RoM is a point of the big one
    bx, bz = big.rom.points()
    sx, sz = small.rom.points()
    big_pts = set(zip(np.round(bx, 9), np.round(bz, 9)))
    assert set(zip(np.round(sx, 9), np.round(sz, 9))) <= big_pts
    assert grid_search(SMALL, small).best_cost <= grid_search(SMALL, big).best_cost


def test_no_feasible_design_raises():
    grid = ParamGrid((0.20, 0.22, 0.01), (0.20, 0.22, 0.01))
    with pytest.raises(NoFeasibleDesignError):
        grid_search(grid, DesignObjective())


def test_default_grid_winner_frozen():
    res = grid_search(ParamGrid(), DesignObjective())
    assert len(res.cost_table) == 41 * 41
    g = res.best_geometry
    assert (g.upper_len, g.lower_len, g.pivot_offset) == (0.395, 0.335, 0.0)
    assert res.best_cost == pytest.approx(33683071.3, rel=1e-8)


def test_csv_and_fragment_formats():
    res = grid_search(SMALL, DesignObjective())
    lines = res.to_csv().splitlines()
    assert lines[0] == "upper_len,lower_len,pivot_offset,cost,feasible_fraction"
    assert len(lines) == 1 + len(res.cost_table)
    frag = geometry_fragment(res.best_geometry)
    assert frag.startswith("[leg]\n")
    assert f"upper_len = {res.best_geometry.upper_len!r}" in frag


def test_grid_validation():
    with pytest.raises(ValueError):
        ParamGrid((0.3, 0.4, 0.0))
    with pytest.raises(ValueError):
        ParamGrid((0.4, 0.3, 0.01))
    with pytest.raises(ValueError):
        DesignObjective(vertical_force=0.0)
    with pytest.raises(ValueError):
        DesignObjective(infeasibility_penalty=-1.0)
