import copy
import math

import pytest

from wheelleg.config import SCHEMA_VERSION, config_hash, load_robot, load_scenario, parse_scenario
from wheelleg.errors import ConfigError
from wheelleg.perception import FilterParams
from wheelleg.pickup_fsm import PickupConfig
from wheelleg.sim_world import calibrate_power_params

DEG = math.pi / 180


def test_bundled_defaults_match_library_defaults():
    robot = load_robot()
    scen = load_scenario(robot=robot)
    assert scen.raw["schema_version"] == SCHEMA_VERSION
    assert scen.pickup == PickupConfig()
    assert scen.filter == FilterParams()
    assert scen.trials.dt == pytest.approx(1 / 50)
    assert scen.trials.noise_std == pytest.approx((0.005, 0.005, 0.5 * DEG))
    assert scen.n_trials == 200
    assert robot.model.mass == 85.0
    # free coefficients are fitted at run time from the anchors
    assert robot.calibrate_power
    ref = calibrate_power_params(robot.model)
    assert (robot.power.p_idle, robot.power.drivetrain_eff) == (ref.p_idle, ref.drivetrain_eff)


def test_degrees_converted_at_boundary():
    scen = load_scenario()
    assert scen.pickup.yaw_tol == pytest.approx(3 * DEG)
    assert scen.simulate.segments[2].wz == pytest.approx(20 * DEG)


def test_hash_ignores_key_order_but_not_values():
    a = {"x": 1, "y": {"b": 2, "a": 3}}
    b = {"y": {"a": 3, "b": 2}, "x": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({"x": 2, "y": {"b": 2, "a": 3}})


def test_invalid_value_names_path():
    raw = copy.deepcopy(load_scenario().raw)
    raw["perception"]["alpha"] = 1.5
    with pytest.raises(ConfigError) as exc:
        parse_scenario(raw, "s.toml")
    assert "perception" in str(exc.value) and str(exc.value).startswith("s.toml: ")


def test_missing_section_falls_back_to_defaults():
    raw = copy.deepcopy(load_scenario().raw)
    del raw["pickup"]
    assert parse_scenario(raw, "s.toml").pickup == PickupConfig()


def test_missing_schema_version_rejected():
    raw = copy.deepcopy(load_scenario().raw)
    del raw["schema_version"]
    with pytest.raises(ConfigError) as exc:
        parse_scenario(raw, "s.toml")
    assert "schema_version" in str(exc.value)
