"""Robot and scenario configuration files.

Both files are TOML.  Angles are written in degrees and lengths in metres;
everything is converted to radians on load.  Validation failures raise
:class:`ConfigError` carrying the dotted path of the offending field.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .drive_control import Gains, StiffnessMode, WheelMount
from .errors import ConfigError
from .leg_model import DEG, LegGeometry, RomSpec
from .leg_optimizer import DesignObjective, ParamGrid
from .perception import FilterParams
from .pickup_fsm import BoxSpec, PickupConfig
from .pickup_sim import TrialSettings
from .sim_world import PowerParams, RobotModel, SupportMode, Terrain, TerrainKind

SCHEMA_VERSION = 1

_MISSING = object()


class _Node:
    """Typed accessor over a parsed TOML table that remembers its path."""

    def __init__(self, data: dict, path: str, source: str):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected a table", source)
        self.data, self.path, self.source = data, path, source
        self.seen: set = set()

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def _get(self, key, default):
        self.seen.add(key)
        if key in self.data:
            return self.data[key]
        if default is _MISSING:
            raise ConfigError(self._p(key), "required field missing", self.source)
        return default

    def table(self, key: str, required: bool = False) -> "_Node":
        raw = self._get(key, _MISSING if required else {})
        return _Node(raw, self._p(key), self.source)

    def number(self, key, default=_MISSING, lo=None, hi=None, positive=False) -> float:
        v = self._get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(self._p(key), f"expected a finite number, got {v!r}", self.source)
        if positive and not v > 0:
            raise ConfigError(self._p(key), "must be positive", self.source)
        if lo is not None and v < lo or hi is not None and v > hi:
            raise ConfigError(self._p(key), f"must lie within [{lo}, {hi}]", self.source)
        return float(v)

    def integer(self, key, default=_MISSING, lo=None) -> int:
        v = self._get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(self._p(key), f"expected an integer, got {v!r}", self.source)
        if lo is not None and v < lo:
            raise ConfigError(self._p(key), f"must be >= {lo}", self.source)
        return v

    def string(self, key, default=_MISSING, choices=None) -> str:
        v = self._get(key, default)
        if not isinstance(v, str):
            raise ConfigError(self._p(key), f"expected a string, got {v!r}", self.source)
        if choices is not None and v not in choices:
            raise ConfigError(self._p(key), f"must be one of {sorted(choices)}", self.source)
        return v

    def boolean(self, key, default=_MISSING) -> bool:
        v = self._get(key, default)
        if not isinstance(v, bool):
            raise ConfigError(self._p(key), f"expected true/false, got {v!r}", self.source)
        return v

    def numbers(self, key, default=_MISSING, length=None, nonempty=True) -> list[float]:
        v = self._get(key, default)
        if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
            raise ConfigError(self._p(key), "expected an array of numbers", self.source)
        if length is not None and len(v) != length:
            raise ConfigError(self._p(key), f"expected {length} values, got {len(v)}", self.source)
        if nonempty and not v:
            raise ConfigError(self._p(key), "must not be empty", self.source)
        return [float(x) for x in v]

    def tables(self, key, default=_MISSING) -> list["_Node"]:
        v = self._get(key, default)
        if not isinstance(v, list) or not v:
            raise ConfigError(self._p(key), "expected a non-empty array of tables", self.source)
        return [_Node(item, f"{self._p(key)}[{i}]", self.source) for i, item in enumerate(v)]

    def check_unknown(self):
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ConfigError(self._p(extra[0]), "unknown field", self.source)


def _guard(path: str, source: str, fn, *args, **kwargs):
    """Run a constructor, converting its ValueError into a field-path ConfigError."""
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc), source) from exc


def _schema(root: _Node):
    v = root.integer("schema_version")
    if v != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {v} (expected {SCHEMA_VERSION})", root.source)


@dataclass(frozen=True)
class RobotConfig:
    model: RobotModel
    power: PowerParams
    calibrate_power: bool
    raw: dict


@dataclass(frozen=True)
class CotScenario:
    velocities: tuple[float, ...]
    payloads: tuple[float, ...]
    bump_stop_payloads: tuple[float, ...]
    distance: float
    threshold_frac: float
    wheel_lag: float
    body_height: float
    steering_noise_std: float


@dataclass(frozen=True)
class Segment:
    vx: float
    vy: float
    wz: float
    duration: float


@dataclass(frozen=True)
class SimulateScenario:
    segments: tuple[Segment, ...]
    body_height: float
    mode: SupportMode


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    control_rate_hz: float
    terrain: Terrain
    filter: FilterParams
    trials: TrialSettings
    pickup: PickupConfig
    box: BoxSpec
    n_trials: int
    cot: CotScenario
    grid: ParamGrid
    objective: DesignObjective
    simulate: SimulateScenario
    out_dir: str
    raw: dict


def _read(path) -> tuple[dict, str]:
    source = str(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh), source
    except FileNotFoundError as exc:
        raise ConfigError("<file>", f"not found: {source}", source) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"TOML syntax error: {exc}", source) from exc


def default_path(name: str) -> Path:
    return Path(str(resources.files("wheelleg") / "data" / name))


def parse_robot(data: dict, source: str = "<robot>") -> RobotConfig:
    root = _Node(data, "", source)
    _schema(root)

    body = root.table("body", required=True)
    length = body.number("length", positive=True)
    width = body.number("width", positive=True)
    mass = body.number("mass", positive=True)
    max_payload = body.number("max_payload", lo=0.0)
    body.check_unknown()

    leg = root.table("leg", required=True)
    q1 = leg.numbers("q1_range_deg", length=2)
    q2 = leg.numbers("q2_range_deg", length=2)
    stops = leg.numbers("bump_stop_deg", length=2)
    geom = _guard(
        "leg",
        source,
        LegGeometry,
        upper_len=leg.number("upper_len", positive=True),
        lower_len=leg.number("lower_len", positive=True),
        shoulder_offset=tuple(leg.numbers("shoulder_offset", length=2)),
        q1_range=(q1[0] * DEG, q1[1] * DEG),
        q2_range=(q2[0] * DEG, q2[1] * DEG),
        bump_stop_angles=(stops[0] * DEG, stops[1] * DEG),
        wheel_radius=leg.number("wheel_radius", positive=True),
        pivot_offset=leg.number("pivot_offset", 0.0),
        min_parallelogram_angle=leg.number("min_parallelogram_deg", 5.0, lo=0.0) * DEG,
        singularity_margin=leg.number("singularity_margin", 0.002, lo=0.0),
    )
    leg.check_unknown()

    wheels = root.table("wheels", required=True)
    limits = wheels.numbers("steer_limits_deg", length=2)
    offset = wheels.number("steer_axis_offset", lo=0.0)
    positions = wheels._get("positions", _MISSING)
    if not isinstance(positions, list) or len(positions) != 4:
        raise ConfigError("wheels.positions", "expected 4 [x, y] pairs (FL, FR, RL, RR)", source)
    mounts = []
    for i, p in enumerate(positions):
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)):
            raise ConfigError(f"wheels.positions[{i}]", "expected [x, y]", source)
        mounts.append(
            _guard(f"wheels.positions[{i}]", source, WheelMount, (float(p[0]), float(p[1])), (limits[0] * DEG, limits[1] * DEG), offset)
        )
    wheels.check_unknown()

    gains_node = root.table("gains", required=True)
    gains = {}
    for mode in StiffnessMode:
        g = gains_node.table(mode.value, required=True)
        gains[mode] = Gains(g.number("p", positive=True), g.number("d", positive=True))
        g.check_unknown()
    gains_node.check_unknown()

    pw = root.table("power", required=True)
    calibrate = pw.boolean("calibrate", True)
    power = _guard(
        "power",
        source,
        PowerParams,
        p_idle=pw.number("p_idle", lo=0.0),
        shoulder_hold_coeff=pw.number("shoulder_hold_coeff", 0.0, lo=0.0),
        rolling_coeff=pw.number("rolling_coeff", 0.0, lo=0.0),
        drivetrain_eff=pw.number("drivetrain_eff", lo=0.0, hi=1.0),
    )
    pw.check_unknown()
    root.check_unknown()

    model = RobotModel(
        geoms=(geom,) * 4, mounts=tuple(mounts), gains=gains, mass=mass, max_payload=max_payload, length=length, width=width
    )
    return RobotConfig(model, power, calibrate, data)


def parse_scenario(data: dict, source: str = "<scenario>", robot: Optional[RobotConfig] = None) -> ScenarioConfig:
    root = _Node(data, "", source)
    _schema(root)
    seed = root.integer("seed", lo=0)
    rate = root.number("control_rate_hz", 100.0, positive=True)

    t = root.table("terrain")
    kind = t.string("kind", "flat", choices={k.value for k in TerrainKind})
    terrain = _guard("terrain", source, Terrain, TerrainKind(kind), t.number("incline_deg", 0.0) * DEG)
    t.check_unknown()

    pc = root.table("perception")
    filt = _guard(
        "perception",
        source,
        FilterParams,
        alpha=pc.number("alpha", 0.3),
        gate_distance=pc.number("gate_distance", 0.25, positive=True),
        gate_yaw=pc.number("gate_yaw_deg", 30.0, positive=True) * DEG,
        reanchor_after=pc.integer("reanchor_after", 15, lo=1),
        t_fresh=pc.number("t_fresh", 0.5),
        t_stale=pc.number("t_stale", 3.0),
    )
    noise_xy = pc.numbers("noise_std", [0.005, 0.005], length=2)
    noise_yaw = pc.number("noise_yaw_deg", 0.5, lo=0.0) * DEG
    dropout = pc.number("dropout", 0.1, lo=0.0, hi=1.0)
    drift = (pc.number("drift_position", 0.002, lo=0.0), pc.number("drift_yaw_deg_per_m", 0.1, lo=0.0) * DEG)
    det_rate = pc.number("detection_rate_hz", 30.0, positive=True)
    pc.check_unknown()

    pk = root.table("pickup")
    n_trials = pk.integer("trials", 200, lo=0)
    standoff = pk.numbers("standoff_range", [0.5, 3.0], length=2)
    if not 0 <= standoff[0] <= standoff[1]:
        raise ConfigError("pickup.standoff_range", "need 0 <= min <= max", source)
    trials = TrialSettings(
        dt=1.0 / pk.number("control_rate_hz", 50.0, positive=True),
        detection_rate=det_rate,
        noise_std=(noise_xy[0], noise_xy[1], noise_yaw),
        dropout_p=dropout,
        drift_rate=drift,
        standoff_range=(standoff[0], standoff[1]),
        fault_rate=pk.number("fault_rate", 0.0, lo=0.0, hi=1.0),
        max_time=pk.number("max_time", 150.0, positive=True),
    )
    max_payload = robot.model.max_payload if robot is not None else 70.0
    box = _guard(
        "pickup",
        source,
        BoxSpec,
        length=pk.number("box_length", 0.60, positive=True),
        width=pk.number("box_width", 0.40, positive=True),
        height=pk.number("box_height", 0.32, positive=True),
        mass=pk.number("mass", 0.0),
        max_mass=max_payload,
    )
    pickup = _guard(
        "pickup",
        source,
        PickupConfig,
        approach_distance=pk.number("approach_distance", 1.0, positive=True),
        pos_tol_lengthwise=pk.number("pos_tol_lengthwise", 0.03),
        pos_tol_crosswise=pk.number("pos_tol_crosswise", 0.01),
        yaw_tol=pk.number("yaw_tol_deg", 3.0) * DEG,
        descend_height=pk.number("descend_height", 0.80),
        grip_height=pk.number("grip_height", 0.62),
        transport_height=pk.number("transport_height", 0.80),
        timeout_per_phase=pk.number("timeout_per_phase", 30.0, positive=True),
        precision_factor=pk.number("precision_factor", 0.8),
        descent_rate=pk.number("descent_rate", 0.05, positive=True),
    )
    pk.check_unknown()

    ct = root.table("cot")
    velocities = ct.numbers("velocities", [0.4, 0.7, 1.0, 1.3])
    if any(v <= 0 for v in velocities):
        raise ConfigError("cot.velocities", "velocities must be positive", source)
    payloads = ct.numbers("payloads_kg", [0, 10, 20, 30, 40, 50, 60, 70])
    bump_payloads = ct.numbers("bump_stop_payloads_kg", [50, 60, 70])
    for name, vals in (("payloads_kg", payloads), ("bump_stop_payloads_kg", bump_payloads)):
        if any(not 0 <= m <= max_payload for m in vals):
            raise ConfigError(f"cot.{name}", f"payloads must lie within [0, {max_payload}] kg", source)
    cot = CotScenario(
        tuple(velocities),
        tuple(payloads),
        tuple(bump_payloads),
        ct.number("distance", 10.0, positive=True),
        ct.number("threshold_frac", 0.9, lo=0.0, hi=1.0),
        ct.number("wheel_lag", 0.1, lo=0.0),
        ct.number("body_height", 0.70, lo=0.6, hi=0.9),
        ct.number("steering_noise_deg_s", 0.0, lo=0.0) * DEG,
    )
    ct.check_unknown()

    op = root.table("optimizer")
    grid = _guard(
        "optimizer",
        source,
        ParamGrid,
        upper_len_range=tuple(op.numbers("upper_len", [0.30, 0.50, 0.005], length=3)),
        lower_len_range=tuple(op.numbers("lower_len", [0.25, 0.45, 0.005], length=3)),
        pivot_offset_range=tuple(op.numbers("pivot_offset", [0.0, 0.0, 0.005], length=3)),
    )
    rom_x = op.numbers("rom_x", [-0.04, 0.14], length=2)
    rom_z = op.numbers("rom_z", [-0.71, -0.41], length=2)
    rom = _guard("optimizer", source, RomSpec, tuple(rom_x), tuple(rom_z), op.number("rom_resolution", 0.01, positive=True))
    objective = _guard(
        "optimizer",
        source,
        DesignObjective,
        rom=rom,
        vertical_force=op.number("vertical_force", (85.0 + 70.0) * 9.81 / 2.0),
        infeasibility_penalty=op.number("infeasibility_penalty", 1e6, lo=0.0),
        feasible_floor=op.number("feasible_floor", 1.0, lo=0.0, hi=1.0),
    )
    op.check_unknown()

    sm = root.table("simulate")
    segs = []
    for node in sm.tables("segments", [{"vx": 0.5, "vy": 0.0, "wz_deg": 0.0, "duration": 4.0}]):
        segs.append(
            Segment(node.number("vx", 0.0), node.number("vy", 0.0), node.number("wz_deg", 0.0) * DEG, node.number("duration", positive=True))
        )
        node.check_unknown()
        if math.hypot(segs[-1].vx, segs[-1].vy) > 2.0:
            raise ConfigError(node.path, "planar speed exceeds 2.0 m/s", source)
    simulate = SimulateScenario(
        tuple(segs),
        sm.number("body_height", 0.80, lo=0.6, hi=0.9),
        SupportMode(sm.string("mode", "legs", choices={m.value for m in SupportMode})),
    )
    sm.check_unknown()

    out = root.table("output")
    out_dir = out.string("dir", "out")
    out.check_unknown()
    root.check_unknown()

    return ScenarioConfig(seed, rate, terrain, filt, trials, pickup, box, n_trials, cot, grid, objective, simulate, out_dir, data)


def load_robot(path=None) -> RobotConfig:
    data, source = _read(path or default_path("robot.toml"))
    return parse_robot(data, source)


def load_scenario(path=None, robot: Optional[RobotConfig] = None) -> ScenarioConfig:
    data, source = _read(path or default_path("scenario.toml"))
    return parse_scenario(data, source, robot)


def config_hash(*tables: Any) -> str:
    """Stable sha256 over the parsed config tables (key order and formatting do not matter)."""
    blob = json.dumps(tables, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
