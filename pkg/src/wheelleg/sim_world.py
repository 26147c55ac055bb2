"""Deterministic planar kinematic simulation, power model and CoT harness."""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .drive_control import (
    DEFAULT_GAINS,
    DEFAULT_MOUNTS,
    MAX_HEIGHT,
    MIN_HEIGHT,
    BodyTwist,
    RollingController,
    StanceCommand,
    WheelCommand,
    body_ik,
    rigid_fit,
    stiffness_gains,
)
from .errors import SimulationError, StanceError
from .geometry import Pose2D
from .leg_model import DEG, FootForce, JointState, LegGeometry, bump_stop_pose, foot_depth_in_body

G = 9.81


class SupportMode(enum.Enum):
    LEGS = "legs"
    BUMP_STOPS = "bump_stops"


class TerrainKind(enum.Enum):
    FLAT = "flat"
    RAMP = "ramp"


@dataclass(frozen=True)
class Terrain:
    """Ground model; a ramp rises along world +x."""

    kind: TerrainKind = TerrainKind.FLAT
    incline: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.incline <= 30 * DEG + 1e-12:
            raise ValueError("incline must be within [0, 30] deg")
        if self.kind is TerrainKind.FLAT and self.incline != 0.0:
            raise ValueError("flat terrain has zero incline")


FLAT = Terrain()


@dataclass(frozen=True)
class PowerParams:
    p_idle: float = 200.0
    shoulder_hold_coeff: float = 0.0
    rolling_coeff: float = 0.0
    drivetrain_eff: float = 0.85

    def __post_init__(self):
        if self.p_idle < 0 or self.shoulder_hold_coeff < 0 or self.rolling_coeff < 0:
            raise ValueError("power coefficients must be non-negative")
        if not 0.0 < self.drivetrain_eff <= 1.0:
            raise ValueError("drivetrain_eff must be in (0, 1]")


@dataclass(frozen=True)
class RobotModel:
    """Everything the simulator needs to know about the hardware."""

    geoms: tuple[LegGeometry, ...] = (LegGeometry(),) * 4
    mounts: tuple = DEFAULT_MOUNTS
    gains: dict = field(default_factory=lambda: dict(DEFAULT_GAINS), hash=False, compare=False)
    mass: float = 85.0
    max_payload: float = 70.0
    length: float = 1.2
    width: float = 0.75

    @property
    def wheel_radius(self) -> float:
        return self.geoms[0].wheel_radius


@dataclass(frozen=True)
class WheelState:
    steer: float = 0.0
    speed: float = 0.0  # drive shaft rad/s
    drive: float = 0.0  # part of ``speed`` that translates the steering axis


@dataclass(frozen=True)
class RobotState:
    pose: Pose2D = Pose2D()
    body_height: float = 0.8
    legs: tuple[JointState, ...] = ()
    wheels: tuple[WheelState, ...] = (WheelState(),) * 4
    payload: Optional[object] = None  # anything with a ``mass`` attribute (kg)
    payload_offset: Optional[Pose2D] = None  # payload pose in the robot frame
    support_mode: SupportMode = SupportMode.LEGS
    twist: BodyTwist = BodyTwist()  # realised body twist of the last step
    faults: frozenset = frozenset()
    hook_closed: bool = False

    @property
    def payload_mass(self) -> float:
        return float(self.payload.mass) if self.payload is not None else 0.0

    def payload_pose_world(self) -> Optional[Pose2D]:
        if self.payload_offset is None:
            return None
        return self.pose.compose(self.payload_offset)


def frozen_legs(state: RobotState) -> frozenset:
    return frozenset(int(f.split(":")[1]) for f in state.faults if f.startswith("actuator:"))


def bump_stop_height(model: RobotModel) -> float:
    g = model.geoms[0]
    return -foot_depth_in_body(g, bump_stop_pose(g)) + g.wheel_radius


def initial_state(
    model: RobotModel = RobotModel(),
    stance: StanceCommand = StanceCommand(),
    pose: Pose2D = Pose2D(),
    support_mode: SupportMode = SupportMode.LEGS,
    payload=None,
) -> RobotState:
    if support_mode is SupportMode.BUMP_STOPS:
        legs = tuple(bump_stop_pose(g) for g in model.geoms)
        height = bump_stop_height(model)
    else:
        legs = body_ik(stance, model.geoms)
        height = stance.body_height
    return RobotState(pose=pose, body_height=height, legs=legs, payload=payload, support_mode=support_mode)


_TARGET_CACHE: dict = {}


def _stance_targets(stance: StanceCommand, geoms) -> tuple[JointState, ...]:
    # stance commands repeat for long stretches; keyed on geometry identity to skip deep hashing
    key = (stance, id(geoms))
    hit = _TARGET_CACHE.get(key)
    if hit is not None and hit[0] is geoms:
        return hit[1]
    if len(_TARGET_CACHE) > 4096:
        _TARGET_CACHE.clear()
    targets = body_ik(stance, geoms)
    _TARGET_CACHE[key] = (geoms, targets)
    return targets


def _lag(current: float, target: float, blend: float) -> float:
    return current + (target - current) * blend


def integrate_pose(pose: Pose2D, vx: float, vy: float, wz: float, dt: float) -> Pose2D:
    """Exact SE(2) integration of a constant body twist."""
    th = wz * dt
    if abs(th) < 1e-12:
        dx, dy = vx * dt, vy * dt
    else:
        s, c = math.sin(th), math.cos(th)
        dx = (s * vx - (1.0 - c) * vy) / wz
        dy = ((1.0 - c) * vx + s * vy) / wz
    return pose.compose(Pose2D(dx, dy, th))


def axis_velocities(wheels, model: RobotModel):
    """No-slip steering-axis velocities implied by the wheel motion (body frame)."""
    r = model.wheel_radius
    return [(w.drive * r * math.cos(w.steer), w.drive * r * math.sin(w.steer)) for w in wheels]


def contact_scrub_speed(
    cmd: WheelCommand, mount, wheel_radius: float, axis_velocity=(0.0, 0.0), yaw_rate: float = 0.0
) -> float:
    """Sliding speed of the contact patch for a wheel whose steering axis moves at ``axis_velocity``.

    The contact sits ``steer_axis_offset`` to the wheel's right, so turning
    the module (steering plus body yaw) sweeps it along the rolling direction.
    """
    hx, hy = math.cos(cmd.steer_angle), math.sin(cmd.steer_angle)
    sweep = (cmd.steer_rate + yaw_rate) * mount.steer_axis_offset
    roll = cmd.wheel_speed * wheel_radius
    return math.hypot(axis_velocity[0] + (sweep - roll) * hx, axis_velocity[1] + (sweep - roll) * hy)


def step(
    state: RobotState,
    wheel_cmds,
    stance_cmd: StanceCommand,
    terrain: Terrain,
    dt: float,
    model: RobotModel = RobotModel(),
    wheel_lag: float = 0.0,
    foot_forces=None,
) -> RobotState:
    """Advance the robot by ``dt``.

    Steering angles are realised exactly.  Of each wheel's commanded speed,
    the part that rolls the contact patch along the steering sweep is
    realised at once and the rest (which moves the steering axis) follows
    with a first-order lag of ``wheel_lag`` seconds (0 = exact).  The body
    twist is the least-squares rigid motion of the steering axes.  In legs
    mode joints and body height relax toward the stance targets at rate
    p/d of the selected stiffness gains; ``foot_forces`` (per leg, N) shift
    the joint equilibrium by K^-1 J^T F.
    """
    if not dt > 0:
        raise SimulationError("dt must be positive")
    if len(wheel_cmds) != len(model.mounts):
        raise SimulationError("one wheel command per mount required")
    blend = 1.0 if wheel_lag <= 0 else 1.0 - math.exp(-dt / wheel_lag)
    wheels = []
    for w, cmd, m in zip(state.wheels, wheel_cmds, model.mounts):
        lo, hi = m.steer_limits
        if not lo - 1e-12 <= cmd.steer_angle <= hi + 1e-12:
            raise SimulationError(f"steer angle {cmd.steer_angle:.4f} outside limits {m.steer_limits}")
        sweep = cmd.steer_rate * m.steer_axis_offset / model.wheel_radius
        drive = _lag(w.drive, cmd.wheel_speed - sweep, blend)
        wheels.append(WheelState(cmd.steer_angle, drive + sweep, drive))

    vx, vy, wz = rigid_fit([m.position for m in model.mounts], axis_velocities(wheels, model))
    pose = integrate_pose(state.pose, vx, vy, wz, dt) if (vx or vy or wz) else state.pose

    if state.support_mode is SupportMode.BUMP_STOPS:
        legs, height = state.legs, state.body_height
    else:
        try:
            targets = _stance_targets(stance_cmd, model.geoms)
        except StanceError as exc:
            raise SimulationError(f"stance command rejected: {exc}") from exc
        gains = stiffness_gains(stance_cmd.stiffness_mode, model.gains)
        relax = 1.0 - math.exp(-dt * gains.p / gains.d)
        frozen = frozen_legs(state)
        legs = []
        for i, (q, tgt, geom) in enumerate(zip(state.legs, targets, model.geoms)):
            if i in frozen:
                legs.append(replace(q, dq1=0.0, dq2=0.0))
                continue
            t1, t2 = tgt.q1, tgt.q2
            if foot_forces is not None and foot_forces[i] is not None:
                tau1, tau2 = _torques(geom, q.q1, q.q2, foot_forces[i])
                t1, t2 = t1 + tau1 / gains.p, t2 + tau2 / gains.p
            n1, n2 = _lag(q.q1, t1, relax), _lag(q.q2, t2, relax)
            if abs(n1 - t1) < 1e-12 and abs(n2 - t2) < 1e-12:
                n1, n2 = t1, t2
            legs.append(JointState(n1, n2, (n1 - q.q1) / dt, (n2 - q.q2) / dt) if (n1, n2) != (q.q1, q.q2) else q)
        legs = tuple(legs)
        height = state.body_height if frozen else _lag(state.body_height, stance_cmd.body_height, relax)
        if abs(height - stance_cmd.body_height) < 1e-12:
            height = stance_cmd.body_height
        if not MIN_HEIGHT - 1e-9 <= height <= MAX_HEIGHT + 1e-9:
            raise SimulationError(f"body height {height:.4f} m outside rolling range")

    return replace(state, pose=pose, body_height=height, legs=legs, wheels=tuple(wheels), twist=_twist(vx, vy, wz))


def _twist(vx, vy, wz) -> BodyTwist:
    try:
        return BodyTwist(vx, vy, wz)
    except ValueError as exc:
        raise SimulationError(str(exc)) from exc


def _torques(geom: LegGeometry, q1: float, q2: float, force: FootForce):
    c1, s1 = math.cos(q1), math.sin(q1)
    c2, s2 = math.cos(q2), math.sin(q2)
    return (
        geom.upper_len * (c1 * force.fz - s1 * force.fx),
        geom.lower_len * (c2 * force.fz - s2 * force.fx),
    )


def foot_positions(state: RobotState, model: RobotModel = RobotModel()):
    """Leg-frame foot positions of the current joint state."""
    out = []
    for q, g in zip(state.legs, model.geoms):
        out.append(
            (
                g.pivot_offset + g.upper_len * math.cos(q.q1) + g.lower_len * math.cos(q.q2),
                g.upper_len * math.sin(q.q1) + g.lower_len * math.sin(q.q2),
            )
        )
    return out


# ---------------------------------------------------------------- power / CoT


@dataclass(frozen=True)
class PowerBreakdown:
    idle: float
    rolling: float
    grade: float
    hold: float

    @property
    def total(self) -> float:
        return self.idle + self.rolling + self.grade + self.hold


def total_mass(state: RobotState, model: RobotModel = RobotModel()) -> float:
    return model.mass + state.payload_mass


def holding_torque_sq(state: RobotState, model: RobotModel = RobotModel(), m_tot: Optional[float] = None) -> float:
    """Sum over legs of |tau|^2 holding a quarter of the total weight each."""
    if state.support_mode is SupportMode.BUMP_STOPS:
        return 0.0
    m = total_mass(state, model) if m_tot is None else m_tot
    f = FootForce(0.0, m * G / len(state.legs))
    acc = 0.0
    for q, g in zip(state.legs, model.geoms):
        t1, t2 = _torques(g, q.q1, q.q2, f)
        acc += t1 * t1 + t2 * t2
    return acc


def power_breakdown(
    state: RobotState,
    twist: Optional[BodyTwist],
    params: PowerParams,
    terrain: Terrain = FLAT,
    model: RobotModel = RobotModel(),
) -> PowerBreakdown:
    twist = state.twist if twist is None else twist
    m = total_mass(state, model)
    v = math.hypot(twist.vx, twist.vy)
    rolling = m * G * params.rolling_coeff * v / params.drivetrain_eff
    grade = 0.0
    if terrain.kind is TerrainKind.RAMP:
        c, s = math.cos(state.pose.yaw), math.sin(state.pose.yaw)
        v_uphill = c * twist.vx - s * twist.vy
        # no regeneration downhill
        grade = max(0.0, m * G * math.sin(terrain.incline) * v_uphill) / params.drivetrain_eff
    hold = params.shoulder_hold_coeff * holding_torque_sq(state, model)
    return PowerBreakdown(params.p_idle, rolling, grade, hold)


def power_model(
    state: RobotState,
    twist: Optional[BodyTwist],
    params: PowerParams,
    terrain: Terrain = FLAT,
    model: RobotModel = RobotModel(),
) -> float:
    """Total electrical power (W)."""
    return power_breakdown(state, twist, params, terrain, model).total


def cot(power: float, m_tot: float, v: float) -> float:
    if not v > 0:
        raise ValueError("cost of transport needs a positive velocity")
    if not m_tot > 0:
        raise ValueError("cost of transport needs a positive mass")
    return power / (G * m_tot * v)


def base_velocity(state: RobotState, wheel_radius: float = 0.14) -> float:
    """Mean wheel rim speed (m/s)."""
    return sum(abs(w.speed) for w in state.wheels) * wheel_radius / len(state.wheels)


# anchors at the reference payload and speed
REF_MASS = 155.0
REF_VELOCITY = 1.3
REF_POWER_LEGS = 472.0
REF_COT_BUMP = 0.15
COT_STANCE = StanceCommand(body_height=0.70)


def calibrate_power_params(
    model: RobotModel = RobotModel(),
    stance: StanceCommand = COT_STANCE,
    p_idle: float = 200.0,
    drivetrain_eff: float = 0.85,
) -> PowerParams:
    """Closed-form fit of the free power coefficients to the two anchors.

    The bump-stop anchor fixes rolling_coeff/drivetrain_eff (efficiency is
    held at ``drivetrain_eff``); the legs/bump-stop gap fixes the holding
    coefficient at the CoT stance.
    """
    p_bump = REF_COT_BUMP * G * REF_MASS * REF_VELOCITY
    rolling_coeff = (p_bump - p_idle) * drivetrain_eff / (REF_MASS * G * REF_VELOCITY)
    legs = initial_state(model, stance)
    hold_coeff = (REF_POWER_LEGS - p_bump) / holding_torque_sq(legs, model, m_tot=REF_MASS)
    return PowerParams(p_idle, hold_coeff, rolling_coeff, drivetrain_eff)


@dataclass(frozen=True)
class CotCell:
    mode: SupportMode
    payload_kg: float
    v_cmd: float
    v_mean: float
    p_mean: float
    cot_mean: float
    cot_std: float
    n_samples: int
    energy: dict
    invalid: bool = False


@dataclass
class CotReport:
    cells: list

    def cell(self, mode: SupportMode, payload_kg: float, v_cmd: float) -> CotCell:
        for c in self.cells:
            if c.mode is mode and c.payload_kg == payload_kg and c.v_cmd == v_cmd:
                return c
        raise KeyError((mode, payload_kg, v_cmd))

    def valid_cells(self):
        return [c for c in self.cells if not c.invalid]


def run_cot_cell(
    v_cmd: float,
    payload_kg: float,
    mode: SupportMode,
    params: PowerParams,
    model: RobotModel = RobotModel(),
    distance: float = 10.0,
    threshold_frac: float = 0.9,
    dt: float = 0.01,
    wheel_lag: float = 0.1,
    stance: StanceCommand = COT_STANCE,
    steering_noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    terrain: Terrain = FLAT,
) -> CotCell:
    """Drive ``distance`` metres at ``v_cmd`` from rest, sampling power and wheel speed per tick."""
    payload = _Payload(payload_kg) if payload_kg > 0 else None
    state = initial_state(model, stance, support_mode=mode, payload=payload)
    ctrl = RollingController(model.mounts, model.wheel_radius)
    m_tot = total_mass(state, model)
    cots, ps, vs = [], [], []
    energy = {"idle": 0.0, "rolling": 0.0, "grade": 0.0, "hold": 0.0, "total": 0.0}
    traveled = 0.0
    max_ticks = int(math.ceil(10 * distance / (v_cmd * dt))) + 1000
    for _ in range(max_ticks):
        wz = float(rng.normal(0.0, steering_noise_std)) if (steering_noise_std > 0 and rng is not None) else 0.0
        cmds = ctrl.tick(BodyTwist(v_cmd, 0.0, wz), dt)
        prev = state.pose
        state = step(state, cmds, stance, terrain, dt, model, wheel_lag=wheel_lag)
        traveled += prev.distance_to(state.pose)
        pb = power_breakdown(state, None, params, terrain, model)
        for k in ("idle", "rolling", "grade", "hold"):
            energy[k] += getattr(pb, k) * dt
        p = pb.total
        energy["total"] += p * dt
        v = base_velocity(state, model.wheel_radius)
        if v >= threshold_frac * v_cmd and v > 0:
            ps.append(p)
            vs.append(v)
            cots.append(cot(p, m_tot, v))
        if traveled >= distance:
            break
    if not cots:
        return CotCell(mode, payload_kg, v_cmd, math.nan, math.nan, math.nan, math.nan, 0, energy, invalid=True)
    return CotCell(
        mode,
        payload_kg,
        v_cmd,
        statistics.fmean(vs),
        statistics.fmean(ps),
        statistics.fmean(cots),
        statistics.pstdev(cots),
        len(cots),
        energy,
    )


@dataclass(frozen=True)
class _Payload:
    mass: float


def run_cot_sweep(
    velocities,
    payloads,
    mode: SupportMode,
    params: PowerParams,
    model: RobotModel = RobotModel(),
    distance: float = 10.0,
    threshold_frac: float = 0.9,
    rng_for_cell=None,
    max_payload: Optional[float] = None,
    **cell_kwargs,
) -> CotReport:
    """One cell per (payload, velocity) in grid order.

    ``rng_for_cell(mode, payload, v)`` supplies a per-cell generator when
    steering noise is enabled.
    """
    limit = model.max_payload if max_payload is None else max_payload
    if any(v <= 0 for v in velocities):
        raise ValueError("velocities must be positive")
    if any(not 0 <= m <= limit for m in payloads):
        raise ValueError(f"payloads must lie within [0, {limit}] kg")
    cells = []
    for m in payloads:
        for v in velocities:
            rng = rng_for_cell(mode, m, v) if rng_for_cell is not None else None
            cells.append(
                run_cot_cell(v, m, mode, params, model, distance, threshold_frac, rng=rng, **cell_kwargs)
            )
    return CotReport(cells)
