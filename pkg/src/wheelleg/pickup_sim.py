"""Closed-loop pickup trials: simulated robot, cameras, odometry and the pickup FSM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from .drive_control import RollingController, StanceCommand
from .geometry import Pose2D
from .leg_model import DEG
from .perception import (
    BoxEstimate,
    FilterParams,
    OdometryState,
    buffered_estimate,
    lowpass_update,
    propagate_odometry,
    simulate_detection,
)
from .pickup_fsm import (
    BoxSpec,
    GripOutcome,
    Phase,
    PickupConfig,
    PickupState,
    fold_relative,
    fsm_step,
    grip,
    seated_offset,
)
from .seeding import substream
from .sim_world import FLAT, RobotModel, initial_state, step

FAULT_PHASES = (Phase.IDLE, Phase.PHASE_I_APPROACH, Phase.PHASE_II_OVER_BOX, Phase.PHASE_III_DESCEND)


@dataclass(frozen=True)
class TrialSettings:
    dt: float = 0.02
    detection_rate: float = 30.0
    noise_std: tuple[float, float, float] = (0.005, 0.005, 0.5 * DEG)
    dropout_p: float = 0.1
    drift_rate: tuple[float, float] = (0.002, 0.1 * DEG)
    standoff_range: tuple[float, float] = (0.5, 3.0)
    fault_rate: float = 0.0
    max_time: float = 150.0
    wheel_lag: float = 0.0


@dataclass(frozen=True)
class Fault:
    kind: str  # "actuator" or "camera"
    phase: Phase
    leg: int = 0

    @property
    def flag(self) -> str:
        return f"actuator:{self.leg}" if self.kind == "actuator" else "camera"


class TraceRow(NamedTuple):
    time: float
    phase: str
    x: float
    y: float
    yaw: float
    body_height: float
    est_x: float  # filtered box pose, odometry frame
    est_y: float
    est_yaw: float
    status: str


@dataclass(frozen=True)
class _Box:
    mass: float


@dataclass
class TrialResult:
    index: int
    seed: int
    start_pose: Pose2D  # robot start in the box frame
    box_yaw: float
    success: bool
    final_phase: Phase
    abort_reason: Optional[str]
    duration: float
    alignment_error: Optional[tuple[float, float, float]]  # at grip: lengthwise, crosswise, yaw
    approach_index: Optional[int]
    fault: Optional[Fault]
    fault_fired: bool
    trace: list = field(default_factory=list)


def draw_start(rng, spec: BoxSpec, standoff_range) -> tuple[float, Pose2D]:
    """Random box yaw and robot start pose, ``standoff`` metres outside the box outline."""
    box_yaw = rng.uniform(-math.pi, math.pi)
    bearing = rng.uniform(-math.pi, math.pi)
    standoff = rng.uniform(*standoff_range)
    robot_yaw = rng.uniform(-math.pi, math.pi)
    c, s = math.cos(bearing), math.sin(bearing)
    hx, hy = spec.length / 2.0, spec.width / 2.0
    edge = min(hx / abs(c) if c else math.inf, hy / abs(s) if s else math.inf)
    r = edge + standoff
    return box_yaw, Pose2D(r * c, r * s, robot_yaw)


def draw_fault(rng, rate: float) -> Optional[Fault]:
    # fixed number of draws so the stream does not depend on ``rate``
    u_fault, u_kind, u_phase, u_leg = rng.random(4)
    if u_fault >= rate:
        return None
    kind = "actuator" if u_kind < 0.5 else "camera"
    return Fault(kind, FAULT_PHASES[int(u_phase * len(FAULT_PHASES))], int(u_leg * 4))


def run_pickup_trial(
    index: int,
    seed: int,
    settings: TrialSettings = TrialSettings(),
    cfg: PickupConfig = PickupConfig(),
    spec: BoxSpec = BoxSpec(),
    model: RobotModel = RobotModel(),
    filter_params: FilterParams = FilterParams(),
    record_trace: bool = False,
) -> TrialResult:
    box_yaw, start_rel = draw_start(substream(seed, "pickup.start", index), spec, settings.standoff_range)
    fault = draw_fault(substream(seed, "pickup.fault", index), settings.fault_rate)
    det_rng = substream(seed, "pickup.detect", index)

    box_true = Pose2D(0.0, 0.0, box_yaw)
    start = box_true.compose(start_rel)
    travel = StanceCommand(body_height=cfg.descend_height)
    robot = initial_state(model, travel, start)
    ctl = RollingController(model.mounts, model.wheel_radius)
    odom = OdometryState(start, settings.drift_rate)
    est = BoxEstimate()
    fsm = PickupState()
    fired = False
    alignment = None
    trace = []

    dt = settings.dt
    last_frame = -1
    n_ticks = int(round(settings.max_time / dt))
    now = 0.0
    for k in range(n_ticks):
        now = k * dt
        if fault is not None and not fired and fsm.phase is fault.phase:
            robot = replace(robot, faults=robot.faults | {fault.flag})
            fired = True
        frame = math.floor(now * settings.detection_rate + 1e-9)
        if frame != last_frame:
            last_frame = frame
            det = simulate_detection(
                box_true, robot.pose, settings.noise_std, settings.dropout_p, det_rng, odom.robot_pose_world, now
            )
            if det is not None and "camera" not in robot.faults:
                est = lowpass_update(est, det, filter_params.alpha, filter_params)
        obs = buffered_estimate(est, odom, now, filter_params) if est.initialized else None

        prev_phase = fsm.phase
        fsm, twist, stance = fsm_step(fsm, obs, robot, cfg, now, spec)
        if fsm.phase is Phase.GRIPPING and prev_phase is not Phase.GRIPPING:
            rel = box_true.relative(robot.pose)
            f = fold_relative(rel)
            alignment = (f.x, f.y, f.yaw)
            if grip(rel, cfg, spec) is GripOutcome.SUCCESS:
                robot = replace(robot, hook_closed=True, payload=_Box(spec.mass), payload_offset=seated_offset(rel))
            else:
                robot = replace(robot, hook_closed=True)
        if record_trace:
            p, f = robot.pose, est.filtered_pose_world
            trace.append(
                TraceRow(
                    now, fsm.phase.name, p.x, p.y, p.yaw, robot.body_height,
                    f.x if f else math.nan, f.y if f else math.nan, f.yaw if f else math.nan,
                    obs.status.value if obs else "none",
                )
            )
        if fsm.terminal:
            break

        cmds = ctl.tick(twist, dt)
        before = robot.pose
        robot = step(robot, cmds, stance, FLAT, dt, model, settings.wheel_lag)
        odom = propagate_odometry(odom, before.relative(robot.pose))

    return TrialResult(
        index=index,
        seed=seed,
        start_pose=start_rel,
        box_yaw=box_yaw,
        success=fsm.phase is Phase.DONE,
        final_phase=fsm.phase,
        abort_reason=fsm.abort_reason.value if fsm.abort_reason else ("time_budget" if not fsm.terminal else None),
        duration=now,
        alignment_error=alignment,
        approach_index=fsm.selected_approach,
        fault=fault,
        fault_fired=fired,
        trace=trace,
    )


def run_pickup_trials(n: int, seed: int, settings: TrialSettings = TrialSettings(), **kwargs) -> list[TrialResult]:
    if n < 0:
        raise ValueError("n must be non-negative")
    return [run_pickup_trial(i, seed, settings, **kwargs) for i in range(n)]


def success_rate(results) -> float:
    return sum(r.success for r in results) / len(results) if results else 0.0
