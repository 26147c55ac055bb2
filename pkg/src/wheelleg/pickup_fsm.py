"""Three-phase box pickup state machine.

The machine works entirely in the robot frame: each tick it receives the
buffered box estimate as seen from the robot, so it needs no world
coordinates.  Phases advance Idle -> I (approach point) -> II (over the
box) -> III (descend) -> Gripping -> StandUp -> Done; any active phase may
end in Aborted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

from .drive_control import BodyTwist, StanceCommand, clipped_twist
from .geometry import Pose2D, rotate
from .perception import BoxObservation, EstimateStatus

DEG = math.pi / 180.0


class Phase(enum.IntEnum):
    IDLE = 0
    PHASE_I_APPROACH = 1
    PHASE_II_OVER_BOX = 2
    PHASE_III_DESCEND = 3
    GRIPPING = 4
    STAND_UP = 5
    DONE = 6
    ABORTED = 7


TERMINAL = (Phase.DONE, Phase.ABORTED)


class AbortReason(enum.Enum):
    STALE_ESTIMATE = "stale_estimate"
    TIMEOUT = "timeout"
    ALIGNMENT_FAIL = "alignment_fail"
    ACTUATOR_FAULT = "actuator_fault"
    CAMERA_FAULT = "camera_fault"


class Alignment(enum.Enum):
    CAPTURED = "captured"
    CAPTURABLE = "capturable"
    MISS = "miss"


class GripOutcome(enum.Enum):
    SUCCESS = "success"
    FAIL = "fail"


MAX_PAYLOAD = 70.0


@dataclass(frozen=True)
class BoxSpec:
    length: float = 0.60
    width: float = 0.40
    height: float = 0.32
    mass: float = 0.0
    max_mass: float = MAX_PAYLOAD

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise ValueError("box dimensions must be positive")
        if not 0 <= self.mass <= self.max_mass:
            raise ValueError(f"box mass must be within [0, {self.max_mass}] kg")


@dataclass(frozen=True)
class PickupConfig:
    approach_distance: float = 1.0
    pos_tol_lengthwise: float = 0.03
    pos_tol_crosswise: float = 0.01
    yaw_tol: float = 3 * DEG
    seated_tol: float = 0.002
    seated_yaw_tol: float = 0.5 * DEG
    descend_height: float = 0.80  # travel height, and where descent starts
    grip_height: float = 0.62
    transport_height: float = 0.80
    timeout_per_phase: float = 30.0
    precision_factor: float = 0.8
    approach_pos_tol: float = 0.05
    approach_yaw_tol: float = 5 * DEG
    approach_speed: float = 0.8
    align_speed: float = 0.3
    pos_gain: float = 1.5
    yaw_gain: float = 1.5
    max_yaw_rate: float = 0.8
    descent_rate: float = 0.05
    standup_rate: float = 0.1
    height_tol: float = 1e-3
    grip_duration: float = 0.5
    descent_stale_limit: float = 10.0
    # the robot must also have come to rest before descending
    settle_speed: float = 0.005
    settle_yaw_rate: float = 0.02

    def __post_init__(self):
        tols = (self.pos_tol_lengthwise, self.pos_tol_crosswise, self.yaw_tol, self.seated_tol, self.seated_yaw_tol)
        if min(tols) <= 0:
            raise ValueError("tolerances must be positive")
        if not self.grip_height < self.descend_height:
            raise ValueError("grip_height must be below descend_height")
        if not 0 < self.precision_factor <= 1:
            raise ValueError("precision_factor must be in (0, 1]")


@dataclass(frozen=True)
class PickupState:
    phase: Phase = Phase.IDLE
    selected_approach: Optional[int] = None
    phase_entry_time: float = 0.0
    abort_reason: Optional[AbortReason] = None
    flipped: bool = False  # robot aligned with the box rotated by pi
    entry_height: Optional[float] = None

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL


def _local_approach(index: int, cfg: PickupConfig, spec: BoxSpec) -> Pose2D:
    a = spec.length / 2.0 + cfg.approach_distance
    b = spec.width / 2.0 + cfg.approach_distance
    x, y, yaw = ((a, 0.0, math.pi), (0.0, b, math.pi), (-a, 0.0, 0.0), (0.0, -b, 0.0))[index]
    return Pose2D(x, y, yaw)


def approach_points(box: Pose2D, cfg: PickupConfig = PickupConfig(), spec: BoxSpec = BoxSpec()) -> list[Pose2D]:
    """Standoff poses outside the +x, +y, -x, -y box sides (indices 0..3).

    Each pose keeps the robot's long axis parallel to the box's: on the
    short sides it faces the box, on the long sides its left flank does.
    """
    return [box.compose(_local_approach(i, cfg, spec)) for i in range(4)]


def select_approach(robot: Pose2D, points) -> int:
    best, best_d = 0, math.inf
    for i, p in enumerate(points):
        d = robot.distance_to(p)
        if d < best_d:
            best, best_d = i, d
    return best


def fold_relative(rel: Pose2D) -> Pose2D:
    """Map a relative pose onto the equivalent one with |yaw| <= pi/2 (the box is symmetric under a half turn)."""
    if abs(rel.yaw) > math.pi / 2:
        return Pose2D(-rel.x, -rel.y, rel.yaw - math.pi)
    return rel


def alignment_ok(relative: Pose2D, cfg: PickupConfig = PickupConfig()) -> Alignment:
    """Classify the robot's hook pose relative to the box (box frame)."""
    r = fold_relative(relative)
    dx, dy, dyaw = abs(r.x), abs(r.y), abs(r.yaw)
    if dx <= cfg.seated_tol and dy <= cfg.seated_tol and dyaw <= cfg.seated_yaw_tol:
        return Alignment.CAPTURED
    if dx <= cfg.pos_tol_lengthwise and dy <= cfg.pos_tol_crosswise and dyaw <= cfg.yaw_tol:
        return Alignment.CAPTURABLE
    return Alignment.MISS


def grip(relative: Pose2D, cfg: PickupConfig = PickupConfig(), box: BoxSpec = BoxSpec()) -> GripOutcome:
    """Close the hook; the slanted guides seat any box inside the capture region."""
    if alignment_ok(relative, cfg) is Alignment.MISS:
        return GripOutcome.FAIL
    return GripOutcome.SUCCESS


def seated_offset(relative: Pose2D) -> Pose2D:
    """Payload pose in the robot frame once the guides have pulled it in."""
    return Pose2D(0.0, 0.0, math.pi if abs(relative.yaw) > math.pi / 2 else 0.0)


def _enter(state: PickupState, phase: Phase, now: float, **kw) -> PickupState:
    return replace(state, phase=phase, phase_entry_time=now, **kw)


def _abort(state: PickupState, reason: AbortReason, now: float) -> PickupState:
    return replace(state, phase=Phase.ABORTED, phase_entry_time=now, abort_reason=reason)


def _yaw_rate(err: float, cfg: PickupConfig) -> float:
    return max(-cfg.max_yaw_rate, min(cfg.max_yaw_rate, cfg.yaw_gain * err))


def _goal(point: Pose2D, flipped: bool) -> Pose2D:
    return Pose2D(point.x, point.y, point.yaw + math.pi) if flipped else point


def _targets(box: Pose2D, state: PickupState, cfg: PickupConfig, spec: BoxSpec) -> tuple[Pose2D, Pose2D]:
    """Approach point and final hook pose, both in the robot frame."""
    point = _goal(box.compose(_local_approach(state.selected_approach, cfg, spec)), state.flipped)
    return point, Pose2D(box.x, box.y, point.yaw)


def fsm_step(
    state: PickupState,
    observation: Optional[BoxObservation],
    robot,
    cfg: PickupConfig = PickupConfig(),
    now: float = 0.0,
    box: BoxSpec = BoxSpec(),
) -> tuple[PickupState, BodyTwist, StanceCommand]:
    """Advance the machine one tick.

    ``observation`` is the buffered box estimate in the robot frame (or
    None before the first detection); ``robot`` supplies body height,
    gripped payload, hook status and fault flags.
    """
    hold = BodyTwist()
    travel = StanceCommand(body_height=cfg.descend_height)
    if state.terminal:
        return state, hold, StanceCommand(body_height=_clamp_height(robot.body_height))

    faults = robot.faults
    if any(f.startswith("actuator") for f in faults):
        return _abort(state, AbortReason.ACTUATOR_FAULT, now), hold, StanceCommand(body_height=_clamp_height(robot.body_height))
    if "camera" in faults and state.phase <= Phase.PHASE_II_OVER_BOX:
        return _abort(state, AbortReason.CAMERA_FAULT, now), hold, travel
    if now - state.phase_entry_time > cfg.timeout_per_phase:
        return _abort(state, AbortReason.TIMEOUT, now), hold, StanceCommand(body_height=_clamp_height(robot.body_height))

    phase = state.phase
    if phase is Phase.IDLE:
        if observation is None or observation.status is not EstimateStatus.FRESH:
            return state, hold, travel
        points = approach_points(observation.pose, cfg, box)
        idx = select_approach(Pose2D(), points)
        flipped = abs(points[idx].yaw) > math.pi / 2
        return _enter(state, Phase.PHASE_I_APPROACH, now, selected_approach=idx, flipped=flipped), hold, travel

    if observation is None:
        return _abort(state, AbortReason.STALE_ESTIMATE, now), hold, travel

    if phase in (Phase.PHASE_I_APPROACH, Phase.PHASE_II_OVER_BOX):
        if observation.status is EstimateStatus.STALE:
            return _abort(state, AbortReason.STALE_ESTIMATE, now), hold, travel
        if observation.status is EstimateStatus.COASTING:
            return state, hold, travel

    target, box_goal = _targets(observation.pose, state, cfg, box)

    if phase is Phase.PHASE_I_APPROACH:
        dist = math.hypot(target.x, target.y)
        if dist <= cfg.approach_pos_tol and abs(target.yaw) <= cfg.approach_yaw_tol:
            return _enter(state, Phase.PHASE_II_OVER_BOX, now), hold, travel
        speed = min(cfg.approach_speed, cfg.pos_gain * dist)
        vx, vy = (target.x / dist * speed, target.y / dist * speed) if dist > 0 else (0.0, 0.0)
        return state, clipped_twist(vx, vy, _yaw_rate(target.yaw, cfg)), travel

    # relative pose of the robot in the (possibly flipped) box frame
    err = box_goal.inverse()

    if phase is Phase.PHASE_II_OVER_BOX:
        k = cfg.precision_factor
        inside = (
            observation.status is EstimateStatus.FRESH
            and abs(err.x) <= k * cfg.pos_tol_lengthwise
            and abs(err.y) <= k * cfg.pos_tol_crosswise
            and abs(err.yaw) <= k * cfg.yaw_tol
        )
        tw = robot.twist
        if inside and tw.speed <= cfg.settle_speed and abs(tw.wz) <= cfg.settle_yaw_rate:
            return _enter(state, Phase.PHASE_III_DESCEND, now, entry_height=robot.body_height), hold, travel
        vx, vy = cfg.pos_gain * box_goal.x, cfg.pos_gain * box_goal.y
        sp = math.hypot(vx, vy)
        if sp > cfg.align_speed:
            vx, vy = vx * cfg.align_speed / sp, vy * cfg.align_speed / sp
        return state, clipped_twist(vx, vy, _yaw_rate(box_goal.yaw, cfg)), travel

    if phase is Phase.PHASE_III_DESCEND:
        if observation.status is EstimateStatus.STALE and observation.age > cfg.descent_stale_limit:
            return _abort(state, AbortReason.STALE_ESTIMATE, now), hold, StanceCommand(body_height=_clamp_height(robot.body_height))
        start = state.entry_height if state.entry_height is not None else cfg.descend_height
        h_cmd = max(cfg.grip_height, start - cfg.descent_rate * (now - state.phase_entry_time))
        stance = StanceCommand(body_height=h_cmd)
        if h_cmd <= cfg.grip_height and robot.body_height <= cfg.grip_height + cfg.height_tol:
            return _enter(state, Phase.GRIPPING, now), hold, stance
        # lengthwise-only correction along the box axis
        vx, vy = rotate(-cfg.pos_gain * err.x, 0.0, box_goal.yaw)
        return state, clipped_twist(vx, vy, 0.0, cfg.align_speed), stance

    grip_stance = StanceCommand(body_height=cfg.grip_height)
    if phase is Phase.GRIPPING:
        if now - state.phase_entry_time < cfg.grip_duration or not robot.hook_closed:
            return state, hold, grip_stance
        if robot.payload is None:
            return _abort(state, AbortReason.ALIGNMENT_FAIL, now), hold, grip_stance
        return _enter(state, Phase.STAND_UP, now), hold, grip_stance

    if phase is Phase.STAND_UP:
        h_cmd = min(cfg.transport_height, cfg.grip_height + cfg.standup_rate * (now - state.phase_entry_time))
        stance = StanceCommand(body_height=h_cmd)
        if h_cmd >= cfg.transport_height and robot.body_height >= cfg.transport_height - cfg.height_tol:
            return _enter(state, Phase.DONE, now), hold, stance
        return state, hold, stance

    raise ValueError(f"unhandled phase {phase!r}")


def _clamp_height(h: float) -> float:
    return min(0.9, max(0.6, h))
