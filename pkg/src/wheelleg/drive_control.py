"""Rolling controller: stance IK, swerve steering and wheel-speed commands.

Wheel order everywhere is front-left, front-right, rear-left, rear-right.
Body frame: x forward, y left, yaw counter-clockwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import KinematicsError, StanceError, SteeringInfeasibleError
from .geometry import TWO_PI, wrap_angle
from .leg_model import DEG, JointState, LegGeometry, inverse_kinematics

V_MAX = 2.0
MIN_HEIGHT, MAX_HEIGHT = 0.6, 0.9
HOLD_SPEED = 1e-3  # m/s; below this a wheel keeps its steering angle

LEG_NAMES = ("front_left", "front_right", "rear_left", "rear_right")
# +1: leg frame x points forward, -1: backward ("X" layout mirrors front/rear)
LEG_DIRECTION = (1, 1, -1, -1)


@dataclass(frozen=True)
class BodyTwist:
    vx: float = 0.0
    vy: float = 0.0
    wz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.vx, self.vy, self.wz)):
            raise ValueError("twist components must be finite")
        if math.hypot(self.vx, self.vy) > V_MAX + 1e-9:
            raise ValueError(f"planar speed {math.hypot(self.vx, self.vy):.3f} m/s exceeds {V_MAX} m/s")

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


ZERO_TWIST = BodyTwist()


def clipped_twist(vx: float, vy: float, wz: float, v_max: float = V_MAX) -> BodyTwist:
    """BodyTwist with the planar speed scaled down to ``v_max`` if needed."""
    sp = math.hypot(vx, vy)
    if sp > v_max:
        vx, vy = vx * v_max / sp, vy * v_max / sp
    return BodyTwist(vx, vy, wz)


@dataclass(frozen=True)
class WheelMount:
    position: tuple[float, float]
    steer_limits: tuple[float, float] = (-95 * DEG, 95 * DEG)
    steer_axis_offset: float = 0.03

    def __post_init__(self):
        lo, hi = self.steer_limits
        if not (lo < hi and hi - lo < TWO_PI):
            raise ValueError("steer limits must be a non-empty interval shorter than a full turn")
        if self.steer_axis_offset < 0:
            raise ValueError("steer_axis_offset must be non-negative")


DEFAULT_MOUNTS = (
    WheelMount((0.5, 0.3)),
    WheelMount((0.5, -0.3)),
    WheelMount((-0.5, 0.3)),
    WheelMount((-0.5, -0.3)),
)


@dataclass(frozen=True)
class WheelCommand:
    steer_angle: float
    steer_rate: float
    wheel_speed: float  # drive shaft, rad/s


class StiffnessMode(enum.Enum):
    STIFF = "stiff"
    MEDIUM = "medium"
    COMPLIANT = "compliant"


@dataclass(frozen=True)
class Gains:
    p: float  # N·m/rad
    d: float  # N·m·s/rad


DEFAULT_GAINS = {
    StiffnessMode.STIFF: Gains(600.0, 20.0),
    StiffnessMode.MEDIUM: Gains(300.0, 15.0),
    StiffnessMode.COMPLIANT: Gains(100.0, 8.0),
}


def stiffness_gains(mode: StiffnessMode, table=None) -> Gains:
    return (table or DEFAULT_GAINS)[StiffnessMode(mode)]


@dataclass(frozen=True)
class StanceCommand:
    body_height: float = 0.80
    stance_width: float = 0.6
    stance_length: float = 1.0
    stiffness_mode: StiffnessMode = StiffnessMode.MEDIUM


def leg_target(stance: StanceCommand, geom: LegGeometry) -> tuple[float, float]:
    """Foot (axle) target in the leg frame for the requested stance."""
    return (
        stance.stance_length / 2.0 - geom.shoulder_offset[0],
        -(stance.body_height - geom.wheel_radius) - geom.shoulder_offset[1],
    )


def body_ik(stance: StanceCommand, geoms) -> tuple[JointState, ...]:
    """Joint targets for all four legs.

    Raises:
        StanceError: height outside the rolling range, or a foot target that
            a leg cannot reach within its limits (``leg`` names it).
    """
    if not MIN_HEIGHT - 1e-12 <= stance.body_height <= MAX_HEIGHT + 1e-12:
        raise StanceError(f"body height {stance.body_height:.3f} m outside [{MIN_HEIGHT}, {MAX_HEIGHT}]")
    out = []
    for name, geom in zip(LEG_NAMES, geoms):
        try:
            out.append(inverse_kinematics(geom, leg_target(stance, geom)))
        except KinematicsError as exc:
            raise StanceError(f"{name}: {exc}", leg=name) from exc
    return tuple(out)


@dataclass(frozen=True)
class SwerveCandidate:
    """Steering solution for one wheel: ``angle`` driving at ``speed`` (m/s),
    or equivalently ``angle + pi`` at ``-speed``.  ``hold`` marks a wheel at
    rest that should keep its present angle."""

    angle: float
    speed: float
    hold: bool = False

    @property
    def angles(self) -> tuple[float, float]:
        return (self.angle, wrap_angle(self.angle + math.pi))


def swerve_solve(twist: BodyTwist, mounts) -> list[SwerveCandidate]:
    out = []
    for m in mounts:
        rx, ry = m.position
        ux = twist.vx - twist.wz * ry
        uy = twist.vy + twist.wz * rx
        sp = math.hypot(ux, uy)
        if sp < HOLD_SPEED:
            out.append(SwerveCandidate(0.0, 0.0, hold=True))
        else:
            out.append(SwerveCandidate(math.atan2(uy, ux), sp))
    return out


def limit_proximity(angle: float, limits, deadband: float) -> float:
    room = min(angle - limits[0], limits[1] - angle)
    return max(0.0, 1.0 - room / deadband) ** 2


def select_steer_angle(
    candidates,
    current_angle: float,
    limits,
    authority_weight: float = 0.5,
    deadband: float = 30 * DEG,
) -> tuple[float, int]:
    """Pick the steering angle to drive toward.

    ``candidates`` is the pair (angle, angle + pi).  Each is tried at every
    2*pi shift that falls within ``limits``; the cost is the travel from
    ``current_angle`` plus ``authority_weight`` times the limit proximity.
    Returns the chosen angle and +1/-1 for the primary/flipped candidate.
    Ties keep the earlier candidate.
    """
    lo, hi = limits
    best = None
    for sign, c in zip((1, -1), candidates):
        k_lo = math.ceil((lo - c) / TWO_PI)
        k_hi = math.floor((hi - c) / TWO_PI)
        for k in range(k_lo, k_hi + 1):
            a = c + k * TWO_PI
            if not lo <= a <= hi:
                continue
            cost = abs(a - current_angle) + authority_weight * limit_proximity(a, limits, deadband)
            if best is None or cost < best[0]:
                best = (cost, a, sign)
    if best is None:
        raise SteeringInfeasibleError(
            f"no candidate of {[round(c, 4) for c in candidates]} within limits {limits}"
        )
    return best[1], best[2]


def slip_compensation(command: WheelCommand, mount: WheelMount, wheel_radius: float = 0.14) -> float:
    """Wheel speed so the offset contact point rolls instead of scrubbing while steering."""
    return command.wheel_speed + command.steer_rate * mount.steer_axis_offset / wheel_radius


class RollingController:
    """Stateful per-tick controller; owns the current steering angles.

    One control loop writes (``tick``); other readers may inspect ``angles``
    between ticks.
    """

    def __init__(
        self,
        mounts=DEFAULT_MOUNTS,
        wheel_radius: float = 0.14,
        authority_weight: float = 0.5,
        deadband: float = 30 * DEG,
        compensate_slip: bool = True,
        angles=None,
    ):
        self.mounts = tuple(mounts)
        self.wheel_radius = wheel_radius
        self.authority_weight = authority_weight
        self.deadband = deadband
        self.compensate_slip = compensate_slip
        self.angles = list(angles) if angles is not None else [0.0] * len(self.mounts)

    def tick(self, twist: BodyTwist, dt: float) -> list[WheelCommand]:
        cmds = []
        for i, (mount, cand) in enumerate(zip(self.mounts, swerve_solve(twist, self.mounts))):
            current = self.angles[i]
            if cand.hold:
                angle, speed = current, 0.0
            else:
                angle, sign = select_steer_angle(
                    cand.angles, current, mount.steer_limits, self.authority_weight, self.deadband
                )
                speed = sign * cand.speed
            rate = (angle - current) / dt
            wheel_speed = speed / self.wheel_radius
            if self.compensate_slip:
                wheel_speed += rate * mount.steer_axis_offset / self.wheel_radius
            self.angles[i] = angle
            cmds.append(WheelCommand(angle, rate, wheel_speed))
        return cmds


def reconstruct_twist(angles, speeds, mounts) -> tuple[BodyTwist, float]:
    """Least-squares body twist from per-wheel (angle, contact speed m/s).

    Returns the twist and the RMS residual over wheel velocity components.
    """
    us = [(s * math.cos(a), s * math.sin(a)) for a, s in zip(angles, speeds)]
    vx, vy, wz = rigid_fit([m.position for m in mounts], us)
    res = 0.0
    for (rx, ry), (ux, uy) in zip((m.position for m in mounts), us):
        res += (vx - wz * ry - ux) ** 2 + (vy + wz * rx - uy) ** 2
    return BodyTwist(vx, vy, wz), math.sqrt(res / (2 * len(us)))


def rigid_fit(positions, velocities) -> tuple[float, float, float]:
    """Closed-form least squares for (vx, vy, wz) given point velocities."""
    n = len(positions)
    cx = sum(p[0] for p in positions) / n
    cy = sum(p[1] for p in positions) / n
    mx = sum(u[0] for u in velocities) / n
    my = sum(u[1] for u in velocities) / n
    num = den = 0.0
    for (px, py), (ux, uy) in zip(positions, velocities):
        dx, dy = px - cx, py - cy
        num += dx * (uy - my) - dy * (ux - mx)
        den += dx * dx + dy * dy
    wz = num / den if den > 0 else 0.0
    return mx + wz * cy, my - wz * cx, wz
