"""Planar kinematics and statics of one coaxially driven parallelogram leg.

Both actuators sit on the shoulder axis, so the parallelogram reduces to an
equivalent two-link chain whose joint angles are *absolute* (measured from
the leg frame's forward axis, z up).  The leg frame has its origin at the
nominal shoulder pivot with x pointing outward along the body (forward for
front legs, backward for rear legs); foot positions are wheel-axle centres.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import JointLimitError, ReachabilityError

DEG = math.pi / 180.0


@dataclass(frozen=True)
class LegGeometry:
    """Link lengths, pivot layout and actuated limits of one leg.

    ``shoulder_offset`` is the (outward, vertical) position of the nominal
    shoulder pivot in the body frame.  ``pivot_offset`` shifts the actuated
    axes along the leg-frame x axis; zero means aligned (coaxial) axes.
    """

    upper_len: float = 0.40
    lower_len: float = 0.35
    shoulder_offset: tuple[float, float] = (0.40, -0.05)
    q1_range: tuple[float, float] = (-170 * DEG, -10 * DEG)
    q2_range: tuple[float, float] = (-170 * DEG, -10 * DEG)
    bump_stop_angles: tuple[float, float] = (-126.6058 * DEG, -14.7138 * DEG)
    wheel_radius: float = 0.14
    pivot_offset: float = 0.0
    min_parallelogram_angle: float = 5 * DEG
    singularity_margin: float = 0.002

    def __post_init__(self):
        if not (self.upper_len > 0 and self.lower_len > 0):
            raise ValueError("link lengths must be positive")
        if not self.wheel_radius > 0:
            raise ValueError("wheel_radius must be positive")
        for name in ("q1_range", "q2_range"):
            lo, hi = getattr(self, name)
            if not (-math.pi < lo < hi <= math.pi):
                raise ValueError(f"{name} must be a non-empty interval within (-pi, pi]")
        b1, b2 = self.bump_stop_angles
        if not (_within(b1, self.q1_range) and _within(b2, self.q2_range)):
            raise ValueError("bump_stop_angles must lie within the joint ranges")
        if self.min_parallelogram_angle < 0 or self.singularity_margin < 0:
            raise ValueError("guards must be non-negative")

    @property
    def reach(self) -> tuple[float, float]:
        """Usable (inner, outer) radii of the annulus after the singularity margin."""
        return (
            abs(self.upper_len - self.lower_len) + self.singularity_margin,
            self.upper_len + self.lower_len - self.singularity_margin,
        )


@dataclass(frozen=True)
class JointState:
    q1: float
    q2: float
    dq1: float = 0.0
    dq2: float = 0.0


@dataclass(frozen=True)
class FootForce:
    fx: float
    fz: float

    def __post_init__(self):
        if not (math.isfinite(self.fx) and math.isfinite(self.fz)):
            raise ValueError("foot force must be finite")

    def scaled(self, k: float) -> FootForce:
        return FootForce(self.fx * k, self.fz * k)


@dataclass(frozen=True)
class RomSpec:
    """Rectangular grid of required foot positions in the leg frame."""

    x_range: tuple[float, float]
    z_range: tuple[float, float]
    resolution: float

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.x_range[1] < self.x_range[0] or self.z_range[1] < self.z_range[0]:
            raise ValueError("RoM ranges must be non-empty")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return _grid_axis(self.x_range, self.resolution), _grid_axis(self.z_range, self.resolution)

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, z) grid, x varying fastest."""
        xs, zs = self.axes()
        gx, gz = np.meshgrid(xs, zs)
        return gx.ravel(), gz.ravel()


@dataclass(frozen=True)
class EllipseRegion:
    """Low-torque region of the operating range (a config value)."""

    center: tuple[float, float] = (0.08, -0.66)
    semi_axes: tuple[float, float] = (0.06, 0.04)

    def contains(self, x, z):
        ux = (np.asarray(x) - self.center[0]) / self.semi_axes[0]
        uz = (np.asarray(z) - self.center[1]) / self.semi_axes[1]
        return ux * ux + uz * uz <= 1.0


class RomVerdict(enum.Enum):
    WITHIN_LIMITS = "reachable-and-within-limits"
    OUTSIDE_LIMITS = "reachable-outside-limits"
    UNREACHABLE = "unreachable"


# status codes used by the vectorised solver
OK, OUT_OF_LIMITS, UNREACHABLE = 0, 1, 2


def _within(q, rng):
    return rng[0] <= q <= rng[1]


def _grid_axis(rng, step):
    n = int(math.floor((rng[1] - rng[0]) / step + 1e-9)) + 1
    return np.round(rng[0] + step * np.arange(n), 12)


def _check_limits(geom: LegGeometry, q1: float, q2: float) -> None:
    if not _within(q1, geom.q1_range):
        raise JointLimitError(f"q1={q1:.6f} rad outside {geom.q1_range}")
    if not _within(q2, geom.q2_range):
        raise JointLimitError(f"q2={q2:.6f} rad outside {geom.q2_range}")
    if abs(q1 - q2) < geom.min_parallelogram_angle:
        raise JointLimitError(
            f"parallelogram angle |q1-q2|={abs(q1 - q2):.6f} rad below guard"
        )


def limits_mask(geom: LegGeometry, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    return (
        (q1 >= geom.q1_range[0])
        & (q1 <= geom.q1_range[1])
        & (q2 >= geom.q2_range[0])
        & (q2 <= geom.q2_range[1])
        & (np.abs(q1 - q2) >= geom.min_parallelogram_angle)
    )


def solve_ik_arrays(geom: LegGeometry, x, z):
    """Knee-backward IK over arrays of targets.

    Returns ``(q1, q2, status)``; ``status`` is OK, OUT_OF_LIMITS or
    UNREACHABLE per target.  Angles of unreachable targets are NaN.  Used by
    the optimizer; :func:`inverse_kinematics` runs the scalar twin.
    """
    l1, l2 = geom.upper_len, geom.lower_len
    x = np.asarray(x, dtype=float) - geom.pivot_offset
    z = np.asarray(z, dtype=float)
    d = np.hypot(x, z)
    inner, outer = geom.reach
    reachable = (d >= inner) & (d <= outer)

    with np.errstate(invalid="ignore", divide="ignore"):
        # half-angle form of the law of cosines stays accurate near full extension
        s, t = l1 + l2, abs(l1 - l2)
        rel = 2.0 * np.arctan2(np.sqrt(np.maximum((s - d) * (s + d), 0.0)), np.sqrt(np.maximum((d - t) * (d + t), 0.0)))
        beta = np.arctan2(l2 * np.sin(rel), l1 + l2 * np.cos(rel))
        q1 = np.arctan2(z, x) - beta
        q1 = np.where(q1 <= -np.pi, q1 + 2 * np.pi, q1)
        q2 = q1 + rel
        q2 = np.where(q2 > np.pi, q2 - 2 * np.pi, q2)

    q1 = np.where(reachable, q1, np.nan)
    q2 = np.where(reachable, q2, np.nan)
    ok = reachable & limits_mask(geom, np.nan_to_num(q1), np.nan_to_num(q2))
    status = np.where(reachable, np.where(ok, OK, OUT_OF_LIMITS), UNREACHABLE)
    return q1, q2, status


def forward_kinematics(geom: LegGeometry, joints: JointState, check_limits: bool = True):
    """Foot (x, z) in the leg frame."""
    if check_limits:
        _check_limits(geom, joints.q1, joints.q2)
    return (
        geom.pivot_offset + geom.upper_len * math.cos(joints.q1) + geom.lower_len * math.cos(joints.q2),
        geom.upper_len * math.sin(joints.q1) + geom.lower_len * math.sin(joints.q2),
    )


def _solve_scalar(geom: LegGeometry, tx: float, tz: float):
    """Scalar twin of :func:`solve_ik_arrays`, same formulas and status codes."""
    l1, l2 = geom.upper_len, geom.lower_len
    x = tx - geom.pivot_offset
    d = math.hypot(x, tz)
    inner, outer = geom.reach
    if not (inner <= d <= outer):
        return math.nan, math.nan, UNREACHABLE
    s, t = l1 + l2, abs(l1 - l2)
    rel = 2.0 * math.atan2(math.sqrt(max((s - d) * (s + d), 0.0)), math.sqrt(max((d - t) * (d + t), 0.0)))
    beta = math.atan2(l2 * math.sin(rel), l1 + l2 * math.cos(rel))
    q1 = math.atan2(tz, x) - beta
    if q1 <= -math.pi:
        q1 += 2 * math.pi
    q2 = q1 + rel
    if q2 > math.pi:
        q2 -= 2 * math.pi
    ok = (
        _within(q1, geom.q1_range)
        and _within(q2, geom.q2_range)
        and abs(q1 - q2) >= geom.min_parallelogram_angle
    )
    return q1, q2, OK if ok else OUT_OF_LIMITS


def inverse_kinematics(geom: LegGeometry, target) -> JointState:
    """Knee-backward joint solution placing the foot at ``target``.

    Raises:
        ReachabilityError: target outside the annulus (including the
            singularity margin).
        JointLimitError: reachable, but the solution violates a limit.
    """
    tx, tz = float(target[0]), float(target[1])
    q1, q2, status = _solve_scalar(geom, tx, tz)
    if status == UNREACHABLE:
        d = math.hypot(tx - geom.pivot_offset, tz)
        lo, hi = geom.reach
        raise ReachabilityError(f"target ({tx:.4f}, {tz:.4f}) at r={d:.4f} m outside [{lo:.4f}, {hi:.4f}]")
    if status == OUT_OF_LIMITS:
        _check_limits(geom, q1, q2)
    return JointState(q1, q2)


def jacobian(geom: LegGeometry, joints: JointState, check_limits: bool = True) -> np.ndarray:
    """d(foot)/d(q1, q2), rows (x, z)."""
    if check_limits:
        _check_limits(geom, joints.q1, joints.q2)
    l1, l2 = geom.upper_len, geom.lower_len
    return np.array(
        [
            [-l1 * math.sin(joints.q1), -l2 * math.sin(joints.q2)],
            [l1 * math.cos(joints.q1), l2 * math.cos(joints.q2)],
        ]
    )


def static_torques(geom: LegGeometry, joints: JointState, force: FootForce, check_limits: bool = True):
    """Actuator torques (N·m) balancing ``force`` at the foot: J^T F."""
    if check_limits:
        _check_limits(geom, joints.q1, joints.q2)
    l1, l2 = geom.upper_len, geom.lower_len
    c1, s1 = math.cos(joints.q1), math.sin(joints.q1)
    c2, s2 = math.cos(joints.q2), math.sin(joints.q2)
    return (
        l1 * (c1 * force.fz - s1 * force.fx),
        l2 * (c2 * force.fz - s2 * force.fx),
    )


def squared_torques_arrays(geom: LegGeometry, q1, q2, fx: float, fz: float) -> np.ndarray:
    """Per-point tau1^2 + tau2^2 for arrays of joint angles."""
    t1 = geom.upper_len * (np.cos(q1) * fz - np.sin(q1) * fx)
    t2 = geom.lower_len * (np.cos(q2) * fz - np.sin(q2) * fx)
    return t1 * t1 + t2 * t2


_VERDICTS = {
    OK: RomVerdict.WITHIN_LIMITS,
    OUT_OF_LIMITS: RomVerdict.OUTSIDE_LIMITS,
    UNREACHABLE: RomVerdict.UNREACHABLE,
}


def in_rom(geom: LegGeometry, target) -> RomVerdict:
    _, _, status = _solve_scalar(geom, float(target[0]), float(target[1]))
    return _VERDICTS[status]


def bump_stop_pose(geom: LegGeometry) -> JointState:
    return JointState(*geom.bump_stop_angles)


def foot_depth_in_body(geom: LegGeometry, joints: JointState) -> float:
    """Vertical foot (axle) position relative to the body frame."""
    return forward_kinematics(geom, joints, check_limits=False)[1] + geom.shoulder_offset[1]


def with_lengths(geom: LegGeometry, upper_len: float, lower_len: float, pivot_offset: float = 0.0) -> LegGeometry:
    return replace(geom, upper_len=upper_len, lower_len=lower_len, pivot_offset=pivot_offset)


DEFAULT_ROM = RomSpec(x_range=(-0.04, 0.14), z_range=(-0.71, -0.41), resolution=0.01)
