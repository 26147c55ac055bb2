"""Synthetic box detections, world-frame low-pass filter and odometry fallback.

"World" here is the odometry frame: detections are expressed through the
robot's odometry pose, so a drifting odometry shifts detections and the
buffered estimate consistently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import NoEstimateError
from .geometry import Pose2D, angle_diff, wrap_angle

DEG = math.pi / 180.0


@dataclass(frozen=True)
class Detection:
    box_pose_world: Pose2D
    timestamp: float
    source_camera: int


class EstimateStatus(enum.Enum):
    FRESH = "fresh"
    COASTING = "coasting"
    STALE = "stale"


@dataclass(frozen=True)
class FilterParams:
    alpha: float = 0.3
    gate_distance: float = 0.25
    gate_yaw: float = 30 * DEG
    reanchor_after: int = 15  # consecutive rejections before trusting detections again
    t_fresh: float = 0.5
    t_stale: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0 < self.t_fresh < self.t_stale:
            raise ValueError("need 0 < t_fresh < t_stale")


@dataclass(frozen=True)
class BoxEstimate:
    filtered_pose_world: Optional[Pose2D] = None
    last_update: float = -math.inf
    age: float = math.inf
    status: EstimateStatus = EstimateStatus.STALE
    rejected: int = 0
    consecutive_rejected: int = 0

    @property
    def initialized(self) -> bool:
        return self.filtered_pose_world is not None


def classify_age(age: float, params: FilterParams = FilterParams()) -> EstimateStatus:
    if age < params.t_fresh:
        return EstimateStatus.FRESH
    if age < params.t_stale:
        return EstimateStatus.COASTING
    return EstimateStatus.STALE


@dataclass(frozen=True)
class CameraModel:
    """Range/bearing footprints: camera 0 looks down, 1-4 look out front/left/back/right."""

    downward_range: float = 1.5
    outward_range: float = 4.0
    outward_half_fov: float = 50 * DEG

    def camera_for(self, rel: Pose2D) -> Optional[int]:
        r = math.hypot(rel.x, rel.y)
        if r <= self.downward_range:
            return 0
        if r > self.outward_range:
            return None
        bearing = math.atan2(rel.y, rel.x)
        for cam, center in enumerate((0.0, math.pi / 2, math.pi, -math.pi / 2), start=1):
            if abs(angle_diff(bearing, center)) <= self.outward_half_fov:
                return cam
        return None


@dataclass(frozen=True)
class OdometryState:
    robot_pose_world: Pose2D
    drift_rate: tuple[float, float] = (0.0, 0.0)  # (m per m, rad per m)

    def __post_init__(self):
        if self.drift_rate[0] < 0 or self.drift_rate[1] < 0:
            raise ValueError("drift rates must be non-negative")


def propagate_odometry(odom: OdometryState, true_delta: Pose2D) -> OdometryState:
    """Apply one body-frame motion increment with systematic scale and yaw drift."""
    d_pos, d_yaw = odom.drift_rate
    ds = math.hypot(true_delta.x, true_delta.y)
    measured = Pose2D(
        true_delta.x * (1.0 + d_pos),
        true_delta.y * (1.0 + d_pos),
        true_delta.yaw + d_yaw * ds,
    )
    return replace(odom, robot_pose_world=odom.robot_pose_world.compose(measured))


def simulate_detection(
    true_box: Pose2D,
    robot: Pose2D,
    noise_std,
    dropout_p: float,
    rng: np.random.Generator,
    odom_pose: Optional[Pose2D] = None,
    timestamp: float = 0.0,
    cameras: CameraModel = CameraModel(),
) -> Optional[Detection]:
    """One noisy detection of ``true_box`` seen from the true ``robot`` pose.

    The relative measurement is mapped to the world through ``odom_pose``
    (defaults to the true pose).  The stream draws the same random numbers
    whether or not a detection is emitted.
    """
    if not 0.0 <= dropout_p <= 1.0:
        raise ValueError("dropout_p must be within [0, 1]")
    u = rng.random()
    n = rng.standard_normal(3)
    rel = robot.relative(true_box)
    cam = cameras.camera_for(rel)
    if cam is None or u < dropout_p:
        return None
    sx, sy, syaw = noise_std
    noisy = Pose2D(rel.x + sx * n[0], rel.y + sy * n[1], rel.yaw + syaw * n[2])
    anchor = robot if odom_pose is None else odom_pose
    return Detection(anchor.compose(noisy), timestamp, cam)


def lowpass_update(est: BoxEstimate, det: Detection, alpha: float, params: FilterParams = FilterParams()) -> BoxEstimate:
    """Exponential filter on x, y and (shortest-arc) yaw, with an outlier gate."""
    if not est.initialized:
        return BoxEstimate(det.box_pose_world, det.timestamp, 0.0, EstimateStatus.FRESH, est.rejected, 0)
    if det.timestamp <= est.last_update:
        raise ValueError("detection is not newer than the estimate")
    p, d = est.filtered_pose_world, det.box_pose_world
    dyaw = angle_diff(d.yaw, p.yaw)
    jump = math.hypot(d.x - p.x, d.y - p.y) > params.gate_distance or abs(dyaw) > params.gate_yaw
    if jump and est.consecutive_rejected + 1 < params.reanchor_after:
        return replace(est, rejected=est.rejected + 1, consecutive_rejected=est.consecutive_rejected + 1)
    if jump:
        # persistent disagreement: the box (or our anchor) really moved
        return BoxEstimate(d, det.timestamp, 0.0, EstimateStatus.FRESH, est.rejected + 1, 0)
    filtered = Pose2D(
        p.x + alpha * (d.x - p.x),
        p.y + alpha * (d.y - p.y),
        wrap_angle(p.yaw + alpha * dyaw),
    )
    return BoxEstimate(filtered, det.timestamp, 0.0, EstimateStatus.FRESH, est.rejected, 0)


class BoxObservation(NamedTuple):
    pose: Pose2D  # box in the robot frame
    status: EstimateStatus
    age: float


def buffered_estimate(
    est: BoxEstimate, odom: OdometryState, now: float, params: FilterParams = FilterParams()
) -> BoxObservation:
    """Stored world-frame box estimate seen from the current odometry pose."""
    if not est.initialized:
        raise NoEstimateError("no box detection has been buffered yet")
    age = now - est.last_update
    if age < 0:
        raise ValueError("estimate is newer than 'now'")
    return BoxObservation(
        odom.robot_pose_world.relative(est.filtered_pose_world), classify_age(age, params), age
    )


def ewma_steady_variance(sigma: float, alpha: float) -> float:
    """Steady-state variance of a first-order EWMA driven by white noise."""
    return sigma * sigma * alpha / (2.0 - alpha)
