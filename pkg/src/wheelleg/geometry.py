"""Planar SE(2) poses and angle helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < angle <= math.pi:
        return angle
    a = math.remainder(angle, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def angle_diff(a: float, b: float) -> float:
    """Signed shortest rotation taking ``b`` onto ``a``."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def compose(self, other: Pose2D) -> Pose2D:
        """``self * other``: express ``other`` (given in self's frame) in the parent frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )

    def inverse(self) -> Pose2D:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2D(-c * self.x - s * self.y, s * self.x - c * self.y, -self.yaw)

    def relative(self, other: Pose2D) -> Pose2D:
        """Pose of ``other`` expressed in this pose's frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx, dy = other.x - self.x, other.y - self.y
        return Pose2D(c * dx + s * dy, -s * dx + c * dy, other.yaw - self.yaw)

    def transform_point(self, px: float, py: float) -> tuple[float, float]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return self.x + c * px - s * py, self.y + s * px + c * py

    def distance_to(self, other: Pose2D) -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


def rotate(vx: float, vy: float, angle: float) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    return c * vx - s * vy, s * vx + c * vy
