"""Independent reference implementations used as test oracles.

They deliberately use different formulations (complex numbers, homogeneous
matrices, circle intersections, brute force) from the package code.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


def fk_complex(l1, l2, q1, q2, pivot=0.0):
    p = pivot + l1 * cmath.exp(1j * q1) + l2 * cmath.exp(1j * q2)
    return p.real, p.imag


def ik_circle_intersection(l1, l2, x, z, pivot=0.0):
    """Elbow at the intersection of |e| = l1 and |p - e| = l2, with the lower link rotated counter-clockwise."""
    p = complex(x - pivot, z)
    d = abs(p)
    a = (l1 * l1 - l2 * l2 + d * d) / (2 * d)
    h = math.sqrt(max(l1 * l1 - a * a, 0.0))
    u = p / d
    candidates = [u * a + u * 1j * h, u * a - u * 1j * h]
    best = None
    for e in candidates:
        q1 = cmath.phase(e)
        q2 = cmath.phase(p - e)
        rel = (q2 - q1) % (2 * math.pi)
        # knee-backward branch: lower link sits counter-clockwise of upper link by at most pi
        if rel <= math.pi + 1e-12 and (best is None or rel > best[2]):
            best = (q1, q2, rel)
    return best[0], best[1]


def fd_jacobian(f, q1, q2, h=1e-6):
    cols = []
    for dq in ((h, 0.0), (0.0, h)):
        xp, zp = f(q1 + dq[0], q2 + dq[1])
        xm, zm = f(q1 - dq[0], q2 - dq[1])
        cols.append(((xp - xm) / (2 * h), (zp - zm) / (2 * h)))
    return np.array([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]])


def virtual_work_torques(l1, l2, q1, q2, fx, fz, h=1e-6):
    """tau_i = d(F . p)/dq_i by central differences."""
    def work(a, b):
        x, z = fk_complex(l1, l2, a, b)
        return fx * x + fz * z

    return (
        (work(q1 + h, q2) - work(q1 - h, q2)) / (2 * h),
        (work(q1, q2 + h) - work(q1, q2 - h)) / (2 * h),
    )


def se2(x, y, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def se2_params(m):
    return m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0])


def relative_pose_matrix(a, b):
    """Pose b expressed in frame a via inv(A) @ B."""
    return se2_params(np.linalg.inv(se2(*a)) @ se2(*b))


def contact_velocity_cross(vx, vy, wz, rx, ry):
    v = np.array([vx, vy, 0.0]) + np.cross([0.0, 0.0, wz], [rx, ry, 0.0])
    return v[0], v[1]


def brute_force_steer(candidates, current, limits, weight, deadband):
    """Scan every 2*pi image of both candidates inside the limits."""
    best = None
    for sign, c in zip((1, -1), candidates):
        for k in range(-4, 5):
            a = c + 2 * math.pi * k
            if limits[0] <= a <= limits[1]:
                room = min(a - limits[0], limits[1] - a)
                prox = max(0.0, 1.0 - room / deadband) ** 2
                cost = abs(a - current) + weight * prox
                if best is None or cost < best[0] - 1e-15:
                    best = (cost, a, sign)
    return best


def circular_blend(a, b, alpha):
    """Shortest-arc interpolation using a principal complex power."""
    za, zb = cmath.exp(1j * a), cmath.exp(1j * b)
    return cmath.phase(za * (zb / za) ** alpha)


def cot_formula(power, mass, v, g=9.81):
    return power / (g * mass * v)
