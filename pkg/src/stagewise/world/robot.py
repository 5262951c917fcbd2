"""SCARA-style arm: two revolute links in a horizontal plane, a prismatic
vertical axis and a parallel-jaw gripper whose fingers stay aligned with
the world x axis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from stagewise.world.geometry import Capsule

BASE_XY = (0.5, -0.1)
L1 = 0.35
L2 = 0.35
ARM_Z = 0.5  # height of the link plane
DZ_MIN, DZ_MAX = 0.0, 0.3
THETA_MIN, THETA_MAX = -math.pi, math.pi
APERTURE_MAX = 0.08

FINGER_LEN = 0.05
FINGER_R = 0.005
PALM_R = 0.008
SHAFT_R = 0.012
LINK_R = 0.03


@dataclass(frozen=True)
class JointConfig:
    theta1: float
    theta2: float
    d_z: float
    grip: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.d_z])

    @classmethod
    def from_array(cls, arr, grip: float = 1.0) -> "JointConfig":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), grip)

    @property
    def aperture(self) -> float:
        return APERTURE_MAX * self.grip

    def within_bounds(self) -> bool:
        return (THETA_MIN <= self.theta1 <= THETA_MAX and THETA_MIN <= self.theta2 <= THETA_MAX
                and DZ_MIN <= self.d_z <= DZ_MAX and 0.0 <= self.grip <= 1.0)


HOME = JointConfig(math.pi / 2, 0.0, 0.25, 1.0)


@dataclass(frozen=True)
class EEPose:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def forward_kinematics(q: JointConfig) -> EEPose:
    a1 = q.theta1
    a12 = q.theta1 + q.theta2
    x = BASE_XY[0] + L1 * math.cos(a1) + L2 * math.cos(a12)
    y = BASE_XY[1] + L1 * math.sin(a1) + L2 * math.sin(a12)
    return EEPose(x, y, q.d_z)


def elbow_xy(theta1: float) -> tuple[float, float]:
    return (BASE_XY[0] + L1 * math.cos(theta1), BASE_XY[1] + L1 * math.sin(theta1))


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi and a > 0 else w


def planar_ik_branches(x: float, y: float, theta1_hint: float = 0.0) -> list[tuple[float, float]]:
    """Both elbow solutions reaching ``(x, y)``; assumes reachability.

    The distance is clamped into the reachable annulus, so callers must
    check reach first when exactness matters.
    """
    dx, dy = x - BASE_XY[0], y - BASE_XY[1]
    r2 = dx * dx + dy * dy
    c2 = (r2 - L1 * L1 - L2 * L2) / (2.0 * L1 * L2)
    c2 = min(1.0, max(-1.0, c2))
    t2 = math.acos(c2)
    out = []
    for s in (1.0, -1.0):
        th2 = s * t2
        if r2 < 1e-24:
            th1 = theta1_hint
        else:
            th1 = math.atan2(dy, dx) - math.atan2(L2 * math.sin(th2), L1 + L2 * math.cos(th2))
        out.append((wrap_angle(th1), wrap_angle(th2)))
    return out


def nearest_branch(x: float, y: float, current: JointConfig) -> tuple[float, float]:
    branches = planar_ik_branches(x, y, current.theta1)

    def dist(b):
        d1 = wrap_angle(b[0] - current.theta1)
        d2 = wrap_angle(b[1] - current.theta2)
        return d1 * d1 + d2 * d2

    # stable ordering: elbow "+" wins exact ties
    return min(branches, key=dist)


def reach_clamp(x: float, y: float) -> tuple[float, float, bool]:
    """Clamp (x, y) into the disk reachable by the arm. Returns (x, y, clamped)."""
    dx, dy = x - BASE_XY[0], y - BASE_XY[1]
    r = math.hypot(dx, dy)
    rmax = L1 + L2
    if r <= rmax:
        return x, y, False
    k = rmax / r
    return BASE_XY[0] + dx * k, BASE_XY[1] + dy * k, True


def finger_positions(ee: EEPose, aperture: float) -> tuple[tuple[float, float], tuple[float, float]]:
    off = 0.5 * aperture + FINGER_R
    return (ee.x - off, ee.y), (ee.x + off, ee.y)


def robot_capsules(q: JointConfig, ee: EEPose | None = None) -> list[Capsule]:
    """Collision/render geometry of the arm at configuration ``q``."""
    if ee is None:
        ee = forward_kinematics(q)
    ex, ey = elbow_xy(q.theta1)
    top = ee.z + FINGER_LEN
    (lx, ly), (rx, ry) = finger_positions(ee, q.aperture)
    return [
        Capsule((BASE_XY[0], BASE_XY[1], ARM_Z), (ex, ey, ARM_Z), LINK_R),
        Capsule((ex, ey, ARM_Z), (ee.x, ee.y, ARM_Z), LINK_R),
        Capsule((ee.x, ee.y, top), (ee.x, ee.y, ARM_Z), SHAFT_R),
        Capsule((lx, ly, top), (rx, ry, top), PALM_R),
        Capsule((lx, ly, ee.z + FINGER_R), (lx, ly, top), FINGER_R),
        Capsule((rx, ry, ee.z + FINGER_R), (rx, ry, top), FINGER_R),
    ]
