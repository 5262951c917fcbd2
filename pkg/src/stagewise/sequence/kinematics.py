"""Closed-form inverse kinematics for the SCARA arm."""

from __future__ import annotations

import math

import numpy as np

from stagewise import instrument
from stagewise.errors import Unreachable
from stagewise.world import robot as rb
from stagewise.world.robot import HOME, JointConfig, forward_kinematics

REACH_TOL = 1e-12


def inverse_kinematics(ee_target, current: JointConfig = HOME) -> JointConfig:
    """Joint configuration placing the end effector at ``ee_target``.

    Of the two elbow branches the one nearest ``current`` is returned; the
    gripper opening is carried over from ``current``.
    """
    instrument.hit("sequence.inverse_kinematics")
    x, y, z = (float(v) for v in ee_target)
    r = math.hypot(x - rb.BASE_XY[0], y - rb.BASE_XY[1])
    rmax = rb.L1 + rb.L2
    rmin = abs(rb.L1 - rb.L2)
    if r > rmax + REACH_TOL or r < rmin - REACH_TOL or not rb.DZ_MIN <= z <= rb.DZ_MAX:
        cx, cy, _ = rb.reach_clamp(x, y)
        raise Unreachable(f"target ({x:.4f}, {y:.4f}, {z:.4f}) is outside the workspace",
                          (cx, cy, min(rb.DZ_MAX, max(rb.DZ_MIN, z))))
    th1, th2 = rb.nearest_branch(x, y, current)
    return JointConfig(th1, th2, z, current.grip)


def ik_error(q: JointConfig, target) -> float:
    return float(np.linalg.norm(forward_kinematics(q).as_array() - np.asarray(target, dtype=float)))
