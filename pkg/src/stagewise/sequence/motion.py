"""Bidirectional RRT (RRT-Connect) in joint space with shortcut smoothing."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from stagewise import instrument
from stagewise.errors import GoalInCollision, PlanningFailed
from stagewise.sequence.cloud import PointCloud
from stagewise.sequence.collision import CLEARANCE, AttachedHull, config_free
from stagewise.world import robot as rb
from stagewise.world.robot import JointConfig, forward_kinematics

LOW = np.array([rb.THETA_MIN, rb.THETA_MIN, rb.DZ_MIN])
HIGH = np.array([rb.THETA_MAX, rb.THETA_MAX, rb.DZ_MAX])
RESOLUTION = np.array([0.01, 0.01, 0.005])  # rad, rad, m


@dataclass(frozen=True)
class PlannerConfig:
    step: float = 0.05
    shortcut_iters: int = 100
    timeout_s: float = 10.0
    max_samples: int = 200_000
    goal_radius: float = 0.05
    goal_tries: int = 500
    clearance: float = CLEARANCE
    resolution: tuple[float, float, float] = (0.01, 0.01, 0.005)


@dataclass(frozen=True)
class MotionPlanResult:
    waypoints: tuple[JointConfig, ...]
    planning_time: float
    n_samples: int


class _Checker:
    def __init__(self, scene: PointCloud, attached: Optional[AttachedHull], cfg: PlannerConfig, grip: float):
        self.points = scene.points
        self.index = cKDTree(scene.points) if len(scene.points) else None
        self.attached = attached
        self.cfg = cfg
        self.grip = grip
        self.res = np.asarray(cfg.resolution)

    def free(self, x: np.ndarray) -> bool:
        return config_free(JointConfig(x[0], x[1], x[2], self.grip), self.points, self.attached,
                           self.cfg.clearance, self.index)

    def edge_free(self, a: np.ndarray, b: np.ndarray, res_scale: float = 1.0) -> bool:
        n = int(math.ceil(float(np.max(np.abs(b - a) / (self.res * res_scale)))))
        for i in range(1, n + 1):
            if not self.free(a + (b - a) * (i / n)):
                return False
        return True


class _Tree:
    def __init__(self, root: np.ndarray):
        self.nodes = [root]
        self.parent = [-1]
        self._arr = root[None, :].copy()

    def nearest(self, x: np.ndarray) -> int:
        d = np.sum((self._arr - x) ** 2, axis=1)
        return int(np.argmin(d))

    def add(self, x: np.ndarray, parent: int) -> int:
        self.nodes.append(x)
        self.parent.append(parent)
        self._arr = np.vstack([self._arr, x])
        return len(self.nodes) - 1

    def path_to_root(self, i: int) -> list[np.ndarray]:
        out = []
        while i >= 0:
            out.append(self.nodes[i])
            i = self.parent[i]
        return out


def _steer(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    d = b - a
    n = float(np.linalg.norm(d))
    return b.copy() if n <= step else a + d * (step / n)


def _extend(tree: _Tree, x: np.ndarray, chk: _Checker, step: float) -> tuple[str, int]:
    i = tree.nearest(x)
    new = _steer(tree.nodes[i], x, step)
    if not chk.edge_free(tree.nodes[i], new):
        return "trapped", i
    j = tree.add(new, i)
    return ("reached" if np.array_equal(new, x) else "advanced"), j


def _connect(tree: _Tree, x: np.ndarray, chk: _Checker, step: float) -> tuple[str, int]:
    while True:
        status, j = _extend(tree, x, chk, step)
        if status != "advanced":
            return status, j


def _project_goal(goal: np.ndarray, chk: _Checker, rng: np.random.Generator) -> Optional[np.ndarray]:
    """Nearest collision-free configuration found within ``goal_radius`` of ``goal``."""
    r = chk.cfg.goal_radius
    cands = goal + rng.uniform(-r, r, size=(chk.cfg.goal_tries, 3))
    cands = np.clip(cands, LOW, HIGH)
    d = np.linalg.norm(cands - goal, axis=1)
    order = np.argsort(d, kind="stable")
    for i in order:
        if d[i] <= r and chk.free(cands[i]):
            return cands[i]
    return None


def shortcut(path: list[np.ndarray], chk: _Checker, iters: int, rng: np.random.Generator) -> list[np.ndarray]:
    path = list(path)
    for _ in range(iters):
        if len(path) <= 2:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if chk.edge_free(path[i], path[j]):
            path = path[:i + 1] + path[j:]
    return path


def plan_motion(q0: JointConfig, q_target: JointConfig, scene: PointCloud,
                attached: Optional[AttachedHull] = None, seed: int = 0,
                cfg: PlannerConfig = PlannerConfig()) -> MotionPlanResult:
    """Collision-free joint path from ``q0`` to ``q_target`` (or a free configuration near it)."""
    instrument.hit("sequence.plan_motion")
    t0 = time.perf_counter()
    rng = np.random.default_rng([int(seed), 0x5A4])
    chk = _Checker(scene, attached, cfg, q0.grip)
    start = q0.as_array()
    goal = np.clip(q_target.as_array(), LOW, HIGH)

    def result(path: list[np.ndarray], n: int) -> MotionPlanResult:
        wps = tuple(JointConfig(float(p[0]), float(p[1]), float(p[2]), q0.grip) for p in path)
        return MotionPlanResult(wps, time.perf_counter() - t0, n)

    if not chk.free(start):
        raise PlanningFailed("start configuration is in collision")
    if not chk.free(goal):
        goal = _project_goal(goal, chk, rng)
        if goal is None:
            raise GoalInCollision("no collision-free configuration near the target")
    if np.array_equal(start, goal):
        return result([start], 0)
    if chk.edge_free(start, goal):
        return result([start, goal], 0)

    ta, tb = _Tree(start), _Tree(goal)
    a_is_start = True
    n = 0
    while True:
        if n >= cfg.max_samples or time.perf_counter() - t0 > cfg.timeout_s:
            raise PlanningFailed(f"no path after {n} samples")
        n += 1
        x = rng.uniform(LOW, HIGH)
        status, ia = _extend(ta, x, chk, cfg.step)
        if status != "trapped":
            status_b, ib = _connect(tb, ta.nodes[ia], chk, cfg.step)
            if status_b == "reached":
                pa = ta.path_to_root(ia)[::-1]
                pb = tb.path_to_root(ib)[1:]
                # pa runs root(ta) -> meeting node, pb runs the node after it -> root(tb)
                path = pa + pb if a_is_start else pb[::-1] + pa[::-1]
                path = shortcut(path, chk, cfg.shortcut_iters, rng)
                return result(path, n)
        ta, tb = tb, ta
        a_is_start = not a_is_start


def interpolate(path: tuple[JointConfig, ...], resolution=(0.01, 0.01, 0.005)) -> list[JointConfig]:
    """Dense configurations along a waypoint list, endpoints included."""
    if not path:
        return []
    res = np.asarray(resolution)
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        xa, xb = a.as_array(), b.as_array()
        n = max(1, int(math.ceil(float(np.max(np.abs(xb - xa) / res)))))
        for i in range(1, n + 1):
            x = xa + (xb - xa) * (i / n)
            out.append(JointConfig(float(x[0]), float(x[1]), float(x[2]), b.grip))
    return out


def execute_waypoints(result: MotionPlanResult, state, trace: bool = False):
    """Drive the simulator kinematically through the planned waypoints.

    Returns the final state, or ``(final_state, states)`` when ``trace`` is set.
    """
    instrument.hit("sequence.execute_waypoints")
    states = []
    cur = state
    for q in interpolate(result.waypoints):
        cur = _set_config(cur, replace(q, grip=cur.robot.grip))
        if trace:
            states.append(cur)
    return (cur, states) if trace else cur


def _set_config(state, q: JointConfig):
    ee = forward_kinematics(q)
    poses = state.object_poses
    if state.attachment is not None:
        poses = dict(poses)
        o = state.attach_offset
        p = poses[state.attachment]
        poses[state.attachment] = (ee.x + o[0], ee.y + o[1], ee.z + o[2], p[3])
    return replace(state, robot=q, ee=ee, object_poses=poses)
