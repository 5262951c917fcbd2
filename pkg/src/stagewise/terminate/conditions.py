"""Stage termination predicates evaluated on the scene at each learner step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Protocol

import numpy as np

from stagewise import instrument
from stagewise.errors import VocabularyError
from stagewise.world import robot as rb
from stagewise.world.geometry import Prism
from stagewise.world.robot import EEPose
from stagewise.world.tasks import ObjectSpec, object_parts

CONDITIONS = ("grasp", "place", "push", "turn", "open", "close")


@dataclass(frozen=True)
class Thresholds:
    grasp_rise: float = 0.03
    place_radius: float = 0.03
    push_distance: float = 0.10
    turn_angle: float = math.pi / 2
    open_distance: float = 0.08
    open_angle: float = math.pi / 4
    contact: float = 0.003
    width_margin: float = 0.005

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"threshold {k} must be positive")


@dataclass(frozen=True)
class Snapshot:
    """What the stage needs to remember from its first step."""

    object_pose: tuple[float, float, float, float]
    articulation: float = 0.0
    held: Optional[str] = None


@dataclass(frozen=True)
class StageContext:
    condition: str
    region: str
    snapshot: Snapshot
    thresholds: Thresholds = field(default_factory=Thresholds)
    target: Optional[str] = None  # object whose state the stage watches
    direction: tuple[float, float] = (0.0, 1.0)  # push goal direction

    @property
    def watched(self) -> str:
        return self.target or self.region


# --- probes: how the predicates see the world ----------------------------------------

class Probe(Protocol):
    def object_pose(self, label: str) -> tuple[float, float, float, float]: ...
    def region_xy(self, label: str) -> np.ndarray: ...
    def articulation(self, label: str) -> float: ...
    def object_points(self, label: str) -> np.ndarray: ...
    def attached(self) -> Optional[str]: ...
    def gripper(self) -> tuple[EEPose, float]: ...


def owner_of(task, label: str) -> ObjectSpec:
    for o in task.object_set:
        if label in o.labels():
            return o
    raise KeyError(label)


@lru_cache(maxsize=256)
def _surface_samples(part: Prism, spacing: float = 0.002) -> np.ndarray:
    """Points on the side and top surfaces of a prism."""
    zs = np.arange(part.z0, part.z1 + 1e-12, spacing)
    pts = []
    if part.kind in ("cyl", "ring"):
        radii = [part.a] + ([part.b] if part.kind == "ring" else [])
        for r in radii:
            n = max(8, int(2 * math.pi * r / spacing))
            ang = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
            ring = np.stack([part.x + r * np.cos(ang), part.y + r * np.sin(ang)], axis=1)
            pts.append(np.concatenate([np.column_stack([ring, np.full(n, z)]) for z in zs]))
        rr = np.arange(part.b if part.kind == "ring" else 0.0, part.a + 1e-12, spacing)
        for r in rr:
            n = max(1, int(2 * math.pi * r / spacing))
            ang = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
            pts.append(np.column_stack([part.x + r * np.cos(ang), part.y + r * np.sin(ang),
                                        np.full(n, part.z1)]))
    else:
        c, s = math.cos(part.yaw), math.sin(part.yaw)
        us = np.arange(-part.a, part.a + 1e-12, spacing)
        vs = np.arange(-part.b, part.b + 1e-12, spacing)
        edge = [(u, -part.b) for u in us] + [(u, part.b) for u in us] + \
               [(-part.a, v) for v in vs] + [(part.a, v) for v in vs]
        e = np.array(edge)
        exy = np.column_stack([part.x + c * e[:, 0] - s * e[:, 1], part.y + s * e[:, 0] + c * e[:, 1]])
        pts.append(np.concatenate([np.column_stack([exy, np.full(len(e), z)]) for z in zs]))
        gu, gv = np.meshgrid(us, vs)
        gu, gv = gu.ravel(), gv.ravel()
        pts.append(np.column_stack([part.x + c * gu - s * gv, part.y + s * gu + c * gv,
                                    np.full(len(gu), part.z1)]))
    return np.concatenate(pts)


class SimulatorProbe:
    """Reads poses from the simulator state and samples object surfaces analytically."""

    def __init__(self, state):
        self.state = state

    def object_pose(self, label: str):
        return self.state.object_poses[owner_of(self.state.task, label).label]

    def region_xy(self, label: str) -> np.ndarray:
        parts = [p for p in self.state.parts() if p.label == label]
        if not parts:
            parts = self.state.object_parts(owner_of(self.state.task, label).label)
        w = np.array([_area(p) for p in parts])
        c = np.array([(p.x, p.y) for p in parts])
        return (w[:, None] * c).sum(axis=0) / w.sum()

    def articulation(self, label: str) -> float:
        return self.state.articulation_values[owner_of(self.state.task, label).label]

    def object_points(self, label: str) -> np.ndarray:
        o = owner_of(self.state.task, label)
        pose = self.state.object_poses[o.label]
        parts = object_parts(o, (0.0, 0.0, 0.0, pose[3]), self.state.articulation_values.get(o.label, 0.0))
        local = np.concatenate([_surface_samples(p) for p in parts])
        return local + np.array(pose[:3])

    def attached(self) -> Optional[str]:
        return self.state.attachment

    def gripper(self):
        return self.state.ee, self.state.robot.aperture


def _area(p: Prism) -> float:
    if p.kind == "box":
        return 4.0 * p.a * p.b
    if p.kind == "ring":
        return math.pi * (p.a ** 2 - p.b ** 2)
    return math.pi * p.a ** 2


# --- caging ------------------------------------------------------------------------------

def finger_segments(ee: EEPose, aperture: float) -> list[tuple[np.ndarray, np.ndarray]]:
    (lx, ly), (rx, ry) = rb.finger_positions(ee, aperture)
    z0, z1 = ee.z + rb.FINGER_R, ee.z + rb.FINGER_LEN
    return [(np.array([lx, ly, z0]), np.array([lx, ly, z1])),
            (np.array([rx, ry, z0]), np.array([rx, ry, z1]))]


def caging_check(ee: EEPose, aperture: float, object_points: np.ndarray,
                 thresholds: Thresholds = Thresholds()) -> bool:
    """True when both fingers touch the object from opposite sides and the jaw is closed on it."""
    instrument.hit("terminate.caging_check")
    from stagewise.world.geometry import segment_distance

    pts = np.asarray(object_points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return False
    width = float(pts[:, 0].max() - pts[:, 0].min())
    if aperture > width + thresholds.width_margin:
        return False
    (l0, l1), (r0, r1) = finger_segments(ee, aperture)
    dl = segment_distance(pts, l0, l1) - rb.FINGER_R
    dr = segment_distance(pts, r0, r1) - rb.FINGER_R
    # contacts must lie on the inner side of each finger, i.e. in opposite half-spaces
    left = (dl <= thresholds.contact) & (pts[:, 0] >= l0[0]) & (pts[:, 0] < ee.x)
    right = (dr <= thresholds.contact) & (pts[:, 0] <= r0[0]) & (pts[:, 0] > ee.x)
    return bool(left.any() and right.any())


# --- predicates ------------------------------------------------------------------------

def snapshot(state, region: str, target: Optional[str] = None) -> Snapshot:
    """Record the watched object's pose and articulation at stage entry."""
    label = target or region
    o = owner_of(state.task, label)
    return Snapshot(state.object_poses[o.label], state.articulation_values.get(o.label, 0.0),
                    state.attachment)


def make_context(state, condition: str, region: str, thresholds: Thresholds = Thresholds(),
                 direction: tuple[float, float] = (0.0, 1.0)) -> StageContext:
    if condition not in CONDITIONS:
        raise VocabularyError(f"unknown stage condition {condition!r}")
    # a place stage watches whatever the gripper is carrying
    target = state.attachment if condition == "place" else None
    return StageContext(condition, region, snapshot(state, region, target), thresholds, target, direction)


def evaluate_condition(ctx: StageContext, state, probe: Optional[Probe] = None) -> bool:
    """Whether the stage described by ``ctx`` is complete in ``state``."""
    instrument.hit("terminate.evaluate_condition")
    if ctx.condition not in CONDITIONS:
        raise VocabularyError(f"unknown stage condition {ctx.condition!r}")
    if probe is None:
        probe = SimulatorProbe(state)
    th = ctx.thresholds
    cond = ctx.condition
    if cond == "grasp":
        pose = probe.object_pose(ctx.watched)
        if pose[2] - ctx.snapshot.object_pose[2] < th.grasp_rise:
            return False
        ee, aperture = probe.gripper()
        return caging_check(ee, aperture, probe.object_points(ctx.watched), th)
    if cond == "place":
        held = ctx.target or ctx.snapshot.held
        if held is None or probe.attached() is not None:
            return False
        p = probe.object_pose(held)
        c = probe.region_xy(ctx.region)
        return math.hypot(p[0] - c[0], p[1] - c[1]) <= th.place_radius
    if cond == "push":
        p = probe.object_pose(ctx.watched)
        s = ctx.snapshot.object_pose
        dx, dy = ctx.direction
        return (p[0] - s[0]) * dx + (p[1] - s[1]) * dy >= th.push_distance
    delta = probe.articulation(ctx.watched) - ctx.snapshot.articulation
    if cond == "turn":
        return delta >= th.turn_angle
    kind = owner_of(state.task, ctx.watched).articulation
    need = th.open_angle if kind is not None and kind.kind == "hinge" else th.open_distance
    return delta >= need if cond == "open" else -delta >= need
