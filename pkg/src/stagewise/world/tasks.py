"""Object and task definitions for the toy tabletop suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from stagewise.errors import NotRegistered, ValidationError
from stagewise.world.geometry import Prism

SHAPES = ("cylinder", "box", "ring", "dial", "drawer", "wall", "bin", "peg")
WORKSPACE = ((0.0, 1.0), (0.0, 1.0), (0.0, 0.4))

BIN_WALL = 0.015
BIN_FLOOR = 0.01
DRAWER_BODY_DEPTH = 0.05
HANDLE_HALF = 0.006
HANDLE_GAP = 0.03


@dataclass(frozen=True)
class Articulation:
    kind: str  # "hinge" | "prismatic"
    axis: tuple[float, float, float]
    low: float
    high: float


@dataclass(frozen=True)
class ObjectSpec:
    """A tabletop object.

    ``pose`` is (x, y, z, yaw) with z the height of the object's base.
    ``extents`` depend on ``shape``:

    - cylinder, peg: (radius, height)
    - box, wall: (size_x, size_y, size_z)
    - ring: (outer radius, inner radius, height)
    - bin: (size_x, size_y, wall height)
    - dial: (knob radius, knob height, lever length)
    - drawer: (size_x, size_y, size_z) of the sliding tray
    """

    label: str
    shape: str
    pose: tuple[float, float, float, float]
    extents: tuple[float, ...]
    graspable: bool = False
    articulation: Optional[Articulation] = None
    handle_label: Optional[str] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValidationError(f"unknown shape {self.shape!r}")
        if not self.extents or any(e <= 0 for e in self.extents):
            raise ValidationError(f"{self.label}: extents must be strictly positive")
        if self.articulation is not None and not self.articulation.low < self.articulation.high:
            raise ValidationError(f"{self.label}: articulation limits must satisfy low < high")

    @property
    def movable(self) -> bool:
        return self.graspable

    @property
    def height(self) -> float:
        e = self.extents
        if self.shape in ("cylinder", "peg"):
            return e[1]
        if self.shape == "ring":
            return e[2]
        if self.shape == "dial":
            return e[1]
        if self.shape == "drawer":
            return e[2] + 0.02
        return e[2]

    def labels(self) -> list[str]:
        out = [self.label]
        if self.handle_label:
            out.append(self.handle_label)
        return out


def object_parts(obj: ObjectSpec, pose, articulation: float = 0.0) -> list[Prism]:
    """Decompose an object at ``pose`` into labelled vertical prisms."""
    x, y, z, yaw = pose
    e = obj.extents
    lab = obj.label
    if obj.shape in ("cylinder", "peg"):
        return [Prism("cyl", x, y, z, z + e[1], e[0], label=lab)]
    if obj.shape in ("box", "wall"):
        return [Prism("box", x, y, z, z + e[2], e[0] / 2, e[1] / 2, yaw, label=lab)]
    if obj.shape == "ring":
        return [Prism("ring", x, y, z, z + e[2], e[0], e[1], label=lab)]
    if obj.shape == "bin":
        sx, sy, h = e
        hx, hy, t = sx / 2, sy / 2, BIN_WALL
        return [
            Prism("box", x, y, z, z + BIN_FLOOR, hx, hy, label=lab),
            Prism("box", x - hx + t / 2, y, z, z + h, t / 2, hy, label=lab),
            Prism("box", x + hx - t / 2, y, z, z + h, t / 2, hy, label=lab),
            Prism("box", x, y - hy + t / 2, z, z + h, hx - t, t / 2, label=lab),
            Prism("box", x, y + hy - t / 2, z, z + h, hx - t, t / 2, label=lab),
        ]
    if obj.shape == "dial":
        r, h, lever = e
        # the lever sticks out radially from the knob's rim
        ang = yaw + articulation
        cx = x + (r + 0.5 * lever) * math.cos(ang)
        cy = y + (r + 0.5 * lever) * math.sin(ang)
        return [
            Prism("cyl", x, y, z, z + h, r, label=lab),
            Prism("box", cx, cy, z + h - 0.03, z + h, 0.5 * lever, HANDLE_HALF, ang,
                  label=obj.handle_label or lab),
        ]
    if obj.shape == "drawer":
        sx, sy, sz = e
        # the tray slides toward -y (toward the robot); the body sits behind it
        ty = y - articulation
        body = Prism("box", x, y + sy / 2 + DRAWER_BODY_DEPTH / 2, z, z + sz + 0.02,
                     sx / 2, DRAWER_BODY_DEPTH / 2, label=lab)
        tray = Prism("box", x, ty, z, z + sz, sx / 2, sy / 2, label=lab)
        # a bar in front of the tray with a finger-sized gap behind it
        handle = Prism("box", x, ty - sy / 2 - HANDLE_GAP - HANDLE_HALF, z + 0.03, z + sz,
                       0.05, HANDLE_HALF, label=obj.handle_label or lab)
        return [body, tray, handle]
    raise ValidationError(obj.shape)


def moving_parts(obj: ObjectSpec, parts: list[Prism]) -> list[Prism]:
    """Parts that move with the articulation (the handle side)."""
    if obj.shape == "dial":
        return parts[1:]
    if obj.shape == "drawer":
        return parts[1:]
    return parts


def centroid(obj: ObjectSpec, pose, articulation: float = 0.0) -> np.ndarray:
    """Geometric reference point used for local features and rewards."""
    x, y, z, _ = pose
    if obj.shape == "bin":
        return np.array([x, y, z + BIN_FLOOR])
    if obj.shape == "dial":
        r, h, lever = obj.extents
        ang = pose[3] + articulation
        reach = r + 0.5 * lever
        return np.array([x + reach * math.cos(ang), y + reach * math.sin(ang), z + h - 0.015])
    if obj.shape == "drawer":
        h = object_parts(obj, pose, articulation)[2]
        return np.array([h.x, h.y, 0.5 * (h.z0 + h.z1)])
    return np.array([x, y, z + 0.5 * obj.height])


# --- success and reward helpers -------------------------------------------------

LIFT_HEIGHT = 0.05
PLACE_RADIUS = 0.03
NUT_RADIUS = 0.015
PUSH_DISTANCE = 0.10
TURN_ANGLE = math.pi / 2
OPEN_DISTANCE = 0.08


@dataclass(frozen=True)
class Goal:
    """One component of a task's success predicate.

    kind: lift | place | nut | push | turn | open
    """

    kind: str
    obj: str
    target: Optional[str] = None
    direction: tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    object_set: tuple[ObjectSpec, ...]
    stage_count: int
    reward_mode: str
    horizon_per_stage: int
    success_predicate: str
    scene_vocabulary: tuple[str, ...]
    task_description: str
    goals: tuple[Goal, ...] = ()
    fixture: str = ""
    reference_plan: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.stage_count < 1:
            raise ValidationError("stage_count must be >= 1")
        if self.reward_mode not in ("dense", "sparse"):
            raise ValidationError(f"reward_mode {self.reward_mode!r}")
        if self.horizon_per_stage < 1:
            raise ValidationError("horizon_per_stage must be >= 1")
        for region, _ in self.reference_plan:
            if region not in self.scene_vocabulary:
                raise ValidationError(f"reference plan region {region!r} not in scene vocabulary")

    def object(self, label: str) -> ObjectSpec:
        for o in self.object_set:
            if o.label == label:
                return o
        raise KeyError(label)

    def with_overrides(self, **kw) -> "TaskSpec":
        from dataclasses import replace
        return replace(self, **kw)


# --- registry ---------------------------------------------------------------------

def _u(rng: Optional[np.random.Generator], lo: float, hi: float) -> float:
    if rng is None:
        return 0.5 * (lo + hi)
    return float(rng.uniform(lo, hi))


def _can(rng, x, y, dx=0.04, dy=0.04):
    return ObjectSpec("can", "cylinder", (_u(rng, x - dx, x + dx), _u(rng, y - dy, y + dy), 0.0, 0.0),
                      (0.03, 0.08), graspable=True)


def _bin(label, rng, x, y, d=0.02):
    return ObjectSpec(label, "bin", (_u(rng, x - d, x + d), _u(rng, y - d, y + d), 0.0, 0.0),
                      (0.12, 0.12, 0.03))


def _lift(rng):
    return [ObjectSpec("red cube", "box", (_u(rng, 0.35, 0.65), _u(rng, 0.3, 0.45), 0.0, 0.0),
                       (0.05, 0.05, 0.05), graspable=True)]


def _pick_place_can(rng):
    return [_can(rng, 0.40, 0.38), _bin("bin 1", rng, 0.62, 0.27)]


def _nut_round(rng):
    return [
        ObjectSpec("silver nut", "ring", (_u(rng, 0.35, 0.45), _u(rng, 0.3, 0.4), 0.0, 0.0),
                   (0.035, 0.015, 0.02), graspable=True),
        ObjectSpec("silver peg", "peg", (_u(rng, 0.62, 0.68), _u(rng, 0.22, 0.3), 0.0, 0.0),
                   (0.008, 0.04)),
    ]


def _can_bread(rng):
    return [
        _can(rng, 0.40, 0.44, 0.02, 0.02),
        _bin("bin 1", rng, 0.635, 0.23, 0.01),
        ObjectSpec("bread slice", "box", (_u(rng, 0.58, 0.62), _u(rng, 0.42, 0.46), 0.0, 0.0),
                   (0.07, 0.05, 0.03), graspable=True),
        _bin("bin 4", rng, 0.365, 0.23, 0.01),
    ]


def _kettle(rng, x=0.45, y=0.3, d=0.03):
    return ObjectSpec("kettle", "box", (_u(rng, x - d, x + d), _u(rng, y - d, y + d), 0.0, 0.0),
                      (0.06, 0.06, 0.08), graspable=True)


def _burner(rng, x=0.45, y=0.3, d=0.03):
    return ObjectSpec("burner", "dial", (_u(rng, x - d, x + d), _u(rng, y - d, y + d), 0.0, 0.0),
                      (0.03, 0.04, 0.07), articulation=Articulation("hinge", (0.0, 0.0, 1.0), 0.0, math.pi),
                      handle_label="burner knob")


def _drawer(rng, x=0.5, y=0.4, d=0.02):
    return ObjectSpec("drawer", "drawer", (_u(rng, x - d, x + d), _u(rng, y - d, y + d), 0.0, 0.0),
                      (0.12, 0.1, 0.06), articulation=Articulation("prismatic", (0.0, -1.0, 0.0), 0.0, 0.12),
                      handle_label="drawer handle")


def _push(rng):
    return [_kettle(rng)]


def _dial_turn(rng):
    return [_burner(rng)]


def _drawer_open(rng):
    return [_drawer(rng)]


def _ms3(rng):
    return [_burner(rng, 0.36, 0.25, 0.02), _kettle(rng, 0.62, 0.24, 0.02), _drawer(rng, 0.47, 0.42, 0.02)]


@dataclass(frozen=True)
class _Entry:
    build: Callable[[np.random.Generator], list]
    stage_count: int
    description: str
    goals: tuple[Goal, ...]
    fixture: str
    reference_plan: tuple[tuple[str, str], ...]
    predicate: str


REGISTRY: dict[str, _Entry] = {
    "Lift": _Entry(_lift, 1, "lift the red cube.", (Goal("lift", "red cube"),), "RS-Lift",
                   (("red cube", "grasp"),), "lift"),
    "PickPlaceCan": _Entry(_pick_place_can, 2, "can goes into bin 1.", (Goal("place", "can", "bin 1"),),
                           "RS-PickPlaceCan", (("can", "grasp"), ("bin 1", "place")), "pick_place"),
    "NutRound": _Entry(_nut_round, 2, "The silver nut goes on the silver peg.",
                       (Goal("nut", "silver nut", "silver peg"),), "RS-NutAssemblyRound",
                       (("silver nut", "grasp"), ("silver peg", "place")), "nut_round"),
    "CanBread": _Entry(_can_bread, 4, "can goes into bin 1, bread slice in bin 4.",
                       (Goal("place", "can", "bin 1"), Goal("place", "bread slice", "bin 4")),
                       "RS-PickPlaceCanBread",
                       (("can", "grasp"), ("bin 1", "place"), ("bread slice", "grasp"), ("bin 4", "place")),
                       "pick_place"),
    "Push": _Entry(_push, 1, "move the kettle forward.", (Goal("push", "kettle"),), "K-Kettle",
                   (("kettle", "push"),), "push"),
    "DialTurn": _Entry(_dial_turn, 1, "rotate the burner knob.", (Goal("turn", "burner"),), "DialTurn",
                       (("burner", "turn"),), "turn"),
    "DrawerOpen": _Entry(_drawer_open, 1, "pull the drawer open.", (Goal("open", "drawer"),), "DrawerOpen",
                         (("drawer handle", "open"),), "open"),
    "MS-3": _Entry(_ms3, 3, "turn the burner, move the kettle forward, then open the drawer.",
                   (Goal("turn", "burner"), Goal("push", "kettle"), Goal("open", "drawer")), "MS-3",
                   (("burner", "turn"), ("kettle", "push"), ("drawer handle", "open")), "multi_stage"),
}


def registered_tasks() -> list[str]:
    return list(REGISTRY)


def _entry(name: str) -> _Entry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise NotRegistered(f"unknown task {name!r}; registered: {', '.join(REGISTRY)}") from None


def build_task(name: str, reward_mode: str = "dense", horizon_per_stage: int = 25) -> TaskSpec:
    """TaskSpec with objects at the centre of their sampling ranges."""
    entry = _entry(name)
    objects = tuple(entry.build(None))
    vocab: list[str] = []
    for o in objects:
        vocab.extend(o.labels())
    return TaskSpec(
        name=name,
        object_set=objects,
        stage_count=entry.stage_count,
        reward_mode=reward_mode,
        horizon_per_stage=horizon_per_stage,
        success_predicate=entry.predicate,
        scene_vocabulary=tuple(vocab),
        task_description=entry.description,
        goals=entry.goals,
        fixture=entry.fixture,
        reference_plan=entry.reference_plan,
    )


def sample_poses(name: str, seed: int) -> dict[str, tuple[float, float, float, float]]:
    """Initial object poses for ``seed``, drawn from the task's sampling ranges."""
    rng = np.random.default_rng([int(seed), 0x5EED])
    return {o.label: o.pose for o in _entry(name).build(rng)}


def sampling_ranges(name: str) -> dict[str, tuple[tuple[float, float], tuple[float, float]]]:
    """xy sampling box per object, recovered from the builder's extremes."""
    lo = {o.label: o.pose for o in _entry(name).build(_Extreme(0.0))}
    hi = {o.label: o.pose for o in _entry(name).build(_Extreme(1.0))}
    return {k: ((lo[k][0], hi[k][0]), (lo[k][1], hi[k][1])) for k in lo}


class _Extreme:
    """Stand-in generator returning one end of every uniform range."""

    def __init__(self, frac: float):
        self.frac = frac

    def uniform(self, lo, hi):
        return lo + self.frac * (hi - lo)
