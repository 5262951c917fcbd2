"""Deterministic kinematic tabletop simulator.

The world is kinematic: the end effector moves by the commanded delta
(resolved through the closed-form arm IK), fingers push movable objects
and articulation handles, fixed geometry blocks motion, and a grasp is a
rigid attachment created when the closing fingers cage an object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from stagewise.world import robot as rb
from stagewise.world.geometry import Prism, footprints_overlap, z_overlap
from stagewise.world.robot import EEPose, JointConfig, forward_kinematics
from stagewise.world.tasks import (
    BIN_FLOOR,
    LIFT_HEIGHT,
    NUT_RADIUS,
    OPEN_DISTANCE,
    PLACE_RADIUS,
    PUSH_DISTANCE,
    TURN_ANGLE,
    Goal,
    ObjectSpec,
    TaskSpec,
    build_task,
    centroid,
    object_parts,
    sample_poses,
)

MAX_DELTA = 0.02
GRIP_RATE = 0.04  # aperture change per step at |grip_cmd| = 1
RELEASE_MARGIN = 0.005
LOCAL_RADIUS = 0.15
K_LOCAL = 4
LOCAL_DIM = 3 * K_LOCAL + 3

Pose = tuple[float, float, float, float]


@dataclass(frozen=True)
class Action:
    d_ee: tuple[float, float, float]
    grip_cmd: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Action":
        a = np.asarray(a, dtype=float)
        return cls((float(a[0]), float(a[1]), float(a[2])), float(a[3]))

    @classmethod
    def from_normalized(cls, a) -> "Action":
        """Map a policy output in [-1, 1]^4 onto the action bounds."""
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        return cls(tuple(float(v) * MAX_DELTA for v in a[:3]), float(a[3]))

    def clipped(self) -> "Action":
        d = tuple(float(np.clip(v, -MAX_DELTA, MAX_DELTA)) if math.isfinite(v) else 0.0 for v in self.d_ee)
        g = float(np.clip(self.grip_cmd, -1.0, 1.0)) if math.isfinite(self.grip_cmd) else 0.0
        return Action(d, g)


ZERO_ACTION = Action((0.0, 0.0, 0.0), 0.0)


@dataclass(frozen=True)
class WorldState:
    task: TaskSpec
    robot: JointConfig
    ee: EEPose
    object_poses: dict[str, Pose]
    articulation_values: dict[str, float]
    attachment: Optional[str] = None
    attach_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    grip_target: float = rb.APERTURE_MAX
    step_index: int = 0
    seed: int = 0
    initial_poses: dict[str, Pose] = field(default_factory=dict)

    def parts(self, exclude: Optional[str] = None) -> list[Prism]:
        out = []
        for o in self.task.object_set:
            if o.label == exclude:
                continue
            out.extend(object_parts(o, self.object_poses[o.label], self.articulation_values.get(o.label, 0.0)))
        return out

    def object_parts(self, label: str) -> list[Prism]:
        o = self.task.object(label)
        return object_parts(o, self.object_poses[label], self.articulation_values.get(label, 0.0))

    def centroid(self, label: str) -> np.ndarray:
        o = self.task.object(label)
        return centroid(o, self.object_poses[label], self.articulation_values.get(label, 0.0))


# --- construction -----------------------------------------------------------------

def home_state(task: TaskSpec, seed: int) -> WorldState:
    poses = sample_poses(task.name, seed)
    arts = {o.label: o.articulation.low for o in task.object_set if o.articulation is not None}
    q = rb.HOME
    return WorldState(task=task, robot=q, ee=forward_kinematics(q), object_poses=poses,
                      articulation_values=arts, grip_target=q.aperture, seed=int(seed),
                      initial_poses=dict(poses))


def create_task(name: str, seed: int, reward_mode: str = "dense",
                horizon_per_stage: int = 25) -> tuple[TaskSpec, WorldState]:
    task = build_task(name, reward_mode=reward_mode, horizon_per_stage=horizon_per_stage)
    return task, home_state(task, seed)


# --- gripper geometry --------------------------------------------------------------

def gripper_prisms(ee: EEPose, aperture: float) -> tuple[list[Prism], Prism]:
    """Finger prisms and the hand prism (palm + shaft) used for contact."""
    (lx, ly), (rx, ry) = rb.finger_positions(ee, aperture)
    top = ee.z + rb.FINGER_LEN
    fingers = [Prism("cyl", lx, ly, ee.z, top, rb.FINGER_R, label="robot"),
               Prism("cyl", rx, ry, ee.z, top, rb.FINGER_R, label="robot")]
    hand = Prism("box", ee.x, ee.y, top - rb.PALM_R, rb.ARM_Z,
                 0.5 * aperture + 2 * rb.FINGER_R, rb.SHAFT_R, label="robot")
    return fingers, hand


def held_parts(state: WorldState, ee: EEPose) -> list[Prism]:
    if state.attachment is None:
        return []
    ox, oy, oz = state.attach_offset
    o = state.task.object(state.attachment)
    pose = state.object_poses[o.label]
    return object_parts(o, (ee.x + ox, ee.y + oy, ee.z + oz, pose[3]))


def grasp_width(part: Prism, dy: float) -> Optional[float]:
    """Finger gap at contact when closing on ``part`` offset ``dy`` across the jaw."""
    rf = rb.FINGER_R
    if part.kind in ("cyl", "ring"):
        reach = part.a + rf
        if abs(dy) >= reach:
            return None
        return 2.0 * (math.sqrt(reach * reach - dy * dy) - rf)
    if abs(dy) >= part.half_width_y + rf:
        return None
    return 2.0 * part.half_width_x


def rest_height(state: WorldState, label: str, pose: Pose, poses: dict[str, Pose]) -> float:
    """Height at which a released object comes to rest under gravity."""
    o = state.task.object(label)
    mine = object_parts(o, (pose[0], pose[1], 0.0, pose[3]))
    top = 0.0
    for other in state.task.object_set:
        if other.label == label:
            continue
        for p in object_parts(other, poses[other.label], state.articulation_values.get(other.label, 0.0)):
            if p.z1 > pose[2] + 1e-9:
                continue
            if any(footprints_overlap(m, p) for m in mine):
                top = max(top, p.z1)
    return top


# --- dynamics ----------------------------------------------------------------------

def _blocked(parts: list[Prism], robot_parts: list[Prism]) -> list[Prism]:
    hits = []
    for p in parts:
        for g in robot_parts:
            if z_overlap(p, g.z0, g.z1) and footprints_overlap(p, g):
                hits.append(p)
                break
    return hits


def _owner(state: WorldState, part: Prism) -> ObjectSpec:
    for o in state.task.object_set:
        if part.label in o.labels():
            return o
    raise KeyError(part.label)


def _horizontal(state: WorldState, ee: EEPose, aperture: float, dx: float, dy: float,
                poses: dict[str, Pose], arts: dict[str, float]) -> tuple[float, float]:
    """Resolve an xy move against the scene; mutates poses/arts for pushes."""
    if dx == 0.0 and dy == 0.0:
        return 0.0, 0.0
    moved = EEPose(ee.x + dx, ee.y + dy, ee.z)
    fingers, hand = gripper_prisms(moved, aperture)
    robot_parts = fingers + [hand] + held_parts(state, moved)
    scene = [p for o in state.task.object_set if o.label != state.attachment
             for p in object_parts(o, poses[o.label], arts.get(o.label, 0.0))]
    hits = _blocked(scene, robot_parts)
    if not hits:
        return dx, dy
    new_poses = dict(poses)
    new_arts = dict(arts)
    for part in hits:
        o = _owner(state, part)
        if o.movable:
            x, y, z, yaw = new_poses[o.label]
            if (x, y, z, yaw) != poses[o.label]:
                continue
            new_poses[o.label] = (x + dx, y + dy, z, yaw)
        elif o.articulation is not None and part.label == (o.handle_label or o.label) and part.label != o.label:
            lo, hi = o.articulation.low, o.articulation.high
            cur = new_arts[o.label]
            if o.articulation.kind == "prismatic":
                ax = o.articulation.axis
                delta = dx * ax[0] + dy * ax[1]
            else:
                px, py = o.pose[0], o.pose[1]
                cx, cy = poses[o.label][0], poses[o.label][1]
                # contact point: nearest finger to the lever
                fx, fy = min(((f.x, f.y) for f in fingers),
                             key=lambda f: (f[0] - part.x) ** 2 + (f[1] - part.y) ** 2)
                rx, ry = fx - dx - cx, fy - dy - cy
                r2 = rx * rx + ry * ry
                delta = (rx * dy - ry * dx) / r2 if r2 > 1e-8 else 0.0
            nxt = min(hi, max(lo, cur + delta))
            if abs(nxt - (cur + delta)) > 1e-12:
                return 0.0, 0.0
            new_arts[o.label] = nxt
        else:
            return 0.0, 0.0
    # pushed things must not end up inside fixed geometry
    for label, pose in new_poses.items():
        if pose == poses[label]:
            continue
        o = state.task.object(label)
        mine = object_parts(o, pose)
        others = [p for other in state.task.object_set if other.label not in (label, state.attachment)
                  for p in object_parts(other, new_poses[other.label], new_arts.get(other.label, 0.0))]
        if _blocked(others, mine):
            return 0.0, 0.0
        x, y, _, _ = pose
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            return 0.0, 0.0
    poses.update(new_poses)
    arts.update(new_arts)
    return dx, dy


def _floor(state: WorldState, ee_xy: tuple[float, float], z: float, aperture: float,
           poses: dict[str, Pose], arts: dict[str, float]) -> float:
    """Lowest reachable end-effector height at ``ee_xy`` coming down from ``z``."""
    probe = EEPose(ee_xy[0], ee_xy[1], z)
    fingers, hand = gripper_prisms(probe, aperture)
    held = held_parts(state, probe)
    floor = rb.DZ_MIN
    palm_drop = rb.FINGER_LEN - rb.PALM_R
    for o in state.task.object_set:
        if o.label == state.attachment:
            continue
        for p in object_parts(o, poses[o.label], arts.get(o.label, 0.0)):
            if p.z1 > z + rb.FINGER_LEN + 1e-9:
                continue  # taller than the fingers: handled by horizontal blocking
            if any(footprints_overlap(p, f) for f in fingers):
                floor = max(floor, p.z1)
            if footprints_overlap(p, hand):
                floor = max(floor, p.z1 - palm_drop)
            for h in held:
                if footprints_overlap(p, h):
                    floor = max(floor, p.z1 - (h.z0 - z))
    return floor


def step(state: WorldState, action: Action) -> tuple[WorldState, np.ndarray, float, bool]:
    """Advance one control step.

    Returns ``(next_state, local_observation, reward, done)`` where done is
    the task success flag; stage budgets are enforced by the caller.
    """
    nxt = transition(state, action)
    reward = task_reward(state, action, nxt, state.task)
    return nxt, local_features(nxt), reward, is_success(nxt, nxt.task)


def transition(state: WorldState, action: Action) -> WorldState:
    a = action.clipped()
    dx, dy, dz = a.d_ee
    ee = state.ee
    aperture = state.robot.aperture
    poses = dict(state.object_poses)
    arts = dict(state.articulation_values)

    # xy: reach limit first, then contacts
    tx, ty, _ = rb.reach_clamp(ee.x + dx, ee.y + dy)
    mx, my = _horizontal(state, ee, aperture, tx - ee.x, ty - ee.y, poses, arts)
    nx, ny = ee.x + mx, ee.y + my

    # z: joint limits and resting contacts
    tz = min(rb.DZ_MAX, max(rb.DZ_MIN, ee.z + dz))
    if tz < ee.z:
        tz = max(tz, min(ee.z, _floor(state, (nx, ny), ee.z, aperture, poses, arts)))

    if mx == 0.0 and my == 0.0:
        th1, th2 = state.robot.theta1, state.robot.theta2  # re-solving IK near a singularity drifts
    else:
        th1, th2 = rb.nearest_branch(nx, ny, state.robot)
    q = JointConfig(th1, th2, tz, state.robot.grip)
    new_ee = forward_kinematics(q) if (mx or my or tz != ee.z) else ee

    attachment = state.attachment
    offset = state.attach_offset
    if attachment is not None:
        p = poses[attachment]
        poses[attachment] = (new_ee.x + offset[0], new_ee.y + offset[1], new_ee.z + offset[2], p[3])

    # gripper
    target = min(rb.APERTURE_MAX, max(0.0, state.grip_target + GRIP_RATE * a.grip_cmd))
    new_aperture = aperture
    if attachment is not None:
        if target > aperture + RELEASE_MARGIN:
            released = attachment
            attachment = None
            offset = (0.0, 0.0, 0.0)
            new_aperture = target
            p = poses[released]
            z = rest_height(state, released, p, poses)
            poses[released] = (p[0], p[1], z, p[3])
    elif target < aperture:
        new_aperture = target
        caught = _closing_contact(state, new_ee, aperture, target, poses)
        if caught is not None:
            label, width = caught
            new_aperture = width
            p = poses[label]
            poses[label] = (new_ee.x, p[1], p[2], p[3])
            attachment = label
            offset = (0.0, p[1] - new_ee.y, p[2] - new_ee.z)
    else:
        new_aperture = target

    q = replace(q, grip=new_aperture / rb.APERTURE_MAX)
    return replace(state, robot=q, ee=new_ee, object_poses=poses, articulation_values=arts,
                   attachment=attachment, attach_offset=offset, grip_target=target,
                   step_index=state.step_index + 1)


def _closing_contact(state: WorldState, ee: EEPose, aperture: float, target: float,
                     poses: dict[str, Pose]) -> Optional[tuple[str, float]]:
    """Object caught between fingers closing from ``aperture`` toward ``target``."""
    z0, z1 = ee.z, ee.z + rb.FINGER_LEN
    half_open = 0.5 * aperture
    best = None
    for o in sorted(state.task.object_set, key=lambda o: o.label):
        if not o.graspable:
            continue
        for part in object_parts(o, poses[o.label]):
            if not z_overlap(part, z0, z1):
                continue
            width = grasp_width(part, part.y - ee.y)
            if width is None:
                continue
            # the object's jaw-axis extent must sit inside the open fingers
            if abs(part.x - ee.x) + 0.5 * width > half_open + 1e-9:
                continue
            if target <= width and (best is None or width > best[1]):
                best = (o.label, width)
    return best


# --- observations -------------------------------------------------------------------

def local_features(state: WorldState) -> np.ndarray:
    """Gripper-centred features: nearest object offsets, aperture, attachment, ee z."""
    ee = state.ee.as_array()
    near = []
    for o in state.task.object_set:
        if o.label == state.attachment:
            continue
        c = state.centroid(o.label)
        rel = c - ee
        dist = float(np.linalg.norm(rel))
        if dist <= LOCAL_RADIUS:
            near.append((dist, o.label, rel))
    near.sort(key=lambda t: (round(t[0], 9), t[1]))  # distances equal to 1e-9 count as ties
    out = np.zeros(LOCAL_DIM)
    for i, (_, _, rel) in enumerate(near[:K_LOCAL]):
        out[3 * i:3 * i + 3] = rel
    out[3 * K_LOCAL] = state.robot.aperture
    out[3 * K_LOCAL + 1] = 1.0 if state.attachment is not None else 0.0
    out[3 * K_LOCAL + 2] = state.ee.z
    return out


def local_scale() -> np.ndarray:
    """Per-feature input scaling for the learner."""
    s = np.full(LOCAL_DIM, 1.0 / LOCAL_RADIUS)
    s[3 * K_LOCAL] = 1.0 / rb.APERTURE_MAX
    s[3 * K_LOCAL + 1] = 1.0
    s[3 * K_LOCAL + 2] = 1.0 / rb.DZ_MAX
    return s


def global_features(state: WorldState) -> np.ndarray:
    """Absolute robot and object state for the end-to-end baseline."""
    vals = list(state.ee.as_array()) + [state.robot.aperture, 1.0 if state.attachment else 0.0]
    for o in state.task.object_set:
        vals.extend(state.centroid(o.label))
    return np.array(vals)


def global_scale(task: TaskSpec) -> np.ndarray:
    n = 5 + 3 * len(task.object_set)
    s = np.full(n, 2.0)
    s[3] = 1.0 / rb.APERTURE_MAX
    s[4] = 1.0
    return s


# --- success and reward -----------------------------------------------------------

def _goal_point(state: WorldState, g: Goal) -> np.ndarray:
    obj = state.task.object(g.obj)
    if g.kind == "place":
        t = state.object_poses[g.target]
        return np.array([t[0], t[1], t[2] + BIN_FLOOR + 0.5 * obj.height])
    if g.kind == "nut":
        t = state.object_poses[g.target]
        return np.array([t[0], t[1], 0.5 * obj.height])
    p = state.initial_poses[g.obj]
    return np.array([p[0], p[1], LIFT_HEIGHT + 0.5 * obj.height])


def goal_satisfied(state: WorldState, g: Goal) -> bool:
    if g.kind == "lift":
        return state.object_poses[g.obj][2] >= LIFT_HEIGHT
    if g.kind == "place":
        if state.attachment == g.obj:
            return False
        p, t = state.object_poses[g.obj], state.object_poses[g.target]
        return math.hypot(p[0] - t[0], p[1] - t[1]) <= PLACE_RADIUS
    if g.kind == "nut":
        if state.attachment == g.obj:
            return False
        p, t = state.object_poses[g.obj], state.object_poses[g.target]
        return math.hypot(p[0] - t[0], p[1] - t[1]) <= NUT_RADIUS and abs(p[2] - t[2]) <= 1e-6
    if g.kind == "push":
        return push_displacement(state, g) >= PUSH_DISTANCE
    if g.kind == "turn":
        return state.articulation_values[g.obj] >= TURN_ANGLE
    if g.kind == "open":
        return state.articulation_values[g.obj] >= OPEN_DISTANCE
    raise ValueError(g.kind)


def push_displacement(state: WorldState, g: Goal) -> float:
    p, p0 = state.object_poses[g.obj], state.initial_poses[g.obj]
    return (p[0] - p0[0]) * g.direction[0] + (p[1] - p0[1]) * g.direction[1]


def is_success(state: WorldState, task: TaskSpec) -> bool:
    return all(goal_satisfied(state, g) for g in task.goals)


def _goal_shaping(state: WorldState, g: Goal) -> float:
    ee = state.ee.as_array()
    if g.kind in ("lift", "place", "nut"):
        c = state.centroid(g.obj)
        if state.attachment == g.obj:
            return 0.5 - float(np.linalg.norm(c - _goal_point(state, g)))
        return -float(np.linalg.norm(ee - c))
    if g.kind == "push":
        c = state.centroid(g.obj)
        behind = c - 0.05 * np.array([g.direction[0], g.direction[1], 0.0])
        return -float(np.linalg.norm(ee - behind)) - max(0.0, PUSH_DISTANCE - push_displacement(state, g))
    # turn / open: reach the handle, then drive the articulation
    c = state.centroid(g.obj)
    need = TURN_ANGLE if g.kind == "turn" else OPEN_DISTANCE
    return -float(np.linalg.norm(ee - c)) - max(0.0, need - state.articulation_values[g.obj])


STAGE_BONUS = 1.5


def task_reward(state: WorldState, action: Action, next_state: WorldState, task: TaskSpec) -> float:
    """Environment reward for the transition ``state -> next_state``.

    Sparse: 1 on success. Dense: staged shaping per goal, offset by a bonus
    for each goal already achieved in order, with 1.0 on the final success.
    """
    if task.reward_mode == "sparse":
        return 1.0 if is_success(next_state, task) else 0.0
    goals = task.goals
    done = 0
    for g in goals:
        if not goal_satisfied(next_state, g):
            break
        done += 1
    if done == len(goals):
        return STAGE_BONUS * (len(goals) - 1) + 1.0
    return STAGE_BONUS * done + _goal_shaping(next_state, goals[done])


def reset(task: TaskSpec, seed: int, renderer=None):
    """Sample the initial state for ``seed`` and render the global view."""
    from stagewise.world.render import render_depth_and_masks

    state = home_state(task, seed)
    frames = render_depth_and_masks(state) if renderer is None else renderer(state)
    return state, frames
