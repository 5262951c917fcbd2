"""Episode runners: staged learning, the end-to-end baseline and open-loop scripted skills."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from stagewise.errors import (
    EmptyCloudError,
    MaskNotFound,
    PlanningFailed,
    Unreachable,
)
from stagewise.learn.agent import Agent
from stagewise.learn.buffer import ReplayBuffer, Transition
from stagewise.orchestrate.config import EpisodeRecord, ExperimentConfig, StageRecord
from stagewise.terminate.conditions import evaluate_condition, make_context, owner_of
from stagewise.world import robot as rb
from stagewise.world.render import Corruption, render_depth_and_masks
from stagewise.world.robot import JointConfig
from stagewise.world.sim import (
    LOCAL_DIM,
    Action,
    WorldState,
    global_features,
    global_scale,
    home_state,
    is_success,
    local_features,
    local_scale,
    task_reward,
    transition,
)
from stagewise.world.tasks import TaskSpec, build_task

HELD_GUARD = 0.01
SEQUENCING_ERRORS = (PlanningFailed, Unreachable, MaskNotFound, EmptyCloudError)


@dataclass(frozen=True)
class Env:
    """A task plus the perception corruption applied to every global render."""

    task: TaskSpec
    corruption: Corruption = Corruption()

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Env":
        return cls(build_task(cfg.task, cfg.reward_mode, cfg.horizon_per_stage),
                   Corruption(cfg.p_flip, cfg.r_erode))

    def reset(self, seed: int) -> WorldState:
        return home_state(self.task, seed)

    def render(self, state: WorldState):
        return render_depth_and_masks(state, self.corruption)


class Learner:
    """One agent and its replay buffer; every stored transition triggers an update."""

    def __init__(self, obs_dim: int, seed: int, cfg: ExperimentConfig, obs_scale: np.ndarray):
        a = cfg.agent
        self.agent = Agent(obs_dim, 4, seed=seed, cfg=a, obs_scale=obs_scale)
        self.buffer = ReplayBuffer(obs_dim, 4, a.buffer_capacity, a.n_step, a.gamma)

    @classmethod
    def for_method(cls, cfg: ExperimentConfig, seed: int) -> "Learner":
        if cfg.method == "e2e":
            task = build_task(cfg.task, cfg.reward_mode, cfg.horizon_per_stage)
            return cls(len(global_scale(task)), seed, cfg, global_scale(task))
        return cls(LOCAL_DIM, seed, cfg, local_scale())

    @property
    def gamma(self) -> float:
        return self.agent.cfg.gamma

    def store(self, t: Transition) -> None:
        self.buffer.push(t)
        self.agent.env_steps += 1
        if len(self.buffer) >= self.agent.cfg.batch_size:
            self.agent.update(self.buffer)


# --- sequencing --------------------------------------------------------------------

@dataclass(frozen=True)
class SequencingOutcome:
    reached: bool
    failure: Optional[str]
    n_samples: int = 0
    planning_time: float = 0.0
    target: Optional[tuple[float, float, float]] = None  # the pose estimate that was planned to


def sequence_to(env: Env, state: WorldState, label: str, sigma: float, seed: int,
                planner_timeout_s: float = 10.0) -> tuple[WorldState, SequencingOutcome]:
    """Move the arm next to ``label`` with the perception and motion-planning stack.

    On a sequencing error the state is returned unchanged.
    """
    from stagewise.sequence.cloud import preprocess_cloud, project_point_cloud, remove_robot_points
    from stagewise.sequence.collision import AttachedHull
    from stagewise.sequence.kinematics import inverse_kinematics
    from stagewise.sequence.motion import PlannerConfig, execute_waypoints, plan_motion
    from stagewise.sequence.perception import NoiseModel, estimate_target_pose, masked_cloud

    try:
        frames = env.render(state)
        target = estimate_target_pose(frames, label, NoiseModel(sigma), seed)
        q_goal = inverse_kinematics(target, state.robot)
        scene = preprocess_cloud(project_point_cloud(frames))
        scene = remove_robot_points(scene, rb.robot_capsules(state.robot, state.ee))
        hull = None
        if state.attachment is not None:
            try:
                held = preprocess_cloud(masked_cloud(frames, state.attachment))
                hull = AttachedHull.from_points(held.points, state.ee)
            except (MaskNotFound, EmptyCloudError):
                hull = None  # carried object hidden behind the gripper
            scene = scene.subset(scene.labels != state.attachment)
            if hull is not None:
                # carried-object points under a wrong label count as part of it
                scene = scene.subset(hull.distance(scene.points, state.ee) > HELD_GUARD)
        res = plan_motion(state.robot, q_goal, scene, hull, seed,
                          PlannerConfig(timeout_s=planner_timeout_s))
    except SEQUENCING_ERRORS as e:
        return state, SequencingOutcome(False, type(e).__name__)
    state = execute_waypoints(res, state)
    return state, SequencingOutcome(True, None, res.n_samples, res.planning_time, tuple(map(float, target)))


def _direction(task: TaskSpec, label: str) -> tuple[float, float]:
    owner = owner_of(task, label).label
    for g in task.goals:
        if g.kind == "push" and g.obj == owner:
            return g.direction
    return (0.0, 1.0)


def _stage_seed(seed: int, k: int) -> int:
    return int(seed) * 31 + k


# --- staged learning ------------------------------------------------------------------

def run_psl_episode(env: Env, plan, learner: Learner, cfg: ExperimentConfig, seed: int,
                    explore: bool = True, train: bool = True) -> EpisodeRecord:
    """Sequence to each stage's region, then hand control to the policy.

    ``plan`` is a sequence of resolved (scene label, condition) pairs.
    """
    t0 = time.perf_counter()
    task = env.task
    state = env.reset(seed)
    agent = learner.agent
    gamma = learner.gamma
    H = cfg.horizon_per_stage
    stages: list[StageRecord] = []
    pending: Optional[tuple] = None  # last transition of the previous stage, awaiting its successor
    # in timeout mode every stage runs its full budget and success is judged on the final state
    absorb = cfg.termination_mode == "condition"
    total = 0.0
    steps = 0
    success = False
    for k, (label, cond) in enumerate(plan):
        state, seq = sequence_to(env, state, label, cfg.noise_sigma, _stage_seed(seed, k), cfg.planner_timeout_s)
        obs = local_features(state)
        if pending is not None and train:
            # the stage's last action leads to the post-sequencing observation of the next one
            learner.store(Transition(*pending, obs, False, True))
        pending = None
        ctx = make_context(state, cond, label, cfg.thresholds, _direction(task, label))
        met = False
        used = 0
        for t in range(H):
            a = agent.act(obs, explore=explore)
            nxt = state
            r = 0.0
            for _ in range(cfg.psl_action_repeat):
                prev, nxt = nxt, transition(nxt, Action.from_normalized(a))
                r += task_reward(prev, None, nxt, task)
                if absorb and is_success(nxt, task):
                    break
            success = is_success(nxt, task)
            obs2 = local_features(nxt)
            used += 1
            steps += 1
            total += r
            if not met:
                # once the condition fires it is never queried again this stage
                met = evaluate_condition(ctx, nxt)
            end = (met and absorb) or t == H - 1
            if train:
                if success and absorb:
                    # the task is solved: treat the goal as absorbing
                    learner.store(Transition(obs, a, r / (1.0 - gamma), obs2, True, True))
                elif end:
                    pending = (obs, a, r)
                else:
                    learner.store(Transition(obs, a, r, obs2, False, False))
            state, obs = nxt, obs2
            if (success and absorb) or end:
                break
        stages.append(StageRecord(label, cond, seq.reached, seq.failure, met, used, seq.n_samples,
                                  seq.planning_time))
        if success and absorb:
            break
    if pending is not None and train:
        learner.store(Transition(*pending, obs, False, True))
    success = is_success(state, task)
    return EpisodeRecord(seed, "psl", tuple(stages), total, success, steps, time.perf_counter() - t0)


# --- end-to-end baseline -------------------------------------------------------------

def run_e2e_episode(env: Env, learner: Learner, cfg: ExperimentConfig, seed: int,
                    explore: bool = True, train: bool = True) -> EpisodeRecord:
    """Whole-task control from global features, without planner or stages."""
    t0 = time.perf_counter()
    task = env.task
    state = env.reset(seed)
    agent = learner.agent
    repeat = cfg.e2e_action_repeat
    env_steps = cfg.horizon_per_stage * task.stage_count
    decisions = int(math.ceil(env_steps / repeat))
    obs = global_features(state)
    total = 0.0
    steps = 0
    success = False
    for d in range(decisions):
        a = agent.act(obs, explore=explore)
        r = 0.0
        for _ in range(min(repeat, env_steps - steps)):
            nxt = transition(state, Action.from_normalized(a))
            r += task_reward(state, None, nxt, task)
            state = nxt
            steps += 1
            success = is_success(state, task)
            if success:
                break
        obs2 = global_features(state)
        total += r
        last = d == decisions - 1
        if train:
            if success:
                learner.store(Transition(obs, a, r / (1.0 - learner.gamma), obs2, True, True))
            else:
                learner.store(Transition(obs, a, r, obs2, False, last))
        obs = obs2
        if success:
            break
    return EpisodeRecord(seed, "e2e", (), total, success, steps, time.perf_counter() - t0)


# --- scripted skills ------------------------------------------------------------------

LIFT = 0.05
PUSH_OVERSHOOT = 0.02
CLEAR_Z = 0.10  # travel height above articulated parts
HOOK_OFFSET = 0.02  # handle centre to the hooking finger
HOOK_Z = 0.035
LEVER_LEAD = 0.45  # rad behind the lever to start the sweep


def _move(state: WorldState, target, grip: float = 0.0, max_steps: int = 60) -> tuple[WorldState, int]:
    """Straight-line end-effector motion until the target is reached or progress stops."""
    target = np.asarray(target, dtype=float)
    n = 0
    for _ in range(max_steps):
        d = target - state.ee.as_array()
        if np.linalg.norm(d) < 1e-6:
            break
        nxt = transition(state, Action(tuple(np.clip(d, -0.02, 0.02)), grip))
        n += 1
        stalled = np.linalg.norm(nxt.ee.as_array() - state.ee.as_array()) < 1e-6
        state = nxt
        if stalled:
            break
    return state, n


def _grip(state: WorldState, cmd: float, steps: int = 3) -> tuple[WorldState, int]:
    for _ in range(steps):
        state = transition(state, Action((0.0, 0.0, 0.0), cmd))
    return state, steps


def _descend(state: WorldState, grip: float = 0.0) -> tuple[WorldState, int]:
    return _move(state, (state.ee.x, state.ee.y, rb.DZ_MIN), grip)


def _perceived_xy(env: Env, state: WorldState, label: str, sigma: float, seed: int) -> Optional[np.ndarray]:
    from stagewise.sequence.perception import NoiseModel, estimate_target_pose

    try:
        return np.asarray(estimate_target_pose(env.render(state), label, NoiseModel(sigma), seed))[:2]
    except (MaskNotFound, EmptyCloudError):
        return None


def _footprint_radius(obj) -> float:
    if obj.shape in ("cylinder", "dial", "peg"):
        return float(obj.extents[0])
    return 0.5 * float(max(obj.extents[:2]))


def _primitive(env: Env, state: WorldState, cond: str, label: str, sigma: float, seed: int,
               seq: SequencingOutcome) -> tuple[WorldState, int]:
    """Open-loop skill executed from the pose the sequencing stack reached.

    Object positions come from the same perception stack as sequencing, never
    from the simulator state.
    """
    task = env.task
    n = 0
    if cond == "grasp":
        state, k = _grip(state, 1.0)
        n += k
        state, k = _descend(state)
        n += k
        state, k = _grip(state, -1.0)
        n += k
        state, k = _move(state, state.ee.as_array() + (0.0, 0.0, LIFT))
        return state, n + k
    if cond == "place":
        state, k = _descend(state)
        n += k
        state, k = _grip(state, 1.0)
        n += k
        state, k = _move(state, state.ee.as_array() + (0.0, 0.0, LIFT))
        return state, n + k
    if cond == "push":
        if seq.target is None:
            return state, 0
        dx, dy = _direction(task, label)
        c = seq.target
        half = _footprint_radius(owner_of(task, label))
        behind = (c[0] - dx * (half + 0.03), c[1] - dy * (half + 0.03))
        state, k = _move(state, (state.ee.x, state.ee.y, 0.08))
        n += k
        state, k = _move(state, (behind[0], behind[1], 0.08))
        n += k
        state, k = _move(state, (behind[0], behind[1], 0.01))
        n += k
        dist = 0.10 + PUSH_OVERSHOOT
        state, k = _move(state, (behind[0] + dx * dist, behind[1] + dy * dist, 0.01))
        return state, n + k
    if cond in ("open", "close"):
        # drop a closed gripper into the gap behind (or in front of) the handle, then slide along y
        if seq.target is None:
            return state, 0
        hx, hy = seq.target[0], seq.target[1]
        sign = -1.0 if cond == "open" else 1.0
        state, k = _grip(state, -1.0)
        n += k
        for wp in ((state.ee.x, state.ee.y, CLEAR_Z), (hx, hy - sign * HOOK_OFFSET, CLEAR_Z),
                   (hx, hy - sign * HOOK_OFFSET, HOOK_Z), (hx, hy + sign * (0.10 - HOOK_OFFSET), HOOK_Z)):
            state, k = _move(state, wp, grip=-1.0)
            n += k
        return state, n
    if cond == "turn":
        # press the lever sideways and sweep it around the knob axis
        o = owner_of(task, label)
        if seq.target is None or o.handle_label is None:
            return state, 0
        p = np.asarray(seq.target[:2]) if label == o.label else _perceived_xy(env, state, o.label, sigma, seed + 7)
        lever = _perceived_xy(env, state, o.handle_label, sigma, seed + 11)
        if p is None or lever is None:
            return state, 0
        a0 = math.atan2(lever[1] - p[1], lever[0] - p[0])
        r = float(np.hypot(*(lever - p)))

        def around(a: float, z: float) -> tuple[float, float, float]:
            return (p[0] + r * math.cos(a), p[1] + r * math.sin(a), z)

        state, k = _grip(state, -1.0)
        n += k
        for wp in ((state.ee.x, state.ee.y, CLEAR_Z), around(a0 - LEVER_LEAD, CLEAR_Z)):
            state, k = _move(state, wp, grip=-1.0)
            n += k
        state, k = _descend(state, grip=-1.0)
        n += k
        z = state.ee.z
        sweep = math.pi / 2 + 0.2 + LEVER_LEAD
        for i in range(1, 17):
            state, k = _move(state, around(a0 - LEVER_LEAD + i * sweep / 16, z), grip=-1.0)
            n += k
        return state, n
    return state, n


def run_scripted_episode(env: Env, plan, cfg: ExperimentConfig, seed: int) -> EpisodeRecord:
    t0 = time.perf_counter()
    task = env.task
    state = env.reset(seed)
    stages = []
    steps = 0
    total = 0.0
    for k, (label, cond) in enumerate(plan):
        state, seq = sequence_to(env, state, label, cfg.noise_sigma, _stage_seed(seed, k), cfg.planner_timeout_s)
        ctx = make_context(state, cond, label, cfg.thresholds, _direction(task, label))
        before = state
        state, n = _primitive(env, state, cond, label, cfg.noise_sigma, _stage_seed(seed, k), seq)
        total += task_reward(before, None, state, task)
        steps += n
        stages.append(StageRecord(label, cond, seq.reached, seq.failure, evaluate_condition(ctx, state), n,
                                  seq.n_samples, seq.planning_time))
        if is_success(state, task):
            break
    return EpisodeRecord(seed, "scripted", tuple(stages), total, is_success(state, task), steps,
                         time.perf_counter() - t0)
