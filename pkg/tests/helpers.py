"""Scene builders shared by the tests."""

import math

import numpy as np

from stagewise.world import robot as rb
from stagewise.world.robot import JointConfig, forward_kinematics
from stagewise.world.sim import WorldState
from stagewise.world.tasks import TaskSpec


def make_scene(objects, ee_xyz=(0.5, 0.4, 0.2), aperture=rb.APERTURE_MAX, goals=(), attachment=None,
               name="custom", reward_mode="dense", articulation=None):
    """A hand-built WorldState with the arm placed over ``ee_xyz``."""
    vocab = []
    for o in objects:
        vocab.extend(o.labels())
    task = TaskSpec(name=name, object_set=tuple(objects), stage_count=max(1, len(goals)),
                    reward_mode=reward_mode, horizon_per_stage=25, success_predicate=name,
                    scene_vocabulary=tuple(vocab), task_description="test scene", goals=tuple(goals))
    th1, th2 = rb.nearest_branch(ee_xyz[0], ee_xyz[1], rb.HOME)
    q = JointConfig(th1, th2, ee_xyz[2], aperture / rb.APERTURE_MAX)
    poses = {o.label: o.pose for o in objects}
    arts = {o.label: o.articulation.low for o in objects if o.articulation is not None}
    arts.update(articulation or {})
    return WorldState(task=task, robot=q, ee=forward_kinematics(q), object_poses=poses,
                      articulation_values=arts, attachment=attachment, grip_target=aperture,
                      initial_poses=dict(poses))


def angle_close(a, b, tol=1e-9):
    return abs(math.remainder(a - b, 2 * math.pi)) <= tol


def as_np(x):
    return np.asarray(x, dtype=float)
