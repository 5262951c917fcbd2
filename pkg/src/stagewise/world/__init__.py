from stagewise.world.robot import HOME, EEPose, JointConfig, forward_kinematics
from stagewise.world.sim import (
    Action,
    WorldState,
    create_task,
    is_success,
    local_features,
    reset,
    step,
    task_reward,
)
from stagewise.world.render import DepthFrame, render_depth_and_masks
from stagewise.world.snapshot import dump_scene, load_scene
from stagewise.world.tasks import ObjectSpec, TaskSpec, registered_tasks

__all__ = [
    "HOME", "EEPose", "JointConfig", "forward_kinematics", "Action", "WorldState", "create_task",
    "is_success", "local_features", "reset", "step", "task_reward", "DepthFrame",
    "render_depth_and_masks", "dump_scene", "load_scene", "ObjectSpec", "TaskSpec", "registered_tasks",
]
