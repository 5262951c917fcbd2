from stagewise.sequence.cloud import (
    PointCloud,
    preprocess_cloud,
    project_point_cloud,
    remove_robot_points,
)
from stagewise.sequence.collision import AttachedHull, collision_check
from stagewise.sequence.kinematics import inverse_kinematics
from stagewise.sequence.motion import MotionPlanResult, PlannerConfig, execute_waypoints, plan_motion
from stagewise.sequence.perception import NoiseModel, estimate_target_pose, refine_mask

__all__ = [
    "PointCloud", "preprocess_cloud", "project_point_cloud", "remove_robot_points", "AttachedHull",
    "collision_check", "inverse_kinematics", "MotionPlanResult", "PlannerConfig", "execute_waypoints",
    "plan_motion", "NoiseModel", "estimate_target_pose", "refine_mask",
]
