"""Rotations, pinhole cameras and two-view relative pose."""

from src.geometry.camera import CameraPose, Intrinsics, look_at, project, project_points
from src.geometry.epipolar import (
    CorrespondenceSet,
    RelativePose,
    decompose_essential,
    eight_point,
    ransac_relative_pose,
    to_essential,
)
from src.geometry.rotations import (
    axis_angle_to_matrix,
    geodesic_distance,
    matrix_to_axis_angle,
    yaw_component,
)

__all__ = [
    "CameraPose",
    "Intrinsics",
    "look_at",
    "project",
    "project_points",
    "CorrespondenceSet",
    "RelativePose",
    "decompose_essential",
    "eight_point",
    "ransac_relative_pose",
    "to_essential",
    "axis_angle_to_matrix",
    "geodesic_distance",
    "matrix_to_axis_angle",
    "yaw_component",
]
