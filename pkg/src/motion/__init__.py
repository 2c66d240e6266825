"""Body states, skeleton, shot stitching and trajectory refinement."""

from src.motion.alignment import naive_concat, orientation_offset, smooth_boundary, stitch
from src.motion.body import BodyState, ShotMotion, StitchedMotion
from src.motion.skeleton import SkeletonFrame, forward_kinematics, get_kinematic_tree
from src.motion.trajectory import ContactState, detect_contacts, refine_trajectory

__all__ = [
    "naive_concat",
    "orientation_offset",
    "smooth_boundary",
    "stitch",
    "BodyState",
    "ShotMotion",
    "StitchedMotion",
    "SkeletonFrame",
    "forward_kinematics",
    "get_kinematic_tree",
    "ContactState",
    "detect_contacts",
    "refine_trajectory",
]
