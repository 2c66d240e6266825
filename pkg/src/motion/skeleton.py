"""
Stick-figure kinematic tree standing in for the parametric body model.

The 24-node tree is held in a networkx DiGraph (edges parent -> child, each
child carrying its fixed rest offset). Forward kinematics walks the tree in
topological order.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import networkx as nx
import numpy as np

from src.motion.body import BodyState, stack_states

JOINT_NAMES = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_toe", "right_toe",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
]
PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]
JOINT_COUNT = len(JOINT_NAMES)

LEFT_ANKLE = JOINT_NAMES.index("left_ankle")
RIGHT_ANKLE = JOINT_NAMES.index("right_ankle")
LEFT_TOE = JOINT_NAMES.index("left_toe")
RIGHT_TOE = JOINT_NAMES.index("right_toe")
FOOT_JOINTS = {"left": (LEFT_ANKLE, LEFT_TOE), "right": (RIGHT_ANKLE, RIGHT_TOE)}

THIGH_LENGTH = 0.42
SHIN_LENGTH = 0.42

# rest offsets from the parent (meters); subject faces +Z, left is +X, arms hang down
REST_OFFSETS = np.array([
    [0.0, 0.0, 0.0],
    [0.09, -0.08, 0.0],
    [-0.09, -0.08, 0.0],
    [0.0, 0.11, 0.0],
    [0.0, -THIGH_LENGTH, 0.0],
    [0.0, -THIGH_LENGTH, 0.0],
    [0.0, 0.14, 0.0],
    [0.0, -SHIN_LENGTH, 0.0],
    [0.0, -SHIN_LENGTH, 0.0],
    [0.0, 0.06, 0.0],
    [0.0, -0.05, 0.13],
    [0.0, -0.05, 0.13],
    [0.0, 0.22, 0.0],
    [0.07, 0.12, 0.0],
    [-0.07, 0.12, 0.0],
    [0.0, 0.10, 0.0],
    [0.10, 0.03, 0.0],
    [-0.10, 0.03, 0.0],
    [0.0, -0.27, 0.0],
    [0.0, -0.27, 0.0],
    [0.0, -0.25, 0.0],
    [0.0, -0.25, 0.0],
    [0.0, -0.08, 0.0],
    [0.0, -0.08, 0.0],
])


@dataclass
class SkeletonFrame:
    """World-frame joint positions of one frame."""
    joints: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=float).reshape(-1, 3)

    def joint(self, name: str) -> np.ndarray:
        return self.joints[JOINT_NAMES.index(name)]


def build_kinematic_tree() -> nx.DiGraph:
    """Kinematic tree with ``offset`` on every node and ``name`` labels."""
    tree = nx.DiGraph()
    for j, name in enumerate(JOINT_NAMES):
        tree.add_node(j, name=name, offset=REST_OFFSETS[j])
    for j, parent in enumerate(PARENTS):
        if parent >= 0:
            tree.add_edge(parent, j)
    return tree


_tree: Optional[nx.DiGraph] = None
_order: Optional[List[int]] = None


def get_kinematic_tree() -> nx.DiGraph:
    """Shared kinematic tree instance."""
    global _tree, _order
    if _tree is None:
        _tree = build_kinematic_tree()
        _order = list(nx.topological_sort(_tree))
    return _tree


def _traversal_order() -> List[int]:
    get_kinematic_tree()
    return _order


def rest_skeleton() -> np.ndarray:
    """Joint positions of the rest pose with the root at the origin."""
    return forward_kinematics(BodyState.rest()).joints


def forward_kinematics_arrays(root: np.ndarray, body: np.ndarray, translation: np.ndarray) -> np.ndarray:
    """
    Batched forward kinematics.

    Args:
        root: (T, 3, 3) root orientations
        body: (T, 23, 3, 3) local joint rotations
        translation: (T, 3) root positions

    Returns:
        (T, 24, 3) joint positions
    """
    tree = get_kinematic_tree()
    n = len(root)
    glob = np.zeros((n, JOINT_COUNT, 3, 3))
    pos = np.zeros((n, JOINT_COUNT, 3))
    for j in _traversal_order():
        preds = list(tree.predecessors(j))
        if not preds:
            glob[:, j] = root
            pos[:, j] = translation
            continue
        p = preds[0]
        pos[:, j] = pos[:, p] + np.einsum("tij,j->ti", glob[:, p], tree.nodes[j]["offset"])
        glob[:, j] = np.einsum("tij,tjk->tik", glob[:, p], body[:, j - 1])
    return pos


def forward_kinematics(state: BodyState, fps: float = 30.0) -> SkeletonFrame:
    """Joint positions of one body state."""
    return forward_kinematics_sequence([state], fps)[0]


def forward_kinematics_sequence(states: Sequence[BodyState], fps: float = 30.0) -> List[SkeletonFrame]:
    """Joint positions for every state of a sequence."""
    root, body, trans = stack_states(states)
    joints = forward_kinematics_arrays(root, body, trans)
    return [SkeletonFrame(j, fps) for j in joints]


def joints_array(frames: Sequence[SkeletonFrame]) -> np.ndarray:
    """(T, J, 3) array from a list of skeleton frames."""
    if not frames:
        return np.zeros((0, JOINT_COUNT, 3))
    return np.stack([f.joints for f in frames])
