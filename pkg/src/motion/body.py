"""Body state containers for per-shot and stitched motion."""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from src.errors import InputError, ShapeMismatchError
from src.geometry.camera import CameraPose
from src.geometry.rotations import axis_angles_to_matrices, matrices_to_axis_angles

BODY_JOINTS = 23
SHAPE_DIM = 10


@dataclass
class BodyState:
    """
    One frame of body parameters.

    Attributes:
        root_orient: Axis-angle root orientation (3,)
        body_pose: Axis-angle local rotation per body joint (23, 3)
        shape: Shape coefficients (10,)
        translation: Root translation in meters (3,)
    """
    root_orient: np.ndarray
    body_pose: np.ndarray = field(default_factory=lambda: np.zeros((BODY_JOINTS, 3)))
    shape: np.ndarray = field(default_factory=lambda: np.zeros(SHAPE_DIM))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.root_orient = np.asarray(self.root_orient, dtype=float).reshape(3)
        self.body_pose = np.asarray(self.body_pose, dtype=float)
        if self.body_pose.size != BODY_JOINTS * 3:
            raise ShapeMismatchError(f"body_pose needs {BODY_JOINTS} joints, got {self.body_pose.size // 3}")
        self.body_pose = self.body_pose.reshape(BODY_JOINTS, 3)
        self.shape = np.asarray(self.shape, dtype=float).reshape(-1)
        if self.shape.size != SHAPE_DIM:
            raise ShapeMismatchError(f"shape needs {SHAPE_DIM} coefficients, got {self.shape.size}")
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @classmethod
    def rest(cls) -> "BodyState":
        return cls(np.zeros(3))

    def copy(self) -> "BodyState":
        return BodyState(self.root_orient.copy(), self.body_pose.copy(), self.shape.copy(), self.translation.copy())


def stack_states(states: Sequence[BodyState]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Rotation-matrix view of a sequence.

    Returns:
        (root (T, 3, 3), body (T, 23, 3, 3), translation (T, 3))
    """
    if not states:
        return np.zeros((0, 3, 3)), np.zeros((0, BODY_JOINTS, 3, 3)), np.zeros((0, 3))
    root = axis_angles_to_matrices(np.stack([s.root_orient for s in states]))
    body = axis_angles_to_matrices(np.stack([s.body_pose for s in states]))
    trans = np.stack([s.translation for s in states])
    return root, body, trans


def unstack_states(
    root: np.ndarray,
    body: np.ndarray,
    translation: np.ndarray,
    shapes: Sequence[np.ndarray],
) -> List[BodyState]:
    """Inverse of :func:`stack_states`."""
    root_aa = matrices_to_axis_angles(root)
    body_aa = matrices_to_axis_angles(body)
    return [
        BodyState(root_aa[i], body_aa[i], np.array(shapes[i], dtype=float), translation[i].copy())
        for i in range(len(root_aa))
    ]


@dataclass
class ShotMotion:
    """
    Motion of one shot in its own view frame.

    ``frame_range`` is half-open in global frame indices. Missing cameras are
    filled with identity poses.
    """
    states: List[BodyState]
    cameras: List[CameraPose] = field(default_factory=list)
    shot_index: int = 0
    frame_range: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        start, end = self.frame_range
        if end == start == 0 and self.states:
            self.frame_range = (0, len(self.states))
            start, end = self.frame_range
        if not self.cameras:
            self.cameras = [CameraPose.identity() for _ in self.states]
        if not (len(self.states) == len(self.cameras) == end - start):
            raise InputError(
                f"Shot {self.shot_index}: {len(self.states)} state(s), {len(self.cameras)} camera(s) "
                f"for frames {start}-{end - 1}"
            )

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class StitchedMotion:
    """
    Continuous motion over the full video.

    Attributes:
        states: One BodyState per frame
        applied_offsets: Yaw offset matrix used at each transition
        provenance: Source shot index per frame
    """
    states: List[BodyState]
    applied_offsets: List[np.ndarray]
    provenance: List[int]

    def __post_init__(self):
        if len(self.provenance) != len(self.states):
            raise InputError(f"{len(self.provenance)} provenance entries for {len(self.states)} frame(s)")
        if len(self.applied_offsets) != len(self.transitions):
            raise InputError(
                f"{len(self.applied_offsets)} offset(s) for {len(self.transitions)} transition(s)"
            )

    def __len__(self) -> int:
        return len(self.states)

    @property
    def transitions(self) -> List[int]:
        """Frames whose source shot differs from the previous frame's."""
        return [t for t in range(1, len(self.provenance)) if self.provenance[t] != self.provenance[t - 1]]

    def with_states(self, states: List[BodyState]) -> "StitchedMotion":
        return StitchedMotion(states, list(self.applied_offsets), list(self.provenance))
