"""
Stitching per-shot motions into one world-frame motion.

Each incoming shot is rotated by the yaw part of the camera rotation across
its transition (accumulated over earlier transitions), placed so its first
root position continues the previous shot at constant velocity, and the
joint rotations around every boundary are cross-faded.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from src.config import AlignConfig
from src.errors import InputError
from src.geometry.epipolar import RelativePose
from src.geometry.rotations import (
    axis_angle_to_matrix,
    geodesic_distance,
    matrix_to_axis_angle,
    slerp,
    yaw_angle,
    yaw_matrix,
)
from src.motion.body import BodyState, ShotMotion, StitchedMotion, stack_states, unstack_states

logger = logging.getLogger(__name__)


def orientation_offset(tail: BodyState, head: BodyState, rel: RelativePose) -> np.ndarray:
    """
    Yaw offset to left-multiply onto the incoming shot's root orientations.

    Args:
        tail: Last state of the outgoing shot
        head: First state of the incoming shot
        rel: Camera relative pose across the transition

    Returns:
        Pure Y-axis rotation matrix
    """
    psi = yaw_angle(rel.r_delta)
    offset = yaw_matrix(psi)
    full = np.degrees(np.linalg.norm(matrix_to_axis_angle(rel.r_delta)))
    before = np.degrees(geodesic_distance(axis_angle_to_matrix(tail.root_orient), axis_angle_to_matrix(head.root_orient)))
    after = np.degrees(geodesic_distance(
        axis_angle_to_matrix(tail.root_orient), offset @ axis_angle_to_matrix(head.root_orient)
    ))
    logger.debug(
        f"Offset yaw {np.degrees(psi):.2f} deg from {full:.2f} deg camera rotation; "
        f"root jump {before:.2f} -> {after:.2f} deg"
    )
    return offset


def apply_offset(shot: ShotMotion, offset: np.ndarray, pivot: np.ndarray) -> ShotMotion:
    """Rotate a shot's root orientations and translations (about ``pivot``) by ``offset``."""
    offset = np.asarray(offset, dtype=float)
    pivot = np.asarray(pivot, dtype=float).reshape(3)
    states = []
    for s in shot.states:
        states.append(BodyState(
            root_orient=matrix_to_axis_angle(offset @ axis_angle_to_matrix(s.root_orient)),
            body_pose=s.body_pose.copy(),
            shape=s.shape.copy(),
            translation=offset @ (s.translation - pivot) + pivot,
        ))
    return ShotMotion(states, list(shot.cameras), shot.shot_index, shot.frame_range)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _rotvec_power(rotvec: np.ndarray, alpha: float) -> np.ndarray:
    """(J, 3) rotation vectors scaled to matrices D^alpha."""
    return Rotation.from_rotvec(alpha * rotvec).as_matrix()


def smooth_boundary(states: Sequence[BodyState], transition: int, half_window: int = 5) -> List[BodyState]:
    """
    Cross-fade root and joint rotations across a shot boundary.

    The jump at the boundary is measured against a constant-velocity
    prediction from the frames before it, then spread over frames
    ``transition - half_window .. transition + half_window - 1`` with a
    smoothstep blend. Frames outside that window are returned unchanged;
    translations are never touched. Windows are clamped at the sequence ends.

    Raises:
        InputError: transition outside [1, len(states) - 1] or half_window < 1
    """
    n = len(states)
    if not 1 <= transition <= n - 1:
        raise InputError(f"Transition {transition} outside [1, {n - 1}]")
    if half_window < 1:
        raise InputError("half_window must be at least 1")

    root, body, trans = stack_states(states)
    # root as joint 0 followed by the body joints
    rots = np.concatenate([root[:, None], body], axis=1)
    t = transition
    eye = np.broadcast_to(np.eye(3), rots.shape[1:])

    v_pre = np.einsum("jki,jkl->jil", rots[t - 2], rots[t - 1]) if t >= 2 else eye
    v_post = np.einsum("jki,jkl->jil", rots[t], rots[t + 1]) if t + 1 < n else eye
    velocity = np.stack([slerp(a, b, 0.5) for a, b in zip(v_pre, v_post)])
    predicted = np.einsum("jik,jkl->jil", rots[t - 1], velocity)
    jump = np.einsum("jik,jlk->jil", rots[t], predicted)
    jump_rotvec = Rotation.from_matrix(jump).as_rotvec()

    lo, hi = max(0, t - half_window), min(n - 1, t + half_window - 1)
    out = [s.copy() for s in states]
    new_rots = rots.copy()
    for f in range(lo, hi + 1):
        alpha = float(_smoothstep((f - (t - half_window) + 1) / (2 * half_window + 1)))
        power = alpha if f < t else -(1.0 - alpha)
        new_rots[f] = np.einsum("jik,jkl->jil", _rotvec_power(jump_rotvec, power), rots[f])

    frames = list(range(lo, hi + 1))
    rebuilt = unstack_states(
        new_rots[frames, 0], new_rots[frames, 1:], trans[frames], [states[f].shape for f in frames]
    )
    for f, state in zip(frames, rebuilt):
        out[f] = state
    logger.debug(
        f"Smoothed frames {lo}-{hi} around transition {t}; "
        f"max joint jump {np.degrees(np.linalg.norm(jump_rotvec, axis=1).max()):.2f} deg"
    )
    return out


def _check_order(shots: Sequence[ShotMotion]) -> None:
    for prev, cur in zip(shots, shots[1:]):
        if cur.frame_range[0] < prev.frame_range[1]:
            raise InputError(
                f"Shots {prev.shot_index} and {cur.shot_index} overlap: "
                f"{prev.frame_range} and {cur.frame_range}"
            )
        if cur.frame_range[0] > prev.frame_range[1]:
            raise InputError(
                f"Gap between shots {prev.shot_index} and {cur.shot_index}: "
                f"{prev.frame_range} and {cur.frame_range}"
            )


def stitch(
    shots: Sequence[ShotMotion],
    rel_poses: Sequence[RelativePose],
    cfg: Optional[AlignConfig] = None,
) -> StitchedMotion:
    """
    Merge shots into the world frame of the first shot.

    Args:
        shots: Per-shot motions in temporal order, each in its own view frame
        rel_poses: Camera relative pose across each transition
        cfg: Smoother window and the orientation/smoothing switches

    Returns:
        StitchedMotion with the per-transition yaw offsets and per-frame provenance

    Raises:
        InputError: count mismatch, overlapping or non-adjacent frame ranges
    """
    cfg = cfg or AlignConfig()
    if not shots:
        raise InputError("Nothing to stitch")
    if len(rel_poses) != len(shots) - 1:
        raise InputError(f"{len(rel_poses)} relative pose(s) for {len(shots)} shot(s)")
    _check_order(shots)

    states: List[BodyState] = [s.copy() for s in shots[0].states]
    provenance = [shots[0].shot_index] * len(shots[0])
    offsets: List[np.ndarray] = []
    transitions: List[int] = []
    accumulated = np.eye(3)

    for shot, rel in zip(shots[1:], rel_poses):
        if cfg.align_orientation:
            offset = orientation_offset(states[-1], shot.states[0], rel)
        else:
            offset = np.eye(3)
        accumulated = offset @ accumulated
        placed = apply_offset(shot, accumulated, shot.states[0].translation)

        last = states[-1].translation
        velocity = last - states[-2].translation if len(states) >= 2 else np.zeros(3)
        shift = last + velocity - placed.states[0].translation
        transitions.append(len(states))
        for s in placed.states:
            s.translation = s.translation + shift
            states.append(s)
        provenance.extend([shot.shot_index] * len(shot))
        offsets.append(offset)

    if cfg.smooth:
        for t in transitions:
            states = smooth_boundary(states, t, cfg.half_window)

    logger.info(
        f"Stitched {len(shots)} shot(s) into {len(states)} frame(s); yaw offsets "
        f"{[round(float(np.degrees(yaw_angle(o))), 2) for o in offsets]} deg"
    )
    return StitchedMotion(states, offsets, provenance)


def naive_concat(shots: Sequence[ShotMotion]) -> StitchedMotion:
    """Concatenate shots as they are: no rotation, no repositioning, no smoothing."""
    if not shots:
        raise InputError("Nothing to concatenate")
    _check_order(shots)
    states, provenance = [], []
    for shot in shots:
        states.extend(s.copy() for s in shot.states)
        provenance.extend([shot.shot_index] * len(shot))
    return StitchedMotion(states, [np.eye(3) for _ in shots[1:]], provenance)
