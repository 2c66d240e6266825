"""
Sliding-window camera trajectory estimation for one shot.

Windows of ``window_size + 1`` frames advance with stride ``window_size // 2``.
Poses already solved by the previous window are held fixed, which chains the
gauge (first pose identity, scale set by the first window) across the shot.
"""

import logging
from dataclasses import replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.camera.bundle_adjustment import BAWindow, PointTrack, ba_solve, mask_tracks
from src.config import BAConfig
from src.errors import EstimationError, UnderConstrainedError
from src.geometry.camera import CameraPose, Intrinsics
from src.geometry.epipolar import CorrespondenceSet, ransac_relative_pose, triangulate_midpoint
from src.geometry.rotations import slerp
from src.shots.detector import BBox

logger = logging.getLogger(__name__)

MIN_PARALLAX_PX = 0.5
MIN_BOOTSTRAP_PAIRS = 8


def _window_starts(start: int, end: int, size: int) -> List[Tuple[int, int]]:
    """Inclusive (first, last) frame of every window over [start, end)."""
    stride = max(1, size // 2)
    windows = [(start, min(start + size, end - 1))]
    while windows[-1][1] < end - 1:
        first = windows[-1][0] + stride
        windows.append((first, min(first + size, end - 1)))
    return windows


def _relative(a: CameraPose, b: CameraPose) -> Tuple[np.ndarray, np.ndarray]:
    """(r, t) with x_b = r·x_a + t."""
    r = b.r @ a.r.T
    return r, b.t - r @ a.t


def _bootstrap(
    tracks: Sequence[PointTrack],
    k: Intrinsics,
    first: int,
    last: int,
    seed: int,
) -> Dict[int, CameraPose]:
    """
    Initial poses for the first window from a two-view estimate between its
    end frames, interpolated in between. Falls back to identity when the
    parallax is too small or the estimate fails.
    """
    s1, s2 = [], []
    for track in tracks:
        if track.dynamic:
            continue
        a, b = track.position_at(first), track.position_at(last)
        if a is not None and b is not None:
            s1.append(a)
            s2.append(b)
    identity = {f: CameraPose.identity() for f in range(first, last + 1)}
    if len(s1) < MIN_BOOTSTRAP_PAIRS:
        logger.warning(f"Only {len(s1)} track(s) span frames {first}-{last}; initializing poses at identity")
        return identity
    s1, s2 = np.asarray(s1), np.asarray(s2)
    parallax = float(np.median(np.linalg.norm(s2 - s1, axis=1)))
    if parallax < MIN_PARALLAX_PX:
        logger.debug(f"Median parallax {parallax:.3g} px over frames {first}-{last}; static initialization")
        return identity
    try:
        rel = ransac_relative_pose(CorrespondenceSet.all_visible(s1, s2), k, seed=seed)
    except EstimationError as exc:
        logger.warning(f"Two-view bootstrap failed over frames {first}-{last} ({exc}); using identity")
        return identity

    span = last - first
    poses = {}
    for f in range(first, last + 1):
        alpha = (f - first) / span
        poses[f] = CameraPose(slerp(np.eye(3), rel.r_delta, alpha), alpha * rel.t_dir)
    return poses


def _extrapolate(poses: Dict[int, CameraPose], frame: int) -> CameraPose:
    """Constant-velocity prediction of ``frame`` from the two preceding poses."""
    last = poses[frame - 1]
    if frame - 2 not in poses:
        return last
    r, t = _relative(poses[frame - 2], last)
    return CameraPose(r, t).compose(last)


def _anchor_depth(
    track: PointTrack,
    anchor: int,
    frames: Sequence[int],
    poses: Mapping[int, CameraPose],
    world_points: Mapping[int, np.ndarray],
    k: Intrinsics,
    default_depth: float,
) -> float:
    """Inverse depth of a track at its anchor: known world point, else triangulation, else default."""
    pose_a = poses[anchor]
    if track.track_id in world_points:
        z = pose_a.transform(world_points[track.track_id])[2]
        if np.isfinite(z) and z > 1e-6:
            return float(1.0 / z)

    kinv = k.inverse_matrix
    uv_a = track.position_at(anchor)
    ray_a = kinv @ np.array([uv_a[0], uv_a[1], 1.0])
    # widest baseline inside the window
    for other in sorted(frames, key=lambda f: -abs(f - anchor)):
        if other == anchor:
            break
        uv_b = track.position_at(other)
        if uv_b is None:
            continue
        r, t = _relative(pose_a, poses[other])
        if np.linalg.norm(t) < 1e-9:
            break
        ray_b = kinv @ np.array([uv_b[0], uv_b[1], 1.0])
        _, d1, d2 = triangulate_midpoint(ray_a[None], ray_b[None], r, t)
        if np.isfinite(d1[0]) and d1[0] > 1e-6 and d2[0] > 1e-6:
            return float(1.0 / d1[0])
        break
    return 1.0 / default_depth


def _window_tracks(
    tracks: Sequence[PointTrack],
    first: int,
    last: int,
    poses: Mapping[int, CameraPose],
    world_points: Mapping[int, np.ndarray],
    k: Intrinsics,
    default_depth: float,
) -> List[PointTrack]:
    frames = list(range(first, last + 1))
    out = []
    for track in tracks:
        if track.dynamic:
            continue
        vis = track.frames[track.visible_in(first, last)]
        if len(vis) < 2:
            continue
        anchor = int(vis[0])
        inv_depth = _anchor_depth(track, anchor, frames, poses, world_points, k, default_depth)
        out.append(replace(track, anchor_frame=anchor, inv_depth=inv_depth))
    return out


def solve_sequence(
    tracks: Sequence[PointTrack],
    masks: Mapping[int, Optional[BBox]],
    k: Intrinsics,
    cfg: Optional[BAConfig] = None,
    frame_range: Optional[Tuple[int, int]] = None,
    initial_poses: Optional[Sequence[CameraPose]] = None,
    use_masks: Optional[bool] = None,
    seed: int = 0,
) -> List[CameraPose]:
    """
    Camera trajectory of one shot by sliding-window bundle adjustment.

    Args:
        tracks: Static-scene point tracks (global frame indices)
        masks: Per-frame dynamic region; positions inside are hidden
        k: Shared intrinsics
        cfg: BA settings
        frame_range: Half-open (start, end); defaults to the span of the tracks
        initial_poses: Optional initialization, one per frame
        use_masks: Override cfg.use_masks (unmasked runs for comparison)
        seed: Seed of the two-view bootstrap

    Returns:
        One world-to-camera pose per frame; the first is identity

    Raises:
        UnderConstrainedError: a window cannot be solved, naming its frames
    """
    cfg = cfg or BAConfig()
    use_masks = cfg.use_masks if use_masks is None else use_masks
    if frame_range is None:
        spans = [t.frames for t in tracks if len(t.frames)]
        if not spans:
            raise UnderConstrainedError("No tracks to estimate cameras from")
        frame_range = (int(min(s.min() for s in spans)), int(max(s.max() for s in spans)) + 1)
    start, end = frame_range
    if end - start < 2:
        raise UnderConstrainedError("Camera estimation needs at least 2 frames", (start, end - 1))

    tracks = mask_tracks(tracks, masks if use_masks else {}, cfg.min_track_len)
    windows = _window_starts(start, end, cfg.window_size)
    logger.info(
        f"Solving frames {start}-{end - 1} with {len(windows)} window(s), "
        f"{sum(not t.dynamic for t in tracks)} static track(s), masks {'on' if use_masks else 'off'}"
    )

    if initial_poses is not None:
        if len(initial_poses) != end - start:
            raise UnderConstrainedError(
                f"{len(initial_poses)} initial pose(s) for {end - start} frame(s)", (start, end - 1)
            )
        init = {start + i: p for i, p in enumerate(initial_poses)}
    else:
        init = {}

    poses: Dict[int, CameraPose] = {}
    world_points: Dict[int, np.ndarray] = {}
    for w, (first, last) in enumerate(windows):
        if w == 0:
            guess = (
                {f: init[f] for f in range(first, last + 1)}
                if init
                else _bootstrap(tracks, k, first, last, seed)
            )
            # gauge: first pose of the sequence is identity
            if init:
                g0_inv = init[start].inverse()
                guess = {f: p.compose(g0_inv) for f, p in guess.items()}
            guess[start] = CameraPose.identity()
            n_fixed = 1
        else:
            guess = {f: poses[f] for f in range(first, last + 1) if f in poses}
            n_fixed = len(guess)
            for f in range(first, last + 1):
                if f not in guess:
                    guess[f] = init[f] if init else _extrapolate({**poses, **guess}, f)

        frames = list(range(first, last + 1))
        window_tracks = _window_tracks(tracks, first, last, guess, world_points, k, cfg.default_depth_m)
        window = BAWindow(
            frames=frames,
            window_size=cfg.window_size,
            poses=[guess[f] for f in frames],
            tracks=window_tracks,
            fixed_poses=n_fixed,
        )

        for _ in range(max(1, cfg.max_rounds)):
            before = window.residual_history[-1] if window.residual_history else None
            window = ba_solve(window, k, cfg)
            after = window.residual_history[-1]
            if after <= cfg.convergence_tol or (before is not None and before - after <= 1e-6 * before):
                break

        logger.debug(
            f"Window {first}-{last}: {len(window.tracks)} track(s), residual "
            f"{window.residual_history[0]:.4g} -> {window.residual_history[-1]:.4g}"
        )
        for f, pose in zip(frames, window.poses):
            poses[f] = pose
        kinv = k.inverse_matrix
        for track in window.tracks:
            uv = track.position_at(track.anchor_frame)
            pose_a = poses[track.anchor_frame]
            x_a = kinv @ np.array([uv[0], uv[1], 1.0]) / track.inv_depth
            world_points[track.track_id] = pose_a.r.T @ (x_a - pose_a.t)

    return [poses[f] for f in range(start, end)]
