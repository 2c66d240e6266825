"""
Masked windowed bundle adjustment over static-scene point tracks.

Each track is parameterized by its inverse depth along the anchor-frame ray.
Poses are world-to-camera and are updated on the left: R <- exp(ω)·R,
t <- t + δt. The gauge is fixed by holding the leading pose(s) and, when
only one pose is held, the inverse depth of a reference track.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from src.config import BAConfig
from src.errors import UnderConstrainedError
from src.geometry.camera import CameraPose, Intrinsics
from src.geometry.rotations import axis_angle_to_matrix
from src.shots.detector import BBox

logger = logging.getLogger(__name__)

MIN_TRACKS = 6
MIN_CONFIDENCE_FRAMES = 3
_MAD_TO_SIGMA = 1.4826
_WEIGHT_FLOOR = 1e-3
_MIN_DEPTH = 1e-9


@dataclass
class PointTrack:
    """A tracked scene point: sparse per-frame pixel positions with visibility."""
    track_id: int
    frames: np.ndarray
    positions: np.ndarray
    visible: np.ndarray
    anchor_frame: int = -1
    inv_depth: float = 0.2
    confidence: float = 1.0
    dynamic: bool = False

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=int).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if self.anchor_frame < 0 and len(self.frames):
            vis = self.frames[self.visible]
            self.anchor_frame = int(vis[0]) if len(vis) else int(self.frames[0])

    def visible_frames(self) -> np.ndarray:
        return self.frames[self.visible]

    def position_at(self, frame: int) -> Optional[np.ndarray]:
        """Pixel position if the track is visible at ``frame``."""
        idx = np.searchsorted(self.frames, frame)
        if idx < len(self.frames) and self.frames[idx] == frame and self.visible[idx]:
            return self.positions[idx]
        return None

    def visible_in(self, start: int, end: int) -> np.ndarray:
        """Boolean mask of entries visible within the inclusive frame range."""
        return self.visible & (self.frames >= start) & (self.frames <= end)


@dataclass
class BAWindow:
    """
    Poses and tracks for one bundle adjustment window.

    Attributes:
        frames: Contiguous global frame indices
        window_size: Maximum anchor-to-frame distance S_BA
        poses: World-to-camera pose per frame (optimized)
        tracks: Tracks anchored inside the window
        weights: (anchor_frame, frame, track_id) -> normalized weight
        fixed_poses: Number of leading poses held constant
        fixed_track: Track whose inverse depth is held (scale gauge)
        residual_history: Weighted squared residual after each accepted step
    """
    frames: List[int]
    window_size: int
    poses: List[CameraPose]
    tracks: List[PointTrack]
    weights: Optional[Dict[Tuple[int, int, int], float]] = None
    fixed_poses: int = 1
    fixed_track: Optional[int] = None
    residual_history: List[float] = field(default_factory=list)

    @property
    def frame_range(self) -> Tuple[int, int]:
        return self.frames[0], self.frames[-1]


def mask_tracks(
    tracks: Sequence[PointTrack],
    masks: Mapping[int, Optional[BBox]],
    min_track_len: int = 5,
) -> List[PointTrack]:
    """
    Hide track positions that fall inside the per-frame dynamic mask.

    Tracks left with fewer than ``min_track_len`` visible frames are marked
    dynamic and excluded from adjustment.
    """
    out = []
    hidden_total = 0
    for track in tracks:
        visible = track.visible.copy()
        for i, frame in enumerate(track.frames):
            box = masks.get(int(frame))
            if box is not None and visible[i]:
                u, v = track.positions[i]
                if box.contains(u, v):
                    visible[i] = False
        hidden_total += int(track.visible.sum() - visible.sum())
        dynamic = track.dynamic or int(visible.sum()) < min_track_len
        out.append(replace(track, visible=visible, dynamic=dynamic))
    n_dynamic = sum(t.dynamic for t in out)
    logger.debug(f"Masked {hidden_total} observation(s); {n_dynamic}/{len(out)} track(s) dynamic")
    return out


def track_confidence(
    track: PointTrack,
    window: Tuple[int, int],
    scale_floor_px: float = 1.0,
) -> float:
    """
    Un-normalized confidence of a track inside a frame window.

    The track's second differences (its deviation from locally linear motion)
    are modeled by a per-coordinate Cauchy distribution whose location is the
    median and whose scale is the median absolute deviation (floored). The
    confidence is the mean density of the samples relative to the mode.

    Returns:
        Value in [0, 1]; 0 when fewer than 3 frames are visible
    """
    mask = track.visible_in(*window)
    if mask.sum() < MIN_CONFIDENCE_FRAMES:
        return 0.0
    frames = track.frames[mask]
    pos = track.positions[mask]
    # second differences over runs of consecutive frames
    consecutive = (np.diff(frames[:-1]) == 1) & (np.diff(frames[1:]) == 1)
    accel = pos[2:] - 2.0 * pos[1:-1] + pos[:-2]
    accel = accel[consecutive]
    if len(accel) == 0:
        return 0.0
    loc = np.median(accel, axis=0)
    scale = np.maximum(_MAD_TO_SIGMA * np.median(np.abs(accel - loc), axis=0), scale_floor_px)
    density = np.prod(1.0 / (1.0 + ((accel - loc) / scale) ** 2), axis=1)
    return float(np.mean(density))


def window_confidences(
    tracks: Sequence[PointTrack],
    window: Tuple[int, int],
    scale_floor_px: float = 1.0,
) -> Dict[int, float]:
    """Track confidences normalized so the best non-dynamic track in the window scores 1."""
    raw = {t.track_id: track_confidence(t, window, scale_floor_px) for t in tracks if not t.dynamic}
    top = max(raw.values(), default=0.0)
    if top <= 0.0:
        return {tid: 0.0 for tid in raw}
    return {tid: value / top for tid, value in raw.items()}


@dataclass
class _Problem:
    """Flattened observations of a window."""
    anchor: np.ndarray      # window index of anchor pose per observation
    frame: np.ndarray       # window index of observing pose
    track: np.ndarray       # index into the active track list
    ray: np.ndarray         # K⁻¹[u, v, 1] at the anchor
    uv: np.ndarray          # observed pixels
    weight: np.ndarray
    track_ids: List[int]


def compute_weights(window: BAWindow, cfg: BAConfig) -> Dict[Tuple[int, int, int], float]:
    """
    Per-edge normalized weights from visibility and track confidence.

    Tracks under ``cfg.confidence_threshold`` are scaled by
    ``cfg.low_confidence_scale`` before normalization.
    """
    start, end = window.frame_range
    conf = window_confidences(window.tracks, (start, end), cfg.cauchy_scale_floor_px)
    raw: Dict[Tuple[int, int], Dict[int, float]] = {}
    for track in window.tracks:
        if track.dynamic or track.track_id not in conf:
            continue
        a = track.anchor_frame
        if track.position_at(a) is None or not start <= a <= end:
            continue
        c = max(conf[track.track_id], _WEIGHT_FLOOR)
        if conf[track.track_id] < cfg.confidence_threshold:
            c *= cfg.low_confidence_scale
        for frame in track.frames[track.visible_in(start, end)]:
            frame = int(frame)
            if frame == a or abs(frame - a) > window.window_size:
                continue
            raw.setdefault((a, frame), {})[track.track_id] = c
    weights = {}
    for (a, j), per_track in raw.items():
        total = sum(per_track.values())
        for tid, c in per_track.items():
            weights[(a, j, tid)] = c / total
    return weights


def _build_problem(window: BAWindow, k: Intrinsics, weights: Mapping[Tuple[int, int, int], float]) -> _Problem:
    index = {f: i for i, f in enumerate(window.frames)}
    kinv = k.inverse_matrix
    anchors, frames, tracks, rays, uvs, ws = [], [], [], [], [], []
    track_ids: List[int] = []
    for track in window.tracks:
        if track.dynamic:
            continue
        a = track.anchor_frame
        anchor_uv = track.position_at(a)
        if anchor_uv is None or a not in index:
            continue
        rows = []
        for i in np.flatnonzero(track.visible_in(*window.frame_range)):
            frame = int(track.frames[i])
            w = weights.get((a, frame, track.track_id))
            if w is None or w <= 0.0:
                continue
            rows.append((index[frame], track.positions[i], w))
        if not rows:
            continue
        col = len(track_ids)
        track_ids.append(track.track_id)
        ray = kinv @ np.array([anchor_uv[0], anchor_uv[1], 1.0])
        for j, uv, w in rows:
            anchors.append(index[a])
            frames.append(j)
            tracks.append(col)
            rays.append(ray)
            uvs.append(uv)
            ws.append(w)
    return _Problem(
        anchor=np.asarray(anchors, dtype=int),
        frame=np.asarray(frames, dtype=int),
        track=np.asarray(tracks, dtype=int),
        ray=np.asarray(rays, dtype=float).reshape(-1, 3),
        uv=np.asarray(uvs, dtype=float).reshape(-1, 2),
        weight=np.asarray(ws, dtype=float),
        track_ids=track_ids,
    )


def _evaluate(
    k: Intrinsics,
    rot: np.ndarray,
    trans: np.ndarray,
    inv_depth: np.ndarray,
    prob: _Problem,
    with_jacobian: bool = True,
) -> Tuple[np.ndarray, np.ndarray, Optional[Dict[str, np.ndarray]]]:
    """
    Residuals (M, 2), camera-frame depths (M,) and Jacobian blocks.

    Blocks: "rot_j", "trans_j", "rot_a", "trans_a" (M, 2, 3) and "depth" (M, 2).
    """
    ra, ta = rot[prob.anchor], trans[prob.anchor]
    rj, tj = rot[prob.frame], trans[prob.frame]
    d = inv_depth[prob.track]
    xa = prob.ray / d[:, None]
    rel = xa - ta
    p_world = np.einsum("mji,mj->mi", ra, rel)
    rj_p = np.einsum("mij,mj->mi", rj, p_world)
    xj = rj_p + tj
    z = xj[:, 2]
    safe_z = np.where(z > _MIN_DEPTH, z, np.nan)
    u = k.fx * xj[:, 0] / safe_z + k.ox
    v = k.fy * xj[:, 1] / safe_z + k.oy
    residual = np.column_stack([u, v]) - prob.uv
    if not with_jacobian:
        return residual, z, None

    m = len(xj)
    jp = np.zeros((m, 2, 3))
    jp[:, 0, 0] = k.fx / safe_z
    jp[:, 0, 2] = -k.fx * xj[:, 0] / safe_z ** 2
    jp[:, 1, 1] = k.fy / safe_z
    jp[:, 1, 2] = -k.fy * xj[:, 1] / safe_z ** 2

    rj_ra_t = np.einsum("mij,mkj->mik", rj, ra)
    blocks = {
        "rot_j": -np.einsum("mij,mjk->mik", jp, _hat_batch(rj_p)),
        "trans_j": jp,
        "rot_a": np.einsum("mij,mjk,mkl->mil", jp, rj_ra_t, _hat_batch(rel)),
        "trans_a": -np.einsum("mij,mjk->mik", jp, rj_ra_t),
        "depth": np.einsum("mij,mjk,mk->mi", jp, rj_ra_t, -xa / d[:, None]),
    }
    return residual, z, blocks


def _hat_batch(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def reprojection_residual(
    k: Intrinsics,
    anchor_pose: CameraPose,
    pose: CameraPose,
    anchor_uv: np.ndarray,
    inv_depth: float,
    uv: np.ndarray,
) -> np.ndarray:
    """Pixel residual of one track observation reprojected from its anchor frame."""
    prob = _single_problem(k, anchor_uv, uv)
    rot = np.stack([anchor_pose.r, pose.r])
    trans = np.stack([anchor_pose.t, pose.t])
    residual, _, _ = _evaluate(k, rot, trans, np.array([inv_depth]), prob, with_jacobian=False)
    return residual[0]


def reprojection_jacobian(
    k: Intrinsics,
    anchor_pose: CameraPose,
    pose: CameraPose,
    anchor_uv: np.ndarray,
    inv_depth: float,
    uv: np.ndarray,
) -> Dict[str, np.ndarray]:
    """
    Analytic Jacobian of :func:`reprojection_residual`.

    Returns:
        "anchor" (2, 6) and "frame" (2, 6) blocks ordered (ω, t), and "depth" (2,)
    """
    prob = _single_problem(k, anchor_uv, uv)
    rot = np.stack([anchor_pose.r, pose.r])
    trans = np.stack([anchor_pose.t, pose.t])
    _, _, blocks = _evaluate(k, rot, trans, np.array([inv_depth]), prob)
    return {
        "anchor": np.hstack([blocks["rot_a"][0], blocks["trans_a"][0]]),
        "frame": np.hstack([blocks["rot_j"][0], blocks["trans_j"][0]]),
        "depth": blocks["depth"][0],
    }


def _single_problem(k: Intrinsics, anchor_uv: np.ndarray, uv: np.ndarray) -> _Problem:
    ray = k.inverse_matrix @ np.array([anchor_uv[0], anchor_uv[1], 1.0])
    return _Problem(
        anchor=np.array([0]), frame=np.array([1]), track=np.array([0]),
        ray=ray.reshape(1, 3), uv=np.asarray(uv, dtype=float).reshape(1, 2),
        weight=np.ones(1), track_ids=[0],
    )


def _weighted_cost(residual: np.ndarray, z: np.ndarray, weight: np.ndarray) -> float:
    if np.any(~(z > _MIN_DEPTH)) or not np.all(np.isfinite(residual)):
        return float("inf")
    return float(np.sum(weight * np.sum(residual ** 2, axis=1)))


def _choose_reference_track(window: BAWindow, prob: _Problem) -> Optional[int]:
    """Track with the most observations (lowest id on ties)."""
    if len(prob.track) == 0:
        return None
    counts = np.bincount(prob.track, minlength=len(prob.track_ids))
    order = sorted(range(len(counts)), key=lambda i: (-counts[i], prob.track_ids[i]))
    return prob.track_ids[order[0]]


def ba_solve(window: BAWindow, k: Intrinsics, cfg: Optional[BAConfig] = None) -> BAWindow:
    """
    Damped Gauss-Newton refinement of poses and inverse depths.

    Runs exactly ``cfg.gn_iters`` iterations. A step that would raise the
    weighted residual (or push a point behind a camera) is rejected and the
    damping is multiplied by 10.

    Args:
        window: Window with initial poses and anchored tracks
        k: Intrinsics
        cfg: Solver settings

    Returns:
        New BAWindow with refined poses/inverse depths and residual_history

    Raises:
        UnderConstrainedError: too few frames/tracks or a parameter without constraints
    """
    cfg = cfg or BAConfig()
    frame_range = window.frame_range
    if len(window.frames) < 2:
        raise UnderConstrainedError("Bundle adjustment needs at least 2 frames", frame_range)

    weights = window.weights if window.weights is not None else compute_weights(window, cfg)
    prob = _build_problem(window, k, weights)
    if len(prob.track_ids) < MIN_TRACKS:
        raise UnderConstrainedError(
            f"Only {len(prob.track_ids)} usable static track(s), need {MIN_TRACKS}", frame_range
        )

    n_poses = len(window.frames)
    n_fixed = max(1, min(window.fixed_poses, n_poses))
    fixed_track = window.fixed_track
    if n_fixed == 1 and fixed_track is None:
        fixed_track = _choose_reference_track(window, prob)

    # parameter layout: free poses (6 each) then free inverse depths
    pose_col = np.full(n_poses, -1)
    pose_col[n_fixed:] = 6 * np.arange(n_poses - n_fixed)
    n_pose_params = 6 * (n_poses - n_fixed)
    depth_col = np.full(len(prob.track_ids), -1)
    col = n_pose_params
    for i, tid in enumerate(prob.track_ids):
        if tid != fixed_track:
            depth_col[i] = col
            col += 1
    n_params = col

    if 2 * len(prob.anchor) < n_params:
        raise UnderConstrainedError(
            f"{2 * len(prob.anchor)} residual(s) for {n_params} parameter(s)", frame_range
        )

    by_id = {t.track_id: t for t in window.tracks}
    rot = np.stack([p.r for p in window.poses])
    trans = np.stack([p.t for p in window.poses])
    inv_depth = np.array([by_id[tid].inv_depth for tid in prob.track_ids], dtype=float)

    residual, z, _ = _evaluate(k, rot, trans, inv_depth, prob, with_jacobian=False)
    cost = _weighted_cost(residual, z, prob.weight)
    if not np.isfinite(cost):
        raise UnderConstrainedError("Initial estimate places points behind a camera", frame_range)

    history = list(window.residual_history) or [cost]
    damping = cfg.damping
    sqrt_w = np.sqrt(prob.weight)
    m = len(prob.anchor)
    rows = np.arange(m)

    for iteration in range(cfg.gn_iters):
        residual, z, blocks = _evaluate(k, rot, trans, inv_depth, prob)
        jac = np.zeros((m, 2, n_params))
        for pose_idx, rot_key, trans_key in ((prob.frame, "rot_j", "trans_j"), (prob.anchor, "rot_a", "trans_a")):
            cols = pose_col[pose_idx]
            free = cols >= 0
            if free.any():
                block = np.concatenate([blocks[rot_key], blocks[trans_key]], axis=2)[free]
                jac[rows[free][:, None], :, cols[free][:, None] + np.arange(6)] = block.transpose(0, 2, 1)
        dcols = depth_col[prob.track]
        free = dcols >= 0
        jac[rows[free], :, dcols[free]] = blocks["depth"][free]

        jw = (jac * sqrt_w[:, None, None]).reshape(2 * m, n_params)
        rw = (residual * sqrt_w[:, None]).reshape(2 * m)
        hessian = jw.T @ jw
        gradient = jw.T @ rw

        diag = np.diag(hessian)
        if np.any(diag[:n_pose_params] <= 0.0):
            raise UnderConstrainedError("A free pose has no constraining observation", frame_range)

        scale = np.maximum(diag, 1e-9 * max(float(diag.max()), 1e-12))
        try:
            factor = scipy.linalg.cho_factor(hessian + damping * np.diag(scale))
            step = -scipy.linalg.cho_solve(factor, gradient)
        except (np.linalg.LinAlgError, ValueError):
            raise UnderConstrainedError("Normal equations are rank-deficient", frame_range)

        new_rot, new_trans = rot.copy(), trans.copy()
        for i in range(n_fixed, n_poses):
            c = pose_col[i]
            new_rot[i] = axis_angle_to_matrix(step[c:c + 3]) @ rot[i]
            new_trans[i] = trans[i] + step[c + 3:c + 6]
        new_depth = inv_depth.copy()
        dfree = depth_col >= 0
        new_depth[dfree] += step[depth_col[dfree]]

        if np.any(new_depth <= 0.0):
            new_cost = float("inf")
        else:
            new_res, new_z, _ = _evaluate(k, new_rot, new_trans, new_depth, prob, with_jacobian=False)
            new_cost = _weighted_cost(new_res, new_z, prob.weight)

        if new_cost <= cost:
            rot, trans, inv_depth, cost = new_rot, new_trans, new_depth, new_cost
            history.append(cost)
            logger.debug(f"GN iter {iteration}: accepted, residual {cost:.6g}")
        else:
            damping *= 10.0
            logger.debug(f"GN iter {iteration}: rejected (residual {new_cost:.6g}), damping -> {damping:.3g}")

    depth_by_id = dict(zip(prob.track_ids, inv_depth))
    tracks = [
        replace(t, inv_depth=float(depth_by_id[t.track_id])) if t.track_id in depth_by_id else t
        for t in window.tracks
    ]
    poses = list(window.poses[:n_fixed]) + [
        CameraPose(_orthonormalize(rot[i]), trans[i]) for i in range(n_fixed, n_poses)
    ]
    return replace(
        window,
        poses=poses,
        tracks=tracks,
        weights=weights,
        fixed_track=fixed_track,
        residual_history=history,
    )


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out
