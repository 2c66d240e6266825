"""
Two-view relative rotation from 2D correspondences.

Normalized eight-point algorithm with rank-2 enforcement, essential-matrix
decomposition with a cheirality test, and a seeded RANSAC wrapper. Pose
convention: x2 = R·x1 + t, so s2ᵀ F s1 = 0 and E = [t]ₓ R.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import (
    CheiralityError,
    DegenerateConfigurationError,
    InsufficientDataError,
    ShapeMismatchError,
)
from src.geometry.camera import Intrinsics
from src.geometry.rotations import hat
from src.shots.detector import Keypoints2D

logger = logging.getLogger(__name__)

MIN_CORRESPONDENCES = 8
MAX_CONDITION = 1e12

# Pi/2 rotation about z used to build the candidate rotations
_W = np.array([
    [0.0, -1.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
])


@dataclass
class CorrespondenceSet:
    """Index-matched pixel coordinates in two views."""
    s1: np.ndarray
    s2: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        self.s1 = np.asarray(self.s1, dtype=float).reshape(-1, 2)
        self.s2 = np.asarray(self.s2, dtype=float).reshape(-1, 2)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if not (len(self.s1) == len(self.s2) == len(self.visible)):
            raise ShapeMismatchError(
                f"Correspondence lengths differ: {len(self.s1)}, {len(self.s2)}, {len(self.visible)}"
            )

    def __len__(self) -> int:
        return len(self.s1)

    @classmethod
    def all_visible(cls, s1: np.ndarray, s2: np.ndarray) -> "CorrespondenceSet":
        s1 = np.asarray(s1, dtype=float).reshape(-1, 2)
        return cls(s1, s2, np.ones(len(s1), dtype=bool))

    @property
    def visible_count(self) -> int:
        return int(self.visible.sum())

    def subset(self, mask: np.ndarray) -> "CorrespondenceSet":
        return CorrespondenceSet(self.s1[mask], self.s2[mask], self.visible[mask])


@dataclass
class FundamentalMatrix:
    """Rank-2, unit Frobenius norm."""
    f: np.ndarray


@dataclass
class EssentialMatrix:
    """Singular values (1, 1, 0)."""
    e: np.ndarray


@dataclass
class RelativePose:
    """Rotation and unit translation direction of view 2 relative to view 1."""
    r_delta: np.ndarray
    t_dir: np.ndarray
    inlier_count: int
    inlier_mask: np.ndarray

    @classmethod
    def identity(cls, n: int = 0) -> "RelativePose":
        return cls(np.eye(3), np.array([0.0, 0.0, 1.0]), 0, np.zeros(n, dtype=bool))


def _homogeneous(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.ones((len(points), 1))])


def _hartley_transform(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with RMS distance √2."""
    centroid = points.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((points - centroid) ** 2, axis=1)))
    if rms < 1e-12:
        raise DegenerateConfigurationError("All correspondences coincide")
    s = math.sqrt(2.0) / rms
    return np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _sign_normalize(m: np.ndarray) -> np.ndarray:
    """Scale to unit Frobenius norm with the largest-magnitude entry positive."""
    m = m / np.linalg.norm(m)
    flat = m.reshape(-1)
    if flat[int(np.argmax(np.abs(flat)))] < 0:
        m = -m
    return m


def eight_point(c: CorrespondenceSet, k: Optional[Intrinsics] = None) -> FundamentalMatrix:
    """
    Normalized eight-point estimate of the fundamental matrix.

    Builds the N×9 design matrix from Hartley-normalized visible pairs, takes
    the last right-singular vector, enforces rank 2 by zeroing σ₃ and
    denormalizes. ``k`` is accepted for interface symmetry with the other
    stages; F is estimated in pixel coordinates.

    Args:
        c: Correspondences; only visible pairs are used
        k: Camera intrinsics (unused)

    Returns:
        FundamentalMatrix with ‖F‖_F = 1

    Raises:
        InsufficientDataError: fewer than 8 visible pairs
        DegenerateConfigurationError: design matrix condition number above 1e12
    """
    mask = c.visible
    if int(mask.sum()) < MIN_CORRESPONDENCES:
        raise InsufficientDataError(
            f"Eight-point needs at least {MIN_CORRESPONDENCES} visible pairs, got {int(mask.sum())}"
        )
    p1, p2 = c.s1[mask], c.s2[mask]
    t1, t2 = _hartley_transform(p1), _hartley_transform(p2)
    n1 = _homogeneous(p1) @ t1.T
    n2 = _homogeneous(p2) @ t2.T

    u1, v1 = n1[:, 0], n1[:, 1]
    u2, v2 = n2[:, 0], n2[:, 1]
    a = np.column_stack([
        u2 * u1, u2 * v1, u2,
        v2 * u1, v2 * v1, v2,
        u1, v1, np.ones(len(n1)),
    ])
    _, s, vt = np.linalg.svd(a)
    # s has min(N, 9) entries; the 8th is the smallest non-null one
    if s[7] <= s[0] / MAX_CONDITION:
        raise DegenerateConfigurationError("Correspondences are degenerate (design matrix rank < 8)")

    f_norm = vt[-1].reshape(3, 3)
    u, sf, vtf = np.linalg.svd(f_norm)
    sf[2] = 0.0
    f_norm = u @ np.diag(sf) @ vtf

    f = t2.T @ f_norm @ t1
    return FundamentalMatrix(_sign_normalize(f))


def to_essential(f: FundamentalMatrix, k: Intrinsics) -> EssentialMatrix:
    """E = KᵀFK projected onto the essential manifold (singular values 1, 1, 0)."""
    km = k.matrix
    e = km.T @ f.f @ km
    u, _, vt = np.linalg.svd(e)
    e = u @ np.diag([1.0, 1.0, 0.0]) @ vt
    return EssentialMatrix(_sign_normalize(e) * math.sqrt(2.0))


def essential_from_pose(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """E = [t]ₓ R."""
    return hat(t) @ r


def _candidate_poses(e: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    u, _, vt = np.linalg.svd(e)
    if np.linalg.det(u) < 0:
        u[:, -1] *= -1
    if np.linalg.det(vt) < 0:
        vt[-1, :] *= -1
    r1 = u @ _W @ vt
    r2 = u @ _W.T @ vt
    t = u[:, 2]
    return [(r1, t), (r1, -t), (r2, t), (r2, -t)]


def triangulate_midpoint(
    rays1: np.ndarray, rays2: np.ndarray, r: np.ndarray, t: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Midpoint triangulation in the first camera's frame.

    Args:
        rays1: (N, 3) normalized rays in view 1
        rays2: (N, 3) normalized rays in view 2
        r, t: view-2 pose relative to view 1 (x2 = r·x1 + t)

    Returns:
        (points (N, 3) in view 1, depth in view 1, depth in view 2)
    """
    c2 = -r.T @ t
    d1 = rays1
    d2 = rays2 @ r  # rows are rᵀ·ray
    a11 = np.sum(d1 * d1, axis=1)
    a12 = np.sum(d1 * d2, axis=1)
    a22 = np.sum(d2 * d2, axis=1)
    b1 = d1 @ c2
    b2 = d2 @ c2
    det = a11 * a22 - a12 * a12
    det = np.where(np.abs(det) < 1e-15, np.nan, det)
    lam1 = (b1 * a22 - b2 * a12) / det
    lam2 = (b1 * a12 - b2 * a11) / det
    x1 = lam1[:, None] * d1
    x2 = c2 + lam2[:, None] * d2
    points = 0.5 * (x1 + x2)
    depth1 = points[:, 2]
    depth2 = (points @ r.T + t)[:, 2]
    return points, depth1, depth2


def decompose_essential(e: EssentialMatrix, c: CorrespondenceSet, k: Intrinsics) -> RelativePose:
    """
    Recover (R, t̂) from an essential matrix.

    Forms the four SVD candidates and keeps the one that places a strict
    majority of triangulated visible correspondences in front of both views.

    Raises:
        InsufficientDataError: no visible correspondence
        CheiralityError: no candidate achieves a positive-depth majority
    """
    mask = c.visible
    n = int(mask.sum())
    if n < 1:
        raise InsufficientDataError("Cheirality test needs at least one visible correspondence")
    kinv = k.inverse_matrix
    rays1 = _homogeneous(c.s1[mask]) @ kinv.T
    rays2 = _homogeneous(c.s2[mask]) @ kinv.T

    best = None
    best_front = None
    for r, t in _candidate_poses(e.e):
        _, d1, d2 = triangulate_midpoint(rays1, rays2, r, t)
        front = np.nan_to_num(d1) > 0
        front &= np.nan_to_num(d2) > 0
        if best is None or front.sum() > best_front.sum():
            best, best_front = (r, t), front

    if 2 * int(best_front.sum()) <= n:
        raise CheiralityError(
            f"No decomposition puts a majority of points in front of both views "
            f"({int(best_front.sum())}/{n})"
        )
    r, t = best
    inliers = np.zeros(len(c), dtype=bool)
    inliers[np.flatnonzero(mask)[best_front]] = True
    return RelativePose(
        r_delta=r,
        t_dir=t / np.linalg.norm(t),
        inlier_count=int(inliers.sum()),
        inlier_mask=inliers,
    )


def symmetric_epipolar_distance(f: np.ndarray, s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """Mean of the point-to-epipolar-line distances in both images (pixels)."""
    x1 = _homogeneous(np.asarray(s1, dtype=float).reshape(-1, 2))
    x2 = _homogeneous(np.asarray(s2, dtype=float).reshape(-1, 2))
    l2 = x1 @ f.T  # epipolar lines in image 2
    l1 = x2 @ f    # epipolar lines in image 1
    r = np.abs(np.sum(x2 * l2, axis=1))
    n2 = np.maximum(np.hypot(l2[:, 0], l2[:, 1]), 1e-12)
    n1 = np.maximum(np.hypot(l1[:, 0], l1[:, 1]), 1e-12)
    return 0.5 * (r / n1 + r / n2)


def _required_iterations(inlier_ratio: float, confidence: float, cap: int) -> int:
    if inlier_ratio >= 1.0:
        return 1
    p_good = inlier_ratio ** MIN_CORRESPONDENCES
    if p_good <= 0.0:
        return cap
    needed = math.log(1.0 - confidence) / math.log(1.0 - p_good)
    return min(cap, max(1, int(math.ceil(needed))))


def ransac_relative_pose(
    c: CorrespondenceSet,
    k: Intrinsics,
    iterations: int = 500,
    inlier_threshold_px: float = 2.0,
    seed: int = 0,
    confidence: float = 0.999,
) -> RelativePose:
    """
    Robust relative pose from index-matched keypoints.

    Invisible pairs are filtered first. Each iteration samples 8 visible
    pairs, fits F, and counts inliers by symmetric epipolar distance; the
    best model (ties keep the earliest iteration) is refit on all its inliers.
    The iteration count shrinks adaptively once the inlier ratio is known.
    Deterministic given ``seed``.

    Args:
        c: Correspondences across the transition
        k: Shared intrinsics
        iterations: Maximum sample count
        inlier_threshold_px: Symmetric epipolar distance threshold
        seed: RNG seed
        confidence: Probability of drawing one all-inlier sample

    Returns:
        RelativePose whose inlier_mask indexes the full correspondence set

    Raises:
        InsufficientDataError: fewer than 8 visible pairs
        DegenerateConfigurationError: every sample was degenerate
    """
    visible_idx = np.flatnonzero(c.visible)
    n = len(visible_idx)
    if n < MIN_CORRESPONDENCES:
        raise InsufficientDataError(f"RANSAC needs at least {MIN_CORRESPONDENCES} visible pairs, got {n}")
    s1, s2 = c.s1[visible_idx], c.s2[visible_idx]
    rng = np.random.default_rng(seed)

    best_inliers: Optional[np.ndarray] = None
    best_pose: Optional[RelativePose] = None
    budget = iterations
    it = 0
    while it < budget:
        sample = rng.choice(n, size=MIN_CORRESPONDENCES, replace=False)
        it += 1
        sample_set = CorrespondenceSet.all_visible(s1[sample], s2[sample])
        try:
            f = eight_point(sample_set, k)
        except DegenerateConfigurationError:
            continue
        inliers = symmetric_epipolar_distance(f.f, s1, s2) < inlier_threshold_px
        if best_inliers is not None and inliers.sum() <= best_inliers.sum():
            continue
        try:
            pose = decompose_essential(to_essential(f, k), CorrespondenceSet.all_visible(s1[inliers], s2[inliers]), k)
        except (CheiralityError, InsufficientDataError):
            continue
        best_inliers, best_pose = inliers, pose
        budget = max(it, _required_iterations(inliers.mean(), confidence, iterations))

    if best_pose is None:
        raise DegenerateConfigurationError(f"All {it} RANSAC samples were degenerate")

    # refit on all inliers
    if best_inliers.sum() >= MIN_CORRESPONDENCES:
        try:
            inlier_set = CorrespondenceSet.all_visible(s1[best_inliers], s2[best_inliers])
            f = eight_point(inlier_set, k)
            refit_inliers = symmetric_epipolar_distance(f.f, s1, s2) < inlier_threshold_px
            if refit_inliers.sum() >= best_inliers.sum():
                refit_set = CorrespondenceSet.all_visible(s1[refit_inliers], s2[refit_inliers])
                best_pose = decompose_essential(to_essential(f, k), refit_set, k)
                best_inliers = refit_inliers
        except (DegenerateConfigurationError, CheiralityError, InsufficientDataError) as exc:
            logger.debug(f"Refit on inliers failed, keeping sample model: {exc}")

    mask = np.zeros(len(c), dtype=bool)
    mask[visible_idx[best_inliers]] = True
    logger.debug(f"RANSAC kept {int(mask.sum())}/{n} inliers after {it} iteration(s)")
    return RelativePose(
        r_delta=best_pose.r_delta,
        t_dir=best_pose.t_dir,
        inlier_count=int(mask.sum()),
        inlier_mask=mask,
    )


def transition_correspondences(
    outgoing: Sequence[Keypoints2D],
    incoming: Keypoints2D,
    extrapolate: bool = True,
) -> CorrespondenceSet:
    """
    Index-matched keypoints across a shot transition.

    Args:
        outgoing: Keypoints of the last frames before the cut, oldest first
        incoming: Keypoints of the first frame after the cut
        extrapolate: Advance the last outgoing keypoints one frame by their
            2D velocity so both views see the body at the same instant

    Returns:
        CorrespondenceSet visible where the joint is visible on both sides
    """
    if not outgoing:
        raise InsufficientDataError("No keypoints before the transition")
    last = outgoing[-1]
    if last.joint_count != incoming.joint_count:
        raise ShapeMismatchError(f"Joint counts differ: {last.joint_count} vs {incoming.joint_count}")
    s1 = last.uv.copy()
    visible = last.visible & incoming.visible
    if extrapolate and len(outgoing) >= 2:
        prev = outgoing[-2]
        moving = last.visible & prev.visible
        s1[moving] += last.uv[moving] - prev.uv[moving]
    return CorrespondenceSet(s1, incoming.uv, visible)
