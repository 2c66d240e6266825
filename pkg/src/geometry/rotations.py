"""Rotation representations used throughout the pipeline.

Rotations are stored as 3x3 matrices; axis-angle vectors appear only at I/O
boundaries. World convention: right-handed, Y-up, gravity along -Y.
"""

from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from src.errors import NotARotationError

# aliases for readability in signatures
AxisAngle = np.ndarray
RotationMatrix = np.ndarray

ORTHONORMAL_TOL = 1e-6
_PI_TOL = 1e-9


def hat(v: Sequence[float]) -> np.ndarray:
    """Skew-symmetric cross-product matrix of a 3-vector."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def is_rotation(r: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    """Check rᵀr = I and det(r) = +1 within ``tol``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


def axis_angle_to_matrix(a: Sequence[float]) -> RotationMatrix:
    """
    Rodrigues map from an axis-angle vector to a rotation matrix.

    Args:
        a: 3-vector, angle (radians) times unit axis; zero maps to identity

    Returns:
        3x3 rotation matrix
    """
    v = np.asarray(a, dtype=float).reshape(3)
    return Rotation.from_rotvec(v).as_matrix()


def matrix_to_axis_angle(r: np.ndarray) -> AxisAngle:
    """
    Inverse Rodrigues map with angle in [0, π].

    At angle π the axis sign is fixed so that its largest-magnitude component
    is positive.

    Raises:
        NotARotationError: if ``r`` is not orthonormal within 1e-6
    """
    r = np.asarray(r, dtype=float)
    if not is_rotation(r):
        raise NotARotationError("Matrix is not a rotation (orthonormality violated beyond 1e-6)")
    v = Rotation.from_matrix(r).as_rotvec()
    angle = float(np.linalg.norm(v))
    if angle > np.pi - _PI_TOL:
        axis = v / angle
        if axis[int(np.argmax(np.abs(axis)))] < 0:
            v = -axis * angle
    return v


def axis_angles_to_matrices(a: np.ndarray) -> np.ndarray:
    """Batched :func:`axis_angle_to_matrix` over the last axis (..., 3) -> (..., 3, 3)."""
    a = np.asarray(a, dtype=float)
    flat = a.reshape(-1, 3)
    mats = Rotation.from_rotvec(flat).as_matrix()
    return mats.reshape(a.shape[:-1] + (3, 3))


def matrices_to_axis_angles(r: np.ndarray) -> np.ndarray:
    """Batched :func:`matrix_to_axis_angle` (..., 3, 3) -> (..., 3)."""
    r = np.asarray(r, dtype=float)
    flat = r.reshape(-1, 3, 3)
    out = np.stack([matrix_to_axis_angle(m) for m in flat]) if len(flat) else np.zeros((0, 3))
    return out.reshape(r.shape[:-2] + (3,))


def yaw_matrix(psi: float) -> RotationMatrix:
    """Rotation by ``psi`` radians about +Y."""
    c, s = np.cos(psi), np.sin(psi)
    return np.array([
        [c, 0.0, s],
        [0.0, 1.0, 0.0],
        [-s, 0.0, c],
    ])


def pitch_matrix(theta: float) -> RotationMatrix:
    """Rotation by ``theta`` radians about +X."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([
        [1.0, 0.0, 0.0],
        [0.0, c, -s],
        [0.0, s, c],
    ])


def yaw_angle(r: np.ndarray) -> float:
    """Heading ψ = atan2(m02, m22) of a rotation under the Y-up convention."""
    r = np.asarray(r, dtype=float)
    return float(np.arctan2(r[0, 2], r[2, 2]))


def yaw_component(r: np.ndarray) -> AxisAngle:
    """
    Pure Y-axis rotation closest to ``r``.

    Gimbal-degenerate inputs (pitch near ±π/2) resolve through atan2.

    Returns:
        Axis-angle (0, ψ, 0)
    """
    return np.array([0.0, yaw_angle(r), 0.0])


def geodesic_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle in radians of r1ᵀ r2."""
    rel = np.asarray(r1, dtype=float).T @ np.asarray(r2, dtype=float)
    return float(Rotation.from_matrix(rel).magnitude())


def rotation_power(r: np.ndarray, alpha: float) -> RotationMatrix:
    """r^alpha along the geodesic from identity."""
    return Rotation.from_rotvec(alpha * Rotation.from_matrix(r).as_rotvec()).as_matrix()


def slerp(r0: np.ndarray, r1: np.ndarray, alpha: float) -> RotationMatrix:
    """Spherical interpolation from ``r0`` (alpha=0) to ``r1`` (alpha=1)."""
    r0 = np.asarray(r0, dtype=float)
    return r0 @ rotation_power(r0.T @ np.asarray(r1, dtype=float), alpha)


def random_rotation(rng: np.random.Generator) -> RotationMatrix:
    """Uniformly distributed rotation drawn from ``rng``."""
    q = rng.normal(size=4)
    return Rotation.from_quat(q / np.linalg.norm(q)).as_matrix()


def rotation_between(a: Sequence[float], b: Sequence[float]) -> RotationMatrix:
    """Smallest rotation taking direction ``a`` onto direction ``b``."""
    a = np.asarray(a, dtype=float).reshape(3)
    b = np.asarray(b, dtype=float).reshape(3)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    axis = np.cross(a, b)
    s, c = float(np.linalg.norm(axis)), float(a @ b)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # antiparallel: half turn about any perpendicular axis
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        return Rotation.from_rotvec(np.pi * perp / np.linalg.norm(perp)).as_matrix()
    return Rotation.from_rotvec(axis / s * np.arctan2(s, c)).as_matrix()
