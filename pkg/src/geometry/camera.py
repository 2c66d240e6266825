"""Pinhole camera model: intrinsics, world-to-camera poses and projection."""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from src.errors import BehindCameraError, InputError
from src.geometry.rotations import is_rotation

MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Shared pinhole intrinsics for one video (pixels)."""
    fx: float
    fy: float
    ox: float
    oy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.ox],
            [0.0, self.fy, self.oy],
            [0.0, 0.0, 1.0],
        ])

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array([
            [1.0 / self.fx, 0.0, -self.ox / self.fx],
            [0.0, 1.0 / self.fy, -self.oy / self.fy],
            [0.0, 0.0, 1.0],
        ])

    @classmethod
    def from_image_size(cls, width: int, height: int) -> "Intrinsics":
        """Fallback when intrinsics are unknown: f = max(w, h), principal point at the center."""
        f = float(max(width, height))
        return cls(fx=f, fy=f, ox=width / 2.0, oy=height / 2.0)

    def to_dict(self) -> dict:
        return {"fx": float(self.fx), "fy": float(self.fy), "ox": float(self.ox), "oy": float(self.oy)}


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera transform x_cam = r · x_world + t (meters)."""
    r: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not is_rotation(r):
            raise InputError("CameraPose rotation is not a valid rotation matrix")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.r.T @ self.t

    def inverse(self) -> "CameraPose":
        """Camera-to-world transform as a pose object."""
        return CameraPose(self.r.T, -self.r.T @ self.t)

    def compose(self, other: "CameraPose") -> "CameraPose":
        """self ∘ other: apply ``other`` first."""
        return CameraPose(self.r @ other.r, self.r @ other.t + self.t)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """World points (..., 3) into the camera frame."""
        return np.asarray(points, dtype=float) @ self.r.T + self.t

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m


def project(k: Intrinsics, g: CameraPose, p_world: np.ndarray) -> np.ndarray:
    """
    Project one world point to pixels.

    Args:
        k: Camera intrinsics
        g: World-to-camera pose
        p_world: 3-vector in meters

    Returns:
        (u, v) in pixels

    Raises:
        BehindCameraError: if the camera-frame depth is <= 1e-9
    """
    x, y, z = g.transform(np.asarray(p_world, dtype=float).reshape(3))
    if z <= MIN_DEPTH:
        raise BehindCameraError(f"Point at depth {z:.3g} is behind the camera")
    return np.array([k.fx * x / z + k.ox, k.fy * y / z + k.oy])


def project_points(k: Intrinsics, g: CameraPose, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized projection that reports depth instead of raising.

    Returns:
        (uv (N, 2), depth (N,)); uv rows for depth <= 1e-9 are NaN
    """
    cam = g.transform(np.asarray(points, dtype=float).reshape(-1, 3))
    depth = cam[:, 2]
    uv = np.full((len(cam), 2), np.nan)
    front = depth > MIN_DEPTH
    uv[front, 0] = k.fx * cam[front, 0] / depth[front] + k.ox
    uv[front, 1] = k.fy * cam[front, 1] / depth[front] + k.oy
    return uv, depth


def look_at(center: np.ndarray, target: np.ndarray, up: np.ndarray = np.array([0.0, 1.0, 0.0])) -> CameraPose:
    """
    World-to-camera pose for a camera at ``center`` looking at ``target``.

    Camera axes: +Z forward, +X right, +Y down in the image (OpenCV style).
    """
    center = np.asarray(center, dtype=float)
    forward = np.asarray(target, dtype=float) - center
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    r = np.stack([right, down, forward])
    return CameraPose(r, -r @ center)
