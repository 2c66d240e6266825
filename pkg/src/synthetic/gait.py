"""
Analytic walking gait with planted feet.

The root follows a parametric path at constant speed. Footprints are laid
along the path, one per stance phase; the swing foot travels between them
on a smootherstep curve with a sinusoidal lift. Leg joint rotations come
from a two-bone IK, so ankles sit exactly on their footprints during stance
and the contact schedule is known in closed form.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from src.errors import InputError
from src.geometry.rotations import (
    matrix_to_axis_angle,
    pitch_matrix,
    rotation_between,
    yaw_matrix,
)
from src.motion.body import BODY_JOINTS, SHAPE_DIM, BodyState
from src.motion.skeleton import (
    JOINT_NAMES,
    REST_OFFSETS,
    SHIN_LENGTH,
    THIGH_LENGTH,
)
from src.motion.trajectory import ContactState

logger = logging.getLogger(__name__)

MOTION_KINDS = ("walk_line", "walk_circle", "figure_eight", "idle")

_LEGS = {
    "left": (JOINT_NAMES.index("left_hip"), JOINT_NAMES.index("left_knee"), JOINT_NAMES.index("left_ankle"), 1.0),
    "right": (JOINT_NAMES.index("right_hip"), JOINT_NAMES.index("right_knee"), JOINT_NAMES.index("right_ankle"), -1.0),
}
_PHASE = {"left": 0.0, "right": 0.5}
_SPINE = JOINT_NAMES.index("spine1")
_SHOULDERS = (JOINT_NAMES.index("left_shoulder"), JOINT_NAMES.index("right_shoulder"))
_ELBOWS = (JOINT_NAMES.index("left_elbow"), JOINT_NAMES.index("right_elbow"))


@dataclass
class GaitParams:
    """Walking parameters (meters, seconds, radians)."""
    speed: float = 1.0
    cycle_s: float = 1.0
    duty: float = 0.6
    step_width: float = 0.1
    swing_height: float = 0.1
    pelvis_height: float = 0.88
    pelvis_bob: float = 0.015
    ankle_height: float = 0.08
    arm_swing: float = 0.35
    turn_radius: float = 2.5


@dataclass
class GaitSample:
    """Generated motion with its exact contact schedule."""
    states: List[BodyState]
    contacts: ContactState
    footprints: Dict[str, List[np.ndarray]] = field(default_factory=dict)


def _forward(psi):
    return np.array([np.sin(psi), np.cos(psi)])


def path_point(kind: str, s: float, psi0: float, params: GaitParams) -> Tuple[np.ndarray, float]:
    """
    Horizontal (x, z) position and heading at arc length ``s``.

    Every path starts at the origin with heading ``psi0``.
    """
    r = params.turn_radius
    if kind == "walk_line":
        return s * _forward(psi0), psi0
    if kind == "idle":
        return np.zeros(2), psi0
    if kind == "walk_circle":
        psi = psi0 + s / r
        return r * np.array([np.cos(psi0) - np.cos(psi), np.sin(psi) - np.sin(psi0)]), psi
    if kind == "figure_eight":
        loop = 2.0 * np.pi * r
        u = s % (2.0 * loop)
        if u < loop:
            psi = psi0 + u / r
            return r * np.array([np.cos(psi0) - np.cos(psi), np.sin(psi) - np.sin(psi0)]), psi
        u -= loop
        psi = psi0 - u / r
        return r * np.array([np.cos(psi) - np.cos(psi0), np.sin(psi0) - np.sin(psi)]), psi
    raise InputError(f"Unknown motion kind {kind!r}; expected one of {', '.join(MOTION_KINDS)}")


def _smootherstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def _wrap(angle: float) -> float:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


class _FootPlanner:
    """Stance/swing schedule and footprints of one foot."""

    def __init__(self, side: str, kind: str, psi0: float, params: GaitParams):
        self.side = side
        self.kind = kind
        self.psi0 = psi0
        self.params = params
        self.phase = _PHASE[side]
        self.half_stance = 0.5 * params.duty * params.cycle_s
        self.sign = _LEGS[side][3]
        self._cache: Dict[int, Tuple[np.ndarray, float]] = {}

    def mid_time(self, n: int) -> float:
        return (n + self.phase) * self.params.cycle_s

    def footprint(self, n: int) -> Tuple[np.ndarray, float]:
        if n not in self._cache:
            xz, psi = path_point(self.kind, self.params.speed * self.mid_time(n), self.psi0, self.params)
            left = np.array([np.cos(psi), -np.sin(psi)])
            self._cache[n] = (xz + self.sign * self.params.step_width * left, psi)
        return self._cache[n]

    def nearest(self, t: float) -> int:
        return int(np.floor((t - self.phase * self.params.cycle_s) / self.params.cycle_s + 0.5))

    def in_contact(self, t: float) -> bool:
        if self.kind == "idle":
            return True
        n = self.nearest(t)
        return abs(t - self.mid_time(n)) < self.half_stance - 1e-9

    def ankle(self, t: float) -> Tuple[np.ndarray, float]:
        """Ankle world position and foot heading at time ``t``."""
        p = self.params
        if self.kind == "idle":
            xz, psi = self.footprint(0)
            return np.array([xz[0], p.ankle_height, xz[1]]), psi
        n = self.nearest(t)
        if abs(t - self.mid_time(n)) <= self.half_stance:
            xz, psi = self.footprint(n)
            return np.array([xz[0], p.ankle_height, xz[1]]), psi
        a = n if t > self.mid_time(n) else n - 1
        lift_off = self.mid_time(a) + self.half_stance
        swing = p.cycle_s - 2.0 * self.half_stance
        u = (t - lift_off) / swing
        w = float(_smootherstep(u))
        (xz0, psi0), (xz1, psi1) = self.footprint(a), self.footprint(a + 1)
        xz = (1.0 - w) * xz0 + w * xz1
        height = p.ankle_height + p.swing_height * np.sin(np.pi * np.clip(u, 0.0, 1.0))
        return np.array([xz[0], height, xz[1]]), psi0 + w * _wrap(psi1 - psi0)


def _leg_ik(root_rot: np.ndarray, hip: np.ndarray, ankle: np.ndarray, foot_rot: np.ndarray):
    """
    Local hip, knee and ankle rotations placing the ankle at ``ankle``.

    The knee bends about its local +X axis so it points forward; out-of-reach
    targets are clamped to a straight leg.
    """
    d_local = root_rot.T @ (ankle - hip)
    reach = float(np.clip(np.linalg.norm(d_local), 0.05, THIGH_LENGTH + SHIN_LENGTH - 1e-6))
    cos_inner = (THIGH_LENGTH ** 2 + SHIN_LENGTH ** 2 - reach ** 2) / (2.0 * THIGH_LENGTH * SHIN_LENGTH)
    bend = np.pi - np.arccos(np.clip(cos_inner, -1.0, 1.0))
    knee = pitch_matrix(bend)
    chain = np.array([0.0, -THIGH_LENGTH, 0.0]) + knee @ np.array([0.0, -SHIN_LENGTH, 0.0])
    hip_rot = rotation_between(chain, d_local)
    ankle_rot = (root_rot @ hip_rot @ knee).T @ foot_rot
    return hip_rot, knee, ankle_rot


def generate_gait(
    kind: str,
    frames: int,
    fps: float = 30.0,
    psi0: float = 0.0,
    params: GaitParams = None,
    shape: np.ndarray = None,
) -> GaitSample:
    """
    World-frame motion of ``frames`` frames.

    Args:
        kind: One of walk_line, walk_circle, figure_eight, idle
        frames: Frame count
        fps: Frame rate
        psi0: Initial heading (radians about +Y)
        params: Gait parameters
        shape: Shape coefficients shared by every frame

    Returns:
        GaitSample with states and the closed-form contact schedule
    """
    if kind not in MOTION_KINDS:
        raise InputError(f"Unknown motion kind {kind!r}; expected one of {', '.join(MOTION_KINDS)}")
    if frames < 1:
        raise InputError("frames must be positive")
    params = params or GaitParams()
    shape = np.zeros(SHAPE_DIM) if shape is None else np.asarray(shape, dtype=float)
    feet = {side: _FootPlanner(side, kind, psi0, params) for side in _LEGS}
    omega = 2.0 * np.pi / params.cycle_s
    arm = params.arm_swing if kind != "idle" else 0.05 * params.arm_swing

    states: List[BodyState] = []
    contacts = {side: np.zeros(frames, dtype=bool) for side in _LEGS}
    roots = np.zeros((frames, 3))
    for i in range(frames):
        t = i / fps
        xz, psi = path_point(kind, params.speed * t, psi0, params)
        root_rot = yaw_matrix(psi)
        if kind == "idle":
            # slow lateral weight shift
            sway = 0.03 * np.sin(2.0 * np.pi * t / 4.0)
            xz = xz + sway * np.array([np.cos(psi), -np.sin(psi)])
        height = params.pelvis_height + params.pelvis_bob * np.cos(2.0 * omega * t)
        root = np.array([xz[0], height, xz[1]])
        roots[i] = root

        local = np.tile(np.eye(3), (BODY_JOINTS, 1, 1))
        for side, (hip_j, knee_j, ankle_j, _) in _LEGS.items():
            ankle, foot_psi = feet[side].ankle(t)
            hip = root + root_rot @ REST_OFFSETS[hip_j]
            hip_rot, knee_rot, ankle_rot = _leg_ik(root_rot, hip, ankle, yaw_matrix(foot_psi))
            local[hip_j - 1], local[knee_j - 1], local[ankle_j - 1] = hip_rot, knee_rot, ankle_rot
            contacts[side][i] = feet[side].in_contact(t)

        swing = arm * np.sin(omega * t)
        local[_SPINE - 1] = yaw_matrix(0.05 * np.sin(omega * t) if kind != "idle" else 0.0)
        local[_SHOULDERS[0] - 1] = pitch_matrix(-swing)
        local[_SHOULDERS[1] - 1] = pitch_matrix(swing)
        for elbow in _ELBOWS:
            local[elbow - 1] = pitch_matrix(-0.25 - 0.1 * abs(swing))

        states.append(BodyState(
            root_orient=matrix_to_axis_angle(root_rot),
            body_pose=np.stack([matrix_to_axis_angle(m) for m in local]),
            shape=shape.copy(),
            translation=root,
        ))

    velocity = np.gradient(roots, axis=0) * fps if frames > 1 else np.zeros((frames, 3))
    schedule = ContactState(contacts["left"], contacts["right"], velocity)
    footprints = {side: [planner.footprint(n)[0] for n in sorted(planner._cache)] for side, planner in feet.items()}
    logger.debug(
        f"Generated {kind} gait: {frames} frame(s), contact ratio "
        f"{(schedule.left_contact.mean() + schedule.right_contact.mean()) / 2:.2f}"
    )
    return GaitSample(states, schedule, footprints)
