"""
Foot contact detection and contact-anchored root trajectory refinement.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import savgol_filter

from src.config import ContactConfig
from src.errors import InputError, ShapeMismatchError
from src.motion.body import StitchedMotion
from src.motion.skeleton import FOOT_JOINTS, SkeletonFrame, forward_kinematics_sequence, joints_array

logger = logging.getLogger(__name__)

HORIZONTAL = np.array([1.0, 0.0, 1.0])


@dataclass
class ContactState:
    """Per-frame binary foot contacts and root velocity (m/s)."""
    left_contact: np.ndarray
    right_contact: np.ndarray
    root_velocity: np.ndarray

    def __post_init__(self):
        self.left_contact = np.asarray(self.left_contact, dtype=bool).reshape(-1)
        self.right_contact = np.asarray(self.right_contact, dtype=bool).reshape(-1)
        self.root_velocity = np.asarray(self.root_velocity, dtype=float).reshape(-1, 3)
        if not (len(self.left_contact) == len(self.right_contact) == len(self.root_velocity)):
            raise ShapeMismatchError("Contact arrays differ in length")

    def __len__(self) -> int:
        return len(self.left_contact)

    def foot(self, side: str) -> np.ndarray:
        return self.left_contact if side == "left" else self.right_contact

    @property
    def any_contact(self) -> np.ndarray:
        return self.left_contact | self.right_contact

    def agreement(self, other: "ContactState") -> float:
        """Fraction of (frame, foot) labels shared with ``other``."""
        if len(other) != len(self):
            raise ShapeMismatchError(f"Contact sequences differ in length: {len(self)} vs {len(other)}")
        same = (self.left_contact == other.left_contact).sum() + (self.right_contact == other.right_contact).sum()
        return float(same / (2 * len(self)))


def detect_contacts(frames: Sequence[SkeletonFrame], cfg: Optional[ContactConfig] = None) -> ContactState:
    """
    Threshold-based foot contacts.

    The ground height is the ``cfg.ground_percentile`` percentile of both
    ankles' heights. A foot is in contact when its ankle is within
    ``cfg.height_thresh_m`` of the ground and the ankle's central-difference
    speed is under ``cfg.vel_thresh_mps``.

    Raises:
        InputError: fewer than 2 frames
    """
    cfg = cfg or ContactConfig()
    if len(frames) < 2:
        raise InputError("Contact detection needs at least 2 frames")
    fps = frames[0].fps
    joints = joints_array(frames)

    ankles = {side: joints[:, ids[0]] for side, ids in FOOT_JOINTS.items()}
    heights = np.concatenate([a[:, 1] for a in ankles.values()])
    ground = float(np.percentile(heights, cfg.ground_percentile))

    contact = {}
    for side, ankle in ankles.items():
        speed = np.linalg.norm(np.gradient(ankle, axis=0) * fps, axis=1)
        contact[side] = (ankle[:, 1] < ground + cfg.height_thresh_m) & (speed < cfg.vel_thresh_mps)

    root_velocity = np.gradient(joints[:, 0], axis=0) * fps
    state = ContactState(contact["left"], contact["right"], root_velocity)
    logger.debug(
        f"Ground at {ground:.3f} m; contacts left {int(state.left_contact.sum())}, "
        f"right {int(state.right_contact.sum())} of {len(frames)} frame(s)"
    )
    return state


def refine_trajectory(
    motion: StitchedMotion,
    contacts: ContactState,
    cfg: Optional[ContactConfig] = None,
) -> StitchedMotion:
    """
    Remove horizontal foot drift during contact by adjusting root translation.

    For every step where a foot is in contact at both ends, the root step is
    corrected by minus that foot's horizontal displacement (averaged over
    feet in contact). A foot alone in contact is held at one horizontal
    position for its whole interval, which is then its interval mean; the
    anchor position is chained through the corrected previous steps, not
    taken from the uncorrected footprints. Steps with no contact take a
    Savitzky-Golay smoothed version of the correction so the root velocity
    blends into and out of contact. Joint rotations are never changed.

    Raises:
        ShapeMismatchError: contacts and motion differ in length
    """
    cfg = cfg or ContactConfig()
    n = len(motion)
    if len(contacts) != n:
        raise ShapeMismatchError(f"{len(contacts)} contact frame(s) for {n} motion frame(s)")
    if n < 2:
        return motion.with_states([s.copy() for s in motion.states])

    joints = joints_array(forward_kinematics_sequence(motion.states))
    correction = np.zeros((n - 1, 3))
    counts = np.zeros(n - 1)
    for side, ids in FOOT_JOINTS.items():
        c = contacts.foot(side)
        step_contact = c[:-1] & c[1:]
        foot = joints[:, list(ids)].mean(axis=1)
        disp = np.diff(foot, axis=0) * HORIZONTAL
        correction[step_contact] -= disp[step_contact]
        counts += step_contact
    in_contact = counts > 0
    correction[in_contact] /= counts[in_contact, None]

    window = cfg.smooth_window + (1 - cfg.smooth_window % 2)
    if cfg.smooth_window >= 3 and n - 1 >= window:
        smoothed = savgol_filter(correction, window, 2, axis=0, mode="interp")
        correction = np.where(in_contact[:, None], correction, smoothed)

    offsets = np.vstack([np.zeros(3), np.cumsum(correction, axis=0)])
    states = []
    for s, off in zip(motion.states, offsets):
        refined = s.copy()
        refined.translation = s.translation + off
        states.append(refined)

    logger.info(
        f"Refined trajectory over {int(in_contact.sum())} contact step(s); "
        f"final root shift {np.linalg.norm(offsets[-1]):.3f} m"
    )
    return motion.with_states(states)
