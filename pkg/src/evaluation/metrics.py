"""
Evaluation metrics for recovered human motion and camera trajectories.

Pose errors are reported in millimeters, RTE and ATE in meters, angles in
degrees, jitter in 10 m/fps³ and foot sliding in centimeters.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence

import numpy as np

from src.config import MetricsConfig
from src.errors import DegenerateConfigurationError, ShapeMismatchError
from src.geometry.camera import CameraPose
from src.geometry.rotations import geodesic_distance, rotation_between, yaw_angle, yaw_matrix
from src.motion.body import BodyState, stack_states
from src.motion.skeleton import FOOT_JOINTS, SkeletonFrame, forward_kinematics_arrays, joints_array
from src.motion.trajectory import ContactState

logger = logging.getLogger(__name__)

UNITS = {
    "mpjpe": "mm",
    "pa_mpjpe": "mm",
    "wa_mpjpe": "mm",
    "w_mpjpe": "mm",
    "rte": "m",
    "roe": "deg",
    "jitter": "10m/fps^3",
    "foot_sliding": "cm",
    "ate": "m",
    "rpe_trans": "m",
    "rpe_rot": "deg",
    "recall": "ratio",
    "precision": "ratio",
    "f1": "ratio",
}


@dataclass
class Similarity:
    """x -> scale · rotation · x + translation."""
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) @ self.rotation.T + self.translation


class FootSliding(NamedTuple):
    value_cm: float
    has_contact: bool


@dataclass
class MotionPair:
    """Predicted and ground-truth motion of equal length."""
    pred_states: List[BodyState]
    true_states: List[BodyState]
    pred_joints: np.ndarray
    true_joints: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        if len(self.pred_states) != len(self.true_states):
            raise ShapeMismatchError(
                f"Predicted and true motions differ in length: {len(self.pred_states)} vs {len(self.true_states)}"
            )
        if self.pred_joints.shape != self.true_joints.shape:
            raise ShapeMismatchError(f"Joint arrays differ: {self.pred_joints.shape} vs {self.true_joints.shape}")

    @classmethod
    def from_states(cls, pred: Sequence[BodyState], truth: Sequence[BodyState], fps: float = 30.0) -> "MotionPair":
        if len(pred) != len(truth):
            raise ShapeMismatchError(f"Predicted and true motions differ in length: {len(pred)} vs {len(truth)}")
        return cls(list(pred), list(truth), forward_kinematics_arrays(*stack_states(pred)),
                   forward_kinematics_arrays(*stack_states(truth)), fps)

    def __len__(self) -> int:
        return len(self.pred_states)


def procrustes_align(a: np.ndarray, b: np.ndarray, with_scale: bool = True) -> Similarity:
    """
    Closed-form (Umeyama) similarity minimizing Σ‖s·R·aᵢ + t − bᵢ‖².

    Args:
        a: (N, 3) source points
        b: (N, 3) target points
        with_scale: Fix the scale at 1 when False

    Raises:
        ShapeMismatchError: point counts differ
        DegenerateConfigurationError: fewer than 3 points or collinear source
    """
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if len(a) != len(b):
        raise ShapeMismatchError(f"Point sets differ in size: {len(a)} vs {len(b)}")
    if len(a) < 3:
        raise DegenerateConfigurationError("Alignment needs at least 3 points")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ac, bc = a - mu_a, b - mu_b
    var_a = np.sum(ac ** 2) / len(a)
    sv_a = np.linalg.svd(ac, compute_uv=False)
    if sv_a[1] <= 1e-9 * max(sv_a[0], 1e-300):
        raise DegenerateConfigurationError("Source points are collinear")

    cov = bc.T @ ac / len(a)
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rot = u @ s @ vt
    scale = float(np.trace(np.diag(d) @ s) / var_a) if with_scale else 1.0
    return Similarity(scale, rot, mu_b - scale * rot @ mu_a)


def _joint_error_mm(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    return np.linalg.norm(pred - truth, axis=-1) * 1000.0


def mpjpe(pair: MotionPair) -> float:
    """Mean joint error without alignment (mm)."""
    return float(_joint_error_mm(pair.pred_joints, pair.true_joints).mean())


def pa_mpjpe(pair: MotionPair) -> float:
    """Per-frame similarity-aligned mean joint error (mm)."""
    errors = []
    for pred, truth in zip(pair.pred_joints, pair.true_joints):
        aligned = procrustes_align(pred, truth).apply(pred)
        errors.append(_joint_error_mm(aligned, truth))
    return float(np.mean(errors))


def _chunks(n: int, chunk: int) -> List[slice]:
    chunk = max(1, chunk)
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def wa_mpjpe(pair: MotionPair, chunk: int = 100) -> float:
    """Mean joint error after a rigid alignment of every ``chunk``-frame segment (mm)."""
    errors = []
    for sl in _chunks(len(pair), chunk):
        pred = pair.pred_joints[sl].reshape(-1, 3)
        truth = pair.true_joints[sl].reshape(-1, 3)
        aligned = procrustes_align(pred, truth, with_scale=False).apply(pred)
        errors.append(_joint_error_mm(aligned, truth))
    return float(np.concatenate(errors).mean())


def w_mpjpe(pair: MotionPair, chunk: int = 100) -> float:
    """Mean joint error over the whole sequence after rigidly aligning the first chunk (mm)."""
    first = _chunks(len(pair), chunk)[0]
    transform = procrustes_align(
        pair.pred_joints[first].reshape(-1, 3), pair.true_joints[first].reshape(-1, 3), with_scale=False
    )
    aligned = transform.apply(pair.pred_joints.reshape(-1, 3)).reshape(pair.pred_joints.shape)
    return float(_joint_error_mm(aligned, pair.true_joints).mean())


def _first_frame_alignment(pair: MotionPair):
    """Yaw and translation mapping the predicted first root onto the true one."""
    pred_root, _, pred_trans = stack_states(pair.pred_states[:1])
    true_root, _, true_trans = stack_states(pair.true_states[:1])
    rot = yaw_matrix(yaw_angle(true_root[0] @ pred_root[0].T))
    return rot, pred_trans[0], true_trans[0]


def rte(pair: MotionPair) -> float:
    """Mean root translation error after first-frame yaw and translation alignment (m)."""
    rot, p0, t0 = _first_frame_alignment(pair)
    pred = np.stack([s.translation for s in pair.pred_states])
    truth = np.stack([s.translation for s in pair.true_states])
    aligned = (pred - p0) @ rot.T + t0
    return float(np.linalg.norm(aligned - truth, axis=1).mean())


def roe(pair: MotionPair) -> float:
    """Mean root orientation error after first-frame yaw alignment (deg)."""
    rot, _, _ = _first_frame_alignment(pair)
    pred_root, _, _ = stack_states(pair.pred_states)
    true_root, _, _ = stack_states(pair.true_states)
    angles = [geodesic_distance(rot @ p, t) for p, t in zip(pred_root, true_root)]
    return float(np.degrees(np.mean(angles)))


def jitter(motion: Sequence[SkeletonFrame], fps: Optional[float] = None) -> float:
    """
    Mean magnitude of the third finite difference of joint positions, times fps³/10.

    Raises:
        ShapeMismatchError: fewer than 4 frames
    """
    if len(motion) < 4:
        raise ShapeMismatchError("Jitter needs at least 4 frames")
    fps = fps or motion[0].fps
    third = np.diff(joints_array(motion), n=3, axis=0)
    return float(np.linalg.norm(third, axis=-1).mean() * fps ** 3 / 10.0)


def foot_sliding(motion: Sequence[SkeletonFrame], contacts: ContactState) -> FootSliding:
    """
    Mean horizontal displacement of foot joints between consecutive contact frames (cm).

    Returns 0 with ``has_contact`` False when no foot stays in contact over
    any frame pair.
    """
    if len(contacts) != len(motion):
        raise ShapeMismatchError(f"{len(contacts)} contact frame(s) for {len(motion)} motion frame(s)")
    joints = joints_array(motion)
    steps = []
    for side, ids in FOOT_JOINTS.items():
        c = contacts.foot(side)
        pairs = c[:-1] & c[1:]
        if not pairs.any():
            continue
        disp = np.diff(joints[:, list(ids)], axis=0)[pairs]
        steps.append(np.linalg.norm(disp[..., [0, 2]], axis=-1).reshape(-1))
    if not steps:
        return FootSliding(0.0, False)
    return FootSliding(float(np.concatenate(steps).mean() * 100.0), True)


def _check_cameras(pred: Sequence[CameraPose], truth: Sequence[CameraPose]) -> None:
    if len(pred) != len(truth):
        raise ShapeMismatchError(f"Camera trajectories differ in length: {len(pred)} vs {len(truth)}")
    if len(pred) < 2:
        raise ShapeMismatchError("Camera metrics need at least 2 poses")


def _center_alignment(pred: Sequence[CameraPose], truth: Sequence[CameraPose]) -> Similarity:
    """Similarity between camera centers; falls back to a centroid shift when degenerate."""
    pc = np.stack([p.center for p in pred])
    tc = np.stack([p.center for p in truth])
    try:
        return procrustes_align(pc, tc)
    except DegenerateConfigurationError:
        pass
    # collinear or static centers: align the principal directions
    mu_p, mu_t = pc.mean(axis=0), tc.mean(axis=0)
    pc0, tc0 = pc - mu_p, tc - mu_t
    rot, scale = np.eye(3), 1.0
    if np.abs(pc0).max() > 1e-12 and np.abs(tc0).max() > 1e-12:
        dir_p = np.linalg.svd(pc0)[2][0]
        dir_t = np.linalg.svd(tc0)[2][0]
        proj_p, proj_t = pc0 @ dir_p, tc0 @ dir_t
        if proj_p @ proj_t < 0:
            dir_t, proj_t = -dir_t, -proj_t
        rot = rotation_between(dir_p, dir_t)
        scale = float(proj_p @ proj_t / (proj_p @ proj_p))
    return Similarity(scale, rot, mu_t - scale * rot @ mu_p)


def ate(pred: Sequence[CameraPose], truth: Sequence[CameraPose]) -> float:
    """RMSE of camera centers after similarity alignment (m)."""
    _check_cameras(pred, truth)
    transform = _center_alignment(pred, truth)
    pc = transform.apply(np.stack([p.center for p in pred]))
    tc = np.stack([p.center for p in truth])
    return float(np.sqrt(np.mean(np.sum((pc - tc) ** 2, axis=1))))


def rpe(pred: Sequence[CameraPose], truth: Sequence[CameraPose], delta: int = 1):
    """
    Mean relative pose error over frame pairs (t, t + delta).

    The predicted relative translations are first brought to the truth's
    scale with the center alignment.

    Returns:
        (translation error in m, rotation error in deg)
    """
    _check_cameras(pred, truth)
    scale = _center_alignment(pred, truth).scale
    trans_err, rot_err = [], []
    for t in range(len(pred) - delta):
        rp = pred[t + delta].compose(pred[t].inverse())
        rt = truth[t + delta].compose(truth[t].inverse())
        trans_err.append(np.linalg.norm(scale * rp.t - rt.t))
        rot_err.append(geodesic_distance(rp.r, rt.r))
    if not trans_err:
        return 0.0, 0.0
    return float(np.mean(trans_err)), float(np.degrees(np.mean(rot_err)))


@dataclass
class MetricsReport:
    """Metric values of one video; None marks a metric that was not computed."""
    mpjpe: Optional[float] = None
    pa_mpjpe: Optional[float] = None
    wa_mpjpe: Optional[float] = None
    w_mpjpe: Optional[float] = None
    rte: Optional[float] = None
    roe: Optional[float] = None
    jitter: Optional[float] = None
    foot_sliding: Optional[float] = None
    ate: Optional[float] = None
    rpe_trans: Optional[float] = None
    rpe_rot: Optional[float] = None
    recall: Optional[float] = None
    precision: Optional[float] = None
    f1: Optional[float] = None

    def to_records(self, video: str) -> Iterator[Dict]:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                yield {"video": video, "metric": f.name, "value": float(value), "unit": UNITS[f.name]}

    def as_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def evaluate_motion(
    pred: Sequence[BodyState],
    truth: Sequence[BodyState],
    fps: float = 30.0,
    cfg: Optional[MetricsConfig] = None,
    contacts: Optional[ContactState] = None,
    pred_cameras: Optional[Sequence[CameraPose]] = None,
    true_cameras: Optional[Sequence[CameraPose]] = None,
) -> MetricsReport:
    """
    Full metric suite for one video.

    Foot sliding is measured on the predicted motion using ``contacts``
    (typically the ground-truth schedule); camera metrics need both camera lists.
    """
    cfg = cfg or MetricsConfig()
    pair = MotionPair.from_states(pred, truth, fps)
    frames = [SkeletonFrame(j, fps) for j in pair.pred_joints]
    report = MetricsReport(
        mpjpe=mpjpe(pair),
        pa_mpjpe=pa_mpjpe(pair),
        wa_mpjpe=wa_mpjpe(pair, cfg.wa_chunk),
        w_mpjpe=w_mpjpe(pair, cfg.wa_chunk),
        rte=rte(pair),
        roe=roe(pair),
        jitter=jitter(frames, fps) if len(frames) >= 4 else 0.0,
    )
    if contacts is not None:
        sliding = foot_sliding(frames, contacts)
        report.foot_sliding = sliding.value_cm
        if not sliding.has_contact:
            logger.warning("No contact frames; foot sliding reported as 0")
    if pred_cameras is not None and true_cameras is not None:
        report.ate = ate(pred_cameras, true_cameras)
        report.rpe_trans, report.rpe_rot = rpe(pred_cameras, true_cameras, cfg.rpe_delta)
    logger.info(
        f"ROE {report.roe:.2f} deg, RTE {report.rte:.3f} m, PA-MPJPE {report.pa_mpjpe:.1f} mm, "
        f"jitter {report.jitter:.2f}"
    )
    return report
