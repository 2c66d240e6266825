"""
Shot transition detection.

Three stages are applied serially to each pair of neighboring frames: a
scene-change score, the IoU of the subject's bounding boxes, and the fraction
of keypoints that stay within a radius. A frame is a transition when any
enabled stage fires.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import DetectorConfig
from src.errors import InputError, ShapeMismatchError

logger = logging.getLogger(__name__)

STAGES = ("scene", "bbox", "pose")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels."""
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise InputError(f"Invalid bbox {self.as_list()}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.x_max - self.x_min, self.y_max - self.y_min))

    def contains(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return (u >= self.x_min) & (u <= self.x_max) & (v >= self.y_min) & (v <= self.y_max)

    def shifted(self, du: float, dv: float) -> "BBox":
        return BBox(self.x_min + du, self.y_min + dv, self.x_max + du, self.y_max + dv)

    def as_list(self) -> List[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def around(cls, uv: np.ndarray, pad: float = 0.0) -> "BBox":
        """Box enclosing ``uv`` points, grown by ``pad`` times its size on each side."""
        lo, hi = np.min(uv, axis=0), np.max(uv, axis=0)
        margin = (hi - lo) * pad
        return cls(float(lo[0] - margin[0]), float(lo[1] - margin[1]),
                   float(hi[0] + margin[0]), float(hi[1] + margin[1]))


@dataclass
class Keypoints2D:
    """Per-joint (u, v, visible, confidence) for one frame."""
    uv: np.ndarray
    visible: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=float).reshape(-1, 2)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        self.confidence = np.clip(np.asarray(self.confidence, dtype=float).reshape(-1), 0.0, 1.0)
        if not (len(self.uv) == len(self.visible) == len(self.confidence)):
            raise ShapeMismatchError("Keypoint arrays differ in length")

    @property
    def joint_count(self) -> int:
        return len(self.uv)

    def shifted(self, du: float, dv: float) -> "Keypoints2D":
        return Keypoints2D(self.uv + np.array([du, dv]), self.visible.copy(), self.confidence.copy())


@dataclass
class FrameObservation:
    """Detector inputs for one frame."""
    frame_index: int
    bbox: BBox
    keypoints: Keypoints2D
    scene_score: float = 1.0
    mask_bbox: Optional[BBox] = None


@dataclass
class ShotSegmentation:
    """Transition frames (first frame of each new shot)."""
    transitions: List[int]
    total_frames: int

    def __post_init__(self):
        self.transitions = [int(t) for t in self.transitions]
        if self.total_frames < 1:
            raise InputError("total_frames must be positive")
        for a, b in zip(self.transitions, self.transitions[1:]):
            if b <= a:
                raise InputError(f"Transitions must be strictly increasing: {self.transitions}")
        for t in self.transitions:
            if not 1 <= t <= self.total_frames - 1:
                raise InputError(f"Transition {t} outside [1, {self.total_frames - 1}]")

    @property
    def shot_ranges(self) -> List[Tuple[int, int]]:
        """Half-open (start, end) frame ranges per shot."""
        bounds = [0] + self.transitions + [self.total_frames]
        return list(zip(bounds[:-1], bounds[1:]))

    def shot_of(self, frame: int) -> int:
        return int(np.searchsorted(self.transitions, frame, side="right"))


@dataclass
class DetectionScore:
    """Recall/precision/F1 of predicted transitions."""
    recall: float
    precision: float
    f1: float
    true_positives: int = 0
    matches: List[Tuple[int, int]] = field(default_factory=list)

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.recall, self.precision, self.f1


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; zero-area union gives 0."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return float(inter / union)


def keypoint_iou(a: Keypoints2D, b: Keypoints2D, radius: float) -> float:
    """
    Fraction of mutually visible joints that moved at most ``radius`` pixels.

    Returns 0 when no joint is visible in both frames.

    Raises:
        ShapeMismatchError: joint counts differ
    """
    if a.joint_count != b.joint_count:
        raise ShapeMismatchError(f"Joint counts differ: {a.joint_count} vs {b.joint_count}")
    both = a.visible & b.visible
    if not both.any():
        return 0.0
    dist = np.linalg.norm(a.uv[both] - b.uv[both], axis=1)
    return float(np.mean(dist <= radius))


def _stage_fires(prev: FrameObservation, cur: FrameObservation, cfg: DetectorConfig, stages: Sequence[str]) -> Optional[str]:
    # serial: the first firing stage names the cause
    if "scene" in stages and cur.scene_score < cfg.scene_threshold:
        return "scene"
    if "bbox" in stages and iou(prev.bbox, cur.bbox) < cfg.bbox_threshold:
        return "bbox"
    if "pose" in stages:
        radius = cfg.radius_fraction * prev.bbox.diagonal
        if keypoint_iou(prev.keypoints, cur.keypoints, radius) < cfg.keypoint_threshold:
            return "pose"
    return None


def detect_shots(
    stream: Sequence[FrameObservation],
    cfg: Optional[DetectorConfig] = None,
    stages: Optional[Sequence[str]] = None,
) -> ShotSegmentation:
    """
    Partition a frame stream into shots.

    Args:
        stream: Observations with contiguous frame indices
        cfg: Thresholds (defaults if None)
        stages: Subset of ("scene", "bbox", "pose"); defaults to cfg.stages

    Returns:
        ShotSegmentation; transitions closer than min_shot_len to the previous
        accepted one are suppressed

    Raises:
        InputError: empty stream or non-contiguous frame indices
    """
    cfg = cfg or DetectorConfig()
    stages = tuple(stages) if stages is not None else cfg.stage_list
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise InputError(f"Unknown detector stage(s): {sorted(unknown)}")
    if not stream:
        raise InputError("Cannot detect shots in an empty stream")
    for i in range(1, len(stream)):
        if stream[i].frame_index != stream[i - 1].frame_index + 1:
            raise InputError(
                f"Frame indices must be contiguous: {stream[i - 1].frame_index} then {stream[i].frame_index}"
            )

    transitions: List[int] = []
    causes: Dict[str, int] = {s: 0 for s in STAGES}
    suppressed = 0
    last = -cfg.min_shot_len
    for t in range(1, len(stream)):
        cause = _stage_fires(stream[t - 1], stream[t], cfg, stages)
        if cause is None:
            continue
        if t - last < cfg.min_shot_len:
            suppressed += 1
            continue
        transitions.append(t)
        causes[cause] += 1
        last = t

    logger.info(
        f"Detected {len(transitions)} transition(s) over {len(stream)} frames "
        f"(scene={causes['scene']}, bbox={causes['bbox']}, pose={causes['pose']}, suppressed={suppressed})"
    )
    return ShotSegmentation(transitions, len(stream))


def evaluate_detector(predicted: ShotSegmentation, truth: ShotSegmentation, slack: int = 2) -> DetectionScore:
    """
    Greedy nearest matching of predicted to true transitions within ±slack.

    Precision is 0 when nothing is predicted; recall is 0 when there is
    nothing to find and 1 only if both are empty.
    """
    if predicted.total_frames != truth.total_frames:
        logger.warning(
            f"Segmentations disagree on total_frames ({predicted.total_frames} vs {truth.total_frames})"
        )
    unmatched = list(truth.transitions)
    matches: List[Tuple[int, int]] = []
    for p in predicted.transitions:
        if not unmatched:
            break
        nearest = min(unmatched, key=lambda t: (abs(t - p), t))
        if abs(nearest - p) <= slack:
            matches.append((p, nearest))
            unmatched.remove(nearest)

    tp = len(matches)
    n_pred, n_true = len(predicted.transitions), len(truth.transitions)
    if n_pred == 0 and n_true == 0:
        return DetectionScore(1.0, 1.0, 1.0, 0, [])
    recall = tp / n_true if n_true else 0.0
    precision = tp / n_pred if n_pred else 0.0
    f1 = 2 * recall * precision / (recall + precision) if recall + precision > 0 else 0.0
    return DetectionScore(recall, precision, f1, tp, matches)
