"""Shot transition detection."""

from src.shots.detector import (
    BBox,
    FrameObservation,
    Keypoints2D,
    ShotSegmentation,
    detect_shots,
    evaluate_detector,
    iou,
    keypoint_iou,
)

__all__ = [
    "BBox",
    "FrameObservation",
    "Keypoints2D",
    "ShotSegmentation",
    "detect_shots",
    "evaluate_detector",
    "iou",
    "keypoint_iou",
]
