"""State schema for the motionstitch pipeline."""

from typing import Any, Dict, List, Optional, TypedDict

from src.camera.bundle_adjustment import PointTrack
from src.config import Config
from src.evaluation.metrics import MetricsReport
from src.geometry.camera import CameraPose, Intrinsics
from src.geometry.epipolar import RelativePose
from src.motion.body import BodyState, ShotMotion, StitchedMotion
from src.motion.trajectory import ContactState
from src.shots.detector import DetectionScore, FrameObservation, ShotSegmentation


class GroundTruth(TypedDict, total=False):
    """Optional truth sidecars used by the evaluate stage."""
    motion: List[BodyState]
    cameras: List[CameraPose]
    segmentation: ShotSegmentation
    contacts: ContactState


class PipelineState(TypedDict):
    """
    State object that flows through the LangGraph workflow.

    Attributes:
        config: Effective configuration
        fps: Frame rate of the video
        intrinsics: Shared camera intrinsics
        observations: Detector inputs, one per frame
        shot_poses: Per-frame body states, each in the view frame of the shot it came from
        tracks: Point tracks for camera estimation (may be empty)
        segmentation: Detected shot transitions
        relative_poses: Camera relative pose per transition
        shots: Per-shot motions cut along the segmentation
        cameras: Per-frame camera poses (identity per shot when not solved)
        stitched: Merged world-frame motion
        contacts: Detected foot contacts of the stitched motion
        refined: Final motion after trajectory refinement
        truth: Ground truth for evaluation, if available
        detection: Detector score against truth
        report: Metrics of the final motion
        metadata: Per-stage diagnostics
    """
    config: Config
    fps: float
    intrinsics: Intrinsics
    observations: List[FrameObservation]
    shot_poses: List[BodyState]
    tracks: List[PointTrack]
    segmentation: Optional[ShotSegmentation]
    relative_poses: Optional[List[RelativePose]]
    shots: Optional[List[ShotMotion]]
    cameras: Optional[List[CameraPose]]
    stitched: Optional[StitchedMotion]
    contacts: Optional[ContactState]
    refined: Optional[StitchedMotion]
    truth: Optional[GroundTruth]
    detection: Optional[DetectionScore]
    report: Optional[MetricsReport]
    metadata: Dict[str, Any]
