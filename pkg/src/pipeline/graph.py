"""
The full reconstruction workflow as a LangGraph StateGraph.

detect -> calibrate -> [cameras] -> stitch -> refine -> [evaluate]
"""

import logging
import time
from typing import List, Optional, Sequence

from langgraph.graph import END, StateGraph

from src.camera.bundle_adjustment import PointTrack
from src.config import Config
from src.geometry.camera import Intrinsics
from src.motion.body import BodyState
from src.motion.skeleton import get_kinematic_tree
from src.pipeline.nodes import (
    calibrate_node,
    cameras_node,
    detect_node,
    evaluate_node,
    refine_node,
    stitch_node,
)
from src.pipeline.state import GroundTruth, PipelineState
from src.shots.detector import FrameObservation

logger = logging.getLogger(__name__)


def _initialize_resources() -> None:
    """Build the cached kinematic tree before the first node needs it."""
    start_time = time.time()
    get_kinematic_tree()
    logger.debug(f"Resources initialized in {time.time() - start_time:.3f}s")


def route_to_cameras(state: PipelineState) -> str:
    """Conditional edge: solve cameras only when tracks were supplied and enabled."""
    if state["tracks"] and state["config"].run.solve_cameras:
        return "cameras"
    return "stitch"


def route_to_evaluate(state: PipelineState) -> str:
    """Conditional edge: evaluate only when ground truth is available."""
    return "evaluate" if state.get("truth") else END


def create_pipeline():
    """
    Create the LangGraph workflow.

    Returns:
        Compiled StateGraph ready to execute
    """
    _initialize_resources()

    workflow = StateGraph(PipelineState)

    workflow.add_node("detect", detect_node)
    workflow.add_node("calibrate", calibrate_node)
    workflow.add_node("cameras", cameras_node)
    workflow.add_node("stitch", stitch_node)
    workflow.add_node("refine", refine_node)
    workflow.add_node("evaluate", evaluate_node)

    workflow.set_entry_point("detect")
    workflow.add_edge("detect", "calibrate")
    workflow.add_conditional_edges(
        "calibrate",
        route_to_cameras,
        {"cameras": "cameras", "stitch": "stitch"},
    )
    workflow.add_edge("cameras", "stitch")
    workflow.add_edge("stitch", "refine")
    workflow.add_conditional_edges(
        "refine",
        route_to_evaluate,
        {"evaluate": "evaluate", END: END},
    )
    workflow.add_edge("evaluate", END)

    return workflow.compile()


def initial_state(
    config: Config,
    observations: Sequence[FrameObservation],
    shot_poses: Sequence[BodyState],
    intrinsics: Intrinsics,
    fps: float,
    tracks: Optional[Sequence[PointTrack]] = None,
    truth: Optional[GroundTruth] = None,
) -> PipelineState:
    """Fresh pipeline state for one video."""
    return {
        "config": config,
        "fps": float(fps),
        "intrinsics": intrinsics,
        "observations": list(observations),
        "shot_poses": list(shot_poses),
        "tracks": list(tracks or []),
        "segmentation": None,
        "relative_poses": None,
        "shots": None,
        "cameras": None,
        "stitched": None,
        "contacts": None,
        "refined": None,
        "truth": truth,
        "detection": None,
        "report": None,
        "metadata": {},
    }


def run_pipeline(pipeline, state: PipelineState) -> PipelineState:
    """
    Execute the workflow on one video.

    Args:
        pipeline: Compiled graph from :func:`create_pipeline`
        state: Initial state from :func:`initial_state`

    Returns:
        Final state dictionary with results
    """
    start_time = time.time()
    final_state = pipeline.invoke(state)
    logger.info(f"Pipeline finished in {time.time() - start_time:.2f}s")
    return final_state


def bundle_truth(bundle) -> GroundTruth:
    """Truth sidecars of a synthetic bundle in pipeline form."""
    return {
        "motion": list(bundle.motion),
        "cameras": list(bundle.cameras),
        "segmentation": bundle.segmentation,
        "contacts": bundle.contact_schedule,
    }


def state_from_bundle(config: Config, bundle, with_truth: bool = True, with_tracks: bool = True) -> PipelineState:
    """Pipeline inputs taken from a synthetic GroundTruthBundle."""
    return initial_state(
        config,
        bundle.observations,
        bundle.shot_states,
        bundle.intrinsics,
        bundle.fps,
        tracks=bundle.tracks if with_tracks else None,
        truth=bundle_truth(bundle) if with_truth else None,
    )


def shot_labels(total_frames: int, transitions: List[int]) -> List[int]:
    """Shot index of every frame."""
    labels, shot = [], 0
    cuts = set(transitions)
    for f in range(total_frames):
        if f in cuts:
            shot += 1
        labels.append(shot)
    return labels
