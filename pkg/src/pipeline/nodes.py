"""
Pipeline stages as LangGraph nodes.

Each node reads what earlier stages left in the state, runs one library
stage and writes its result back, logging a one-line summary.
"""

import logging
from typing import List

import numpy as np

from src.camera.sequence import solve_sequence
from src.errors import EstimationError, InputError, InvariantViolation
from src.evaluation.metrics import MetricsReport, ate, evaluate_motion, rpe
from src.geometry.camera import CameraPose
from src.geometry.epipolar import RelativePose, ransac_relative_pose, transition_correspondences
from src.geometry.rotations import yaw_angle
from src.motion.alignment import naive_concat, stitch
from src.motion.body import ShotMotion
from src.motion.skeleton import forward_kinematics_sequence
from src.motion.trajectory import detect_contacts, refine_trajectory
from src.pipeline.state import PipelineState
from src.shots.detector import detect_shots, evaluate_detector

logger = logging.getLogger(__name__)


def _metadata(state: PipelineState) -> dict:
    if "metadata" not in state or state["metadata"] is None:
        state["metadata"] = {}
    return state["metadata"]


def detect_node(state: PipelineState) -> PipelineState:
    """Split the frame stream into shots."""
    cfg = state["config"]
    segmentation = detect_shots(state["observations"], cfg.detector)
    if len(state["shot_poses"]) != segmentation.total_frames:
        raise InputError(
            f"{len(state['shot_poses'])} pose frame(s) for {segmentation.total_frames} observation frame(s)"
        )
    state["segmentation"] = segmentation
    _metadata(state)["transitions"] = list(segmentation.transitions)
    logger.info(f"[Detect] {len(segmentation.shot_ranges)} shot(s), transitions {segmentation.transitions}")
    return state


def calibrate_node(state: PipelineState) -> PipelineState:
    """
    Relative camera rotation across every transition.

    A transition whose estimate fails falls back to the identity (no
    orientation correction) with a warning.
    """
    cfg = state["config"]
    observations = state["observations"]
    poses: List[RelativePose] = []
    fallbacks = []
    for t in state["segmentation"].transitions:
        outgoing = [o.keypoints for o in observations[max(0, t - 2):t]]
        c = transition_correspondences(outgoing, observations[t].keypoints, cfg.ransac.extrapolate_keypoints)
        try:
            rel = ransac_relative_pose(
                c,
                state["intrinsics"],
                iterations=cfg.ransac.iterations,
                inlier_threshold_px=cfg.ransac.inlier_threshold_px,
                seed=cfg.ransac.seed + t,
                confidence=cfg.ransac.confidence,
            )
        except EstimationError as e:
            logger.warning(f"[Calibrate] Transition {t}: {e}; using identity offset")
            rel = RelativePose.identity(len(c))
            fallbacks.append(t)
        logger.info(
            f"[Calibrate] Transition {t}: yaw {np.degrees(yaw_angle(rel.r_delta)):.2f} deg, "
            f"{rel.inlier_count}/{c.visible_count} inliers"
        )
        poses.append(rel)
    state["relative_poses"] = poses
    _metadata(state)["calibration_fallbacks"] = fallbacks
    return state


def cameras_node(state: PipelineState) -> PipelineState:
    """Per-shot camera trajectories from masked bundle adjustment."""
    cfg = state["config"]
    masks = {o.frame_index: o.mask_bbox for o in state["observations"]}
    cameras: List[CameraPose] = []
    failed = []
    for shot, (start, end) in enumerate(state["segmentation"].shot_ranges):
        tracks = [t for t in state["tracks"] if start <= t.frames[0] < end]
        try:
            cameras.extend(solve_sequence(
                tracks, masks, state["intrinsics"], cfg.ba, frame_range=(start, end), seed=cfg.run.seed
            ))
        except EstimationError as e:
            logger.warning(f"[Cameras] Shot {shot}: {e}; keeping identity cameras")
            cameras.extend(CameraPose.identity() for _ in range(start, end))
            failed.append(shot)
    state["cameras"] = cameras
    _metadata(state)["camera_failures"] = failed
    state["metadata"]["cameras_solved"] = True
    logger.info(f"[Cameras] Solved {len(state['segmentation'].shot_ranges) - len(failed)} shot(s)")
    return state


def stitch_node(state: PipelineState) -> PipelineState:
    """Cut the per-frame poses along the segmentation and merge the shots."""
    cfg = state["config"]
    poses = state["shot_poses"]
    cameras = state.get("cameras") or [CameraPose.identity() for _ in poses]
    shots = [
        ShotMotion(poses[start:end], cameras[start:end], k, (start, end))
        for k, (start, end) in enumerate(state["segmentation"].shot_ranges)
    ]
    if cfg.align.naive_concat:
        stitched = naive_concat(shots)
    else:
        stitched = stitch(shots, state["relative_poses"], cfg.align)
    if len(stitched) != state["segmentation"].total_frames:
        raise InvariantViolation(
            f"Stitched motion has {len(stitched)} frame(s), expected {state['segmentation'].total_frames}"
        )
    state["shots"] = shots
    state["stitched"] = stitched
    _metadata(state)["offsets_deg"] = [float(np.degrees(yaw_angle(o))) for o in stitched.applied_offsets]
    logger.info(f"[Stitch] {len(shots)} shot(s) -> {len(stitched)} frame(s)")
    return state


def refine_node(state: PipelineState) -> PipelineState:
    """Detect foot contacts on the stitched motion and pin the feet."""
    cfg = state["config"]
    stitched = state["stitched"]
    frames = forward_kinematics_sequence(stitched.states, state["fps"])
    contacts = detect_contacts(frames, cfg.contacts)
    state["contacts"] = contacts
    if cfg.contacts.refine:
        state["refined"] = refine_trajectory(stitched, contacts, cfg.contacts)
    else:
        state["refined"] = stitched
    logger.info(
        f"[Refine] contacts left {int(contacts.left_contact.sum())}, right {int(contacts.right_contact.sum())}; "
        f"refinement {'on' if cfg.contacts.refine else 'off'}"
    )
    return state


def evaluate_node(state: PipelineState) -> PipelineState:
    """Score the final motion, cameras and segmentation against the truth."""
    cfg = state["config"]
    truth = state["truth"] or {}
    fps = state["fps"]
    motion = state["refined"].states

    contacts = state["contacts"]
    if cfg.metrics.truth_contacts and "motion" in truth:
        contacts = truth.get("contacts") or detect_contacts(
            forward_kinematics_sequence(truth["motion"], fps), cfg.contacts
        )

    if "motion" in truth:
        report = evaluate_motion(motion, truth["motion"], fps, cfg.metrics, contacts=contacts)
    else:
        report = MetricsReport()

    if "cameras" in truth and state.get("cameras") and state["metadata"].get("cameras_solved"):
        ate_values, rpe_t, rpe_r = [], [], []
        for start, end in state["segmentation"].shot_ranges:
            if end - start < 2:
                continue
            pred, true = state["cameras"][start:end], truth["cameras"][start:end]
            ate_values.append(ate(pred, true))
            t_err, r_err = rpe(pred, true, cfg.metrics.rpe_delta)
            rpe_t.append(t_err)
            rpe_r.append(r_err)
        if ate_values:
            report.ate = float(np.mean(ate_values))
            report.rpe_trans = float(np.mean(rpe_t))
            report.rpe_rot = float(np.mean(rpe_r))

    if "segmentation" in truth:
        score = evaluate_detector(state["segmentation"], truth["segmentation"], cfg.detector.slack)
        state["detection"] = score
        report.recall, report.precision, report.f1 = score.as_tuple()

    state["report"] = report
    logger.info(f"[Evaluate] {', '.join(f'{k}={v:.4g}' for k, v in report.as_dict().items() if v is not None)}")
    return state
