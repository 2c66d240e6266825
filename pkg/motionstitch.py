"""
motionstitch - Main Entry Point

Reconstructs one continuous world-frame human motion from a multi-shot
video's per-shot estimates: detects shot transitions, recovers the camera
rotation across each cut from 2D keypoints, stitches the shots with yaw
alignment and boundary smoothing, and refines the root trajectory from
foot contacts. Every stage is also a subcommand working on files.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from src.config import Config
from src.data import formats
from src.errors import InputError, MotionStitchError
from src.evaluation.benchmark import run_benchmarks
from src.evaluation.metrics import evaluate_motion
from src.geometry.camera import CameraPose
from src.geometry.epipolar import RelativePose
from src.motion.alignment import stitch
from src.motion.body import ShotMotion, StitchedMotion
from src.motion.skeleton import forward_kinematics_sequence
from src.motion.trajectory import detect_contacts, refine_trajectory
from src.pipeline.graph import create_pipeline, initial_state, run_pipeline, shot_labels
from src.pipeline.nodes import calibrate_node, cameras_node
from src.shots.detector import detect_shots, evaluate_detector
from src.synthetic.generator import SceneSpec, generate

logger = logging.getLogger("motionstitch")

# file names of a synthetic bundle directory
OBSERVATIONS_FILE = "observations.jsonl"
TRACKS_FILE = "tracks.jsonl"
SHOT_POSES_FILE = "shot_poses.jsonl"
SCENE_FILE = "scene.jsonl"
TRUTH_POSES_FILE = "truth_poses.jsonl"
TRUTH_CAMERAS_FILE = "truth_cameras.jsonl"
TRUTH_TRANSITIONS_FILE = "truth_transitions.jsonl"
TRUTH_CONTACTS_FILE = "truth_contacts.jsonl"
TRUTH_RELPOSES_FILE = "truth_relposes.jsonl"

# file names written by `run`
TRANSITIONS_FILE = "transitions.jsonl"
RELPOSES_FILE = "relposes.jsonl"
CAMERAS_FILE = "cameras.jsonl"
STITCHED_FILE = "stitched_poses.jsonl"
REFINED_FILE = "refined_poses.jsonl"
CONTACTS_FILE = "contacts.jsonl"
METRICS_FILE = "metrics.jsonl"


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s [%(name)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _parse_sets(pairs: List[str]) -> Dict[str, str]:
    values = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise InputError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        values[key.strip().upper()] = value.strip()
    return values


def _load_config(args) -> Config:
    overrides = _parse_sets(args.set)
    if args.seed is not None:
        overrides["RUN_SEED"] = str(args.seed)
    if args.verbose:
        overrides["RUN_VERBOSE"] = "true"
    return Config.from_sources(args.config, overrides)


def _require_intrinsics(intrinsics, path):
    if intrinsics is None:
        raise InputError(f"{path}: header carries no intrinsics")
    return intrinsics


def _contiguous(table: formats.PoseTable, path: str) -> None:
    if table.frames != list(range(len(table.frames))):
        raise InputError(f"{path}: pose frames must be 0..{len(table.frames) - 1} in order")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg: Config) -> int:
    """Generate a synthetic multi-shot bundle."""
    spec = SceneSpec.from_config(
        cfg.synth,
        seed=cfg.run.seed,
        duration_frames=args.frames,
        motion_kind=args.motion,
        camera_count=args.cameras,
        shot_count=args.shots,
        static_point_count=args.static_points,
        dynamic_point_count=args.dynamic_points,
        keypoint_noise_px=args.noise,
        outlier_fraction=args.outliers,
        bbox_jitter=args.bbox_jitter,
        scene_miss_rate=args.miss_rate,
        camera_mode=args.camera_mode,
    )
    bundle = generate(spec)
    out, fps = args.out, bundle.fps
    labels = shot_labels(bundle.frame_count, bundle.segmentation.transitions)
    cuts = bundle.segmentation.transitions

    formats.write_observations(os.path.join(out, OBSERVATIONS_FILE), bundle.observations, fps, bundle.intrinsics)
    formats.write_tracks(os.path.join(out, TRACKS_FILE), bundle.tracks, fps)
    formats.write_poses(os.path.join(out, SHOT_POSES_FILE), bundle.shot_states, fps, shots=labels)
    formats.write_scene(
        os.path.join(out, SCENE_FILE),
        {"spec": spec.to_dict(), "camera_assignment": bundle.camera_assignment,
         "dynamic_track_ids": bundle.dynamic_track_ids},
        fps,
    )
    formats.write_poses(os.path.join(out, TRUTH_POSES_FILE), bundle.motion, fps)
    formats.write_cameras(os.path.join(out, TRUTH_CAMERAS_FILE), bundle.cameras, bundle.intrinsics, fps)
    formats.write_transitions(os.path.join(out, TRUTH_TRANSITIONS_FILE), bundle.segmentation, fps)
    formats.write_contacts(os.path.join(out, TRUTH_CONTACTS_FILE), bundle.contact_schedule, fps)
    formats.write_relposes(
        os.path.join(out, TRUTH_RELPOSES_FILE),
        cuts,
        [RelativePose(r, np.array([0.0, 0.0, 1.0]), 0, np.zeros(0, dtype=bool)) for r in bundle.true_relative],
        fps,
    )
    logger.info(f"Wrote synthetic bundle ({bundle.frame_count} frames, cuts {cuts}) to {out}")
    return 0


def cmd_detect(args, cfg: Config) -> int:
    observations, fps, _ = formats.read_observations(args.observations)
    segmentation = detect_shots(observations, cfg.detector)
    formats.write_transitions(args.out, segmentation, fps)
    if args.truth:
        score = evaluate_detector(segmentation, formats.read_transitions(args.truth), cfg.detector.slack)
        logger.info(f"Recall {score.recall:.3f}, precision {score.precision:.3f}, F1 {score.f1:.3f}")
    return 0


def cmd_calibrate(args, cfg: Config) -> int:
    observations, fps, intrinsics = formats.read_observations(args.observations)
    state = {
        "config": cfg,
        "observations": observations,
        "intrinsics": _require_intrinsics(intrinsics, args.observations),
        "segmentation": formats.read_transitions(args.transitions),
        "metadata": {},
    }
    state = calibrate_node(state)
    formats.write_relposes(args.out, state["segmentation"].transitions, state["relative_poses"], fps)
    return 0


def cmd_ba(args, cfg: Config) -> int:
    observations, fps, intrinsics = formats.read_observations(args.observations)
    if args.no_masks:
        cfg = cfg.with_overrides(ba={"use_masks": False})
    state = {
        "config": cfg,
        "observations": observations,
        "intrinsics": _require_intrinsics(intrinsics, args.observations),
        "segmentation": formats.read_transitions(args.transitions),
        "tracks": formats.read_tracks(args.tracks),
        "metadata": {},
    }
    state = cameras_node(state)
    formats.write_cameras(args.out, state["cameras"], state["intrinsics"], fps)
    return 0


def cmd_stitch(args, cfg: Config) -> int:
    table = formats.read_poses(args.poses)
    _contiguous(table, args.poses)
    segmentation = formats.read_transitions(args.transitions)
    if segmentation.total_frames != len(table.states):
        raise InputError(f"{segmentation.total_frames} transition frame(s) for {len(table.states)} pose frame(s)")
    relposes = formats.read_relposes(args.relposes)
    if [t for t, _ in relposes] != segmentation.transitions:
        raise InputError("Relative poses do not match the transitions")
    cameras = formats.read_cameras(args.cameras)[1] if args.cameras else [CameraPose.identity() for _ in table.states]
    shots = [
        ShotMotion(table.states[s:e], cameras[s:e], k, (s, e))
        for k, (s, e) in enumerate(segmentation.shot_ranges)
    ]
    stitched = stitch(shots, [p for _, p in relposes], cfg.align)
    formats.write_poses(args.out, stitched.states, table.fps, shots=stitched.provenance)
    return 0


def cmd_refine(args, cfg: Config) -> int:
    table = formats.read_poses(args.poses)
    _contiguous(table, args.poses)
    provenance = table.shots or [0] * len(table.states)
    transitions = sum(1 for a, b in zip(provenance, provenance[1:]) if a != b)
    motion = StitchedMotion(table.states, [np.eye(3)] * transitions, provenance)
    contacts = detect_contacts(forward_kinematics_sequence(motion.states, table.fps), cfg.contacts)
    refined = refine_trajectory(motion, contacts, cfg.contacts)
    formats.write_poses(args.out, refined.states, table.fps, shots=table.shots)
    if args.contacts_out:
        formats.write_contacts(args.contacts_out, contacts, table.fps)
    return 0


def cmd_eval(args, cfg: Config) -> int:
    pred = formats.read_poses(args.pred)
    truth = formats.read_poses(args.truth)
    contacts = formats.read_contacts(args.contacts) if args.contacts else None
    if contacts is None and cfg.metrics.truth_contacts:
        contacts = detect_contacts(forward_kinematics_sequence(truth.states, truth.fps), cfg.contacts)
    pred_cams = formats.read_cameras(args.pred_cameras)[1] if args.pred_cameras else None
    true_cams = formats.read_cameras(args.truth_cameras)[1] if args.truth_cameras else None
    report = evaluate_motion(pred.states, truth.states, pred.fps, cfg.metrics, contacts, pred_cams, true_cams)
    if args.transitions and args.truth_transitions:
        score = evaluate_detector(
            formats.read_transitions(args.transitions), formats.read_transitions(args.truth_transitions),
            cfg.detector.slack,
        )
        report.recall, report.precision, report.f1 = score.as_tuple()
    formats.write_metrics(args.out, report.to_records(args.video), pred.fps)
    return 0


def _bundle_inputs(directory: str, cfg: Config, with_truth: bool):
    observations, fps, intrinsics = formats.read_observations(os.path.join(directory, OBSERVATIONS_FILE))
    poses_path = os.path.join(directory, SHOT_POSES_FILE)
    table = formats.read_poses(poses_path)
    _contiguous(table, poses_path)
    tracks_path = os.path.join(directory, TRACKS_FILE)
    tracks = formats.read_tracks(tracks_path) if os.path.isfile(tracks_path) else []

    truth = None
    truth_poses = os.path.join(directory, TRUTH_POSES_FILE)
    if with_truth and os.path.isfile(truth_poses):
        truth = {"motion": formats.read_poses(truth_poses).states}
        optional = {
            "cameras": (TRUTH_CAMERAS_FILE, lambda p: formats.read_cameras(p)[1]),
            "segmentation": (TRUTH_TRANSITIONS_FILE, formats.read_transitions),
            "contacts": (TRUTH_CONTACTS_FILE, formats.read_contacts),
        }
        for key, (name, reader) in optional.items():
            path = os.path.join(directory, name)
            if os.path.isfile(path):
                truth[key] = reader(path)
    return initial_state(
        cfg, observations, table.states, _require_intrinsics(intrinsics, OBSERVATIONS_FILE), fps, tracks, truth
    )


def cmd_run(args, cfg: Config) -> int:
    """Full pipeline on a bundle directory; metrics are written when truth sidecars exist."""
    state = _bundle_inputs(args.input, cfg, with_truth=not args.no_eval)
    final = run_pipeline(create_pipeline(), state)
    out, fps = args.out, final["fps"]
    formats.write_transitions(os.path.join(out, TRANSITIONS_FILE), final["segmentation"], fps)
    formats.write_relposes(
        os.path.join(out, RELPOSES_FILE), final["segmentation"].transitions, final["relative_poses"], fps
    )
    if final["metadata"].get("cameras_solved"):
        formats.write_cameras(os.path.join(out, CAMERAS_FILE), final["cameras"], final["intrinsics"], fps)
    formats.write_poses(
        os.path.join(out, STITCHED_FILE), final["stitched"].states, fps, shots=final["stitched"].provenance
    )
    formats.write_poses(
        os.path.join(out, REFINED_FILE), final["refined"].states, fps, shots=final["refined"].provenance
    )
    formats.write_contacts(os.path.join(out, CONTACTS_FILE), final["contacts"], fps)
    if final.get("report") is not None:
        formats.write_metrics(os.path.join(out, METRICS_FILE), final["report"].to_records(args.video), fps)
    return 0


def cmd_bench(args, cfg: Config) -> int:
    seeds = list(range(cfg.run.seed, cfg.run.seed + args.videos))
    written = run_benchmarks(args.out, seeds, cfg)
    logger.info(f"Benchmark tables: {', '.join(sorted(written.values()))}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionstitch",
        description="Multi-shot human motion reconstruction toolkit.",
    )
    parser.add_argument("--config", help="key=value config file (default: $MOTIONSTITCH_CONFIG)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override one config key")
    parser.add_argument("--seed", type=int, help="Seed for everything random (RUN_SEED)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic multi-shot bundle")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--shots", type=int, default=2)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--motion", default="walk_circle")
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--camera-mode", default="follow")
    p.add_argument("--static-points", type=int, default=40)
    p.add_argument("--dynamic-points", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.0, help="Keypoint noise (px)")
    p.add_argument("--outliers", type=float, default=0.0, help="Fraction of outlier keypoints")
    p.add_argument("--bbox-jitter", type=float, default=0.0)
    p.add_argument("--miss-rate", type=float, default=0.0, help="Fraction of cuts with no scene-change signal")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("detect", help="Detect shot transitions")
    p.add_argument("--observations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="True transitions file, to log recall/precision/F1")
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("calibrate", help="Relative camera pose across each transition")
    p.add_argument("--observations", required=True)
    p.add_argument("--transitions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("ba", help="Per-shot cameras by masked bundle adjustment")
    p.add_argument("--observations", required=True)
    p.add_argument("--transitions", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-masks", action="store_true", help="Keep tracks inside the subject mask")
    p.set_defaults(handler=cmd_ba)

    p = sub.add_parser("stitch", help="Merge per-shot poses into one motion")
    p.add_argument("--poses", required=True, help="Per-frame poses in their shots' view frames")
    p.add_argument("--transitions", required=True)
    p.add_argument("--relposes", required=True)
    p.add_argument("--cameras", help="Per-frame cameras (optional)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_stitch)

    p = sub.add_parser("refine", help="Contact-based trajectory refinement")
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--contacts-out", help="Also write the detected contacts")
    p.set_defaults(handler=cmd_refine)

    p = sub.add_parser("eval", help="Metrics of predicted against true poses")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--contacts", help="Contacts for foot sliding (default: detected on the truth)")
    p.add_argument("--pred-cameras")
    p.add_argument("--truth-cameras")
    p.add_argument("--transitions")
    p.add_argument("--truth-transitions")
    p.add_argument("--video", default="video")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("run", help="Full pipeline on a bundle directory")
    p.add_argument("--input", required=True, help="Directory written by `synth` (or the same layout)")
    p.add_argument("--out", required=True)
    p.add_argument("--video", default="video")
    p.add_argument("--no-eval", action="store_true", help="Ignore truth sidecars")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("bench", help="Benchmark tables over a seeded synthetic corpus")
    p.add_argument("--videos", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and map library errors to exit codes."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        cfg = _load_config(args)
        if cfg.run.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
            cfg.print_status()
        return args.handler(args, cfg)
    except MotionStitchError as e:
        logger.error(str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
