"""
Line-delimited JSON file formats.

Every file starts with a header object carrying at least
``{format, version, fps, joint_count}``, followed by one JSON object per
line. Floats are written with Python's shortest round-trip repr and records
keep a fixed key order, so write -> read -> write is byte-identical.
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.camera.bundle_adjustment import PointTrack
from src.errors import FormatError
from src.geometry.camera import CameraPose, Intrinsics
from src.geometry.epipolar import RelativePose
from src.motion.body import BodyState
from src.motion.skeleton import JOINT_COUNT
from src.motion.trajectory import ContactState
from src.shots.detector import BBox, FrameObservation, Keypoints2D, ShotSegmentation

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

OBSERVATIONS = "observations"
POSES = "poses"
CAMERAS = "cameras"
TRACKS = "tracks"
TRANSITIONS = "transitions"
METRICS = "metrics"
RELPOSES = "relposes"
CONTACTS = "contacts"
SCENE = "scene"


def _floats(values) -> List[float]:
    return np.asarray(values, dtype=float).ravel().tolist()


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def _header(kind: str, fps: float, **extra) -> Dict[str, Any]:
    header = {"format": kind, "version": FORMAT_VERSION, "fps": float(fps), "joint_count": JOINT_COUNT}
    header.update(extra)
    return header


def write_records(path: str, header: Dict[str, Any], records: Iterable[Any]) -> int:
    """Write a header line then one JSON value per line; returns the record count."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_dumps(header) + "\n")
        for record in records:
            f.write(_dumps(record) + "\n")
            count += 1
    logger.debug(f"Wrote {count} {header['format']} record(s) to {path}")
    return count


def read_records(path: str, kind: str) -> Tuple[Dict[str, Any], List[Tuple[int, Any]]]:
    """
    Read a file written by :func:`write_records`.

    Returns:
        (header, [(line_number, record), ...])

    Raises:
        FormatError: missing file, invalid UTF-8, malformed JSON, or a bad header
    """
    if not os.path.isfile(path):
        raise FormatError("file not found", path)
    records = []
    header = None
    with open(path, "rb") as f:
        for line_no, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise FormatError("invalid UTF-8", path, line_no)
            if not line.strip():
                continue
            try:
                value = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"invalid JSON ({e.msg})", path, line_no)
            if header is None:
                header = value
                _check_header(header, kind, path)
            else:
                records.append((line_no, value))
    if header is None:
        raise FormatError("empty file", path)
    return header, records


def _check_header(header: Any, kind: str, path: str) -> None:
    if not isinstance(header, dict):
        raise FormatError("header must be an object", path, 1)
    for key in ("format", "version", "fps", "joint_count"):
        if key not in header:
            raise FormatError(f"header lacks {key!r}", path, 1)
    if header["format"] != kind:
        raise FormatError(f"expected a {kind} file, found {header['format']!r}", path, 1)
    if header["version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported version {header['version']}", path, 1)
    fps = header["fps"]
    if isinstance(fps, bool) or not isinstance(fps, (int, float)) or not fps > 0:
        raise FormatError(f"fps must be a positive number, got {fps!r}", path, 1)


def _intrinsics(header: Dict[str, Any], path: str, required: bool) -> Optional[Intrinsics]:
    if "intrinsics" not in header:
        if required:
            raise FormatError("header lacks 'intrinsics'", path, 1)
        return None
    try:
        return Intrinsics(**header["intrinsics"])
    except (TypeError, ValueError) as e:
        raise FormatError(f"bad intrinsics in header ({e})", path, 1)


def _field(record: Any, key: str, path: str, line: int) -> Any:
    if not isinstance(record, dict) or key not in record:
        raise FormatError(f"record lacks {key!r}", path, line)
    return record[key]


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

def write_observations(
    path: str,
    observations: Sequence[FrameObservation],
    fps: float,
    intrinsics: Optional[Intrinsics] = None,
) -> int:
    def rows():
        for o in observations:
            kp = o.keypoints
            record = {
                "frame": int(o.frame_index),
                "bbox": _floats(o.bbox.as_list()),
                "scene_score": float(o.scene_score),
                "keypoints": [
                    [float(u), float(v), int(vis), float(c)]
                    for (u, v), vis, c in zip(kp.uv, kp.visible, kp.confidence)
                ],
            }
            if o.mask_bbox is not None:
                record["mask_bbox"] = _floats(o.mask_bbox.as_list())
            yield record

    extra = {"intrinsics": intrinsics.to_dict()} if intrinsics is not None else {}
    return write_records(path, _header(OBSERVATIONS, fps, **extra), rows())


def read_observations(path: str) -> Tuple[List[FrameObservation], float, Optional[Intrinsics]]:
    """Returns (observations, fps, intrinsics or None)."""
    header, records = read_records(path, OBSERVATIONS)
    out = []
    for line, r in records:
        try:
            kp = np.asarray(_field(r, "keypoints", path, line), dtype=float).reshape(-1, 4)
            mask = r.get("mask_bbox")
            out.append(FrameObservation(
                frame_index=int(_field(r, "frame", path, line)),
                bbox=BBox(*_field(r, "bbox", path, line)),
                keypoints=Keypoints2D(kp[:, :2], kp[:, 2] > 0.5, kp[:, 3]),
                scene_score=float(_field(r, "scene_score", path, line)),
                mask_bbox=BBox(*mask) if mask is not None else None,
            ))
        except (TypeError, ValueError) as e:
            raise FormatError(str(e), path, line)
    return out, float(header["fps"]), _intrinsics(header, path, required=False)


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

@dataclass
class PoseTable:
    """Body states read from a poses file, with their frame indices and optional shot labels."""
    frames: List[int]
    states: List[BodyState]
    shots: Optional[List[int]]
    fps: float


def write_poses(
    path: str,
    states: Sequence[BodyState],
    fps: float,
    frames: Optional[Sequence[int]] = None,
    shots: Optional[Sequence[int]] = None,
) -> int:
    frames = list(range(len(states))) if frames is None else list(frames)

    def rows():
        for i, s in enumerate(states):
            record = {"frame": int(frames[i])}
            if shots is not None:
                record["shot"] = int(shots[i])
            record.update({
                "root_orient": _floats(s.root_orient),
                "body_pose": _floats(s.body_pose),
                "shape": _floats(s.shape),
                "translation": _floats(s.translation),
            })
            yield record

    return write_records(path, _header(POSES, fps), rows())


def read_poses(path: str) -> PoseTable:
    header, records = read_records(path, POSES)
    frames, states, shots = [], [], []
    for line, r in records:
        try:
            frames.append(int(_field(r, "frame", path, line)))
            states.append(BodyState(
                root_orient=_field(r, "root_orient", path, line),
                body_pose=_field(r, "body_pose", path, line),
                shape=_field(r, "shape", path, line),
                translation=_field(r, "translation", path, line),
            ))
            if "shot" in r:
                shots.append(int(r["shot"]))
        except (TypeError, ValueError) as e:
            raise FormatError(str(e), path, line)
    if shots and len(shots) != len(states):
        raise FormatError("shot labels present on some records only", path)
    return PoseTable(frames, states, shots or None, float(header["fps"]))


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------

def write_cameras(
    path: str,
    poses: Sequence[CameraPose],
    intrinsics: Intrinsics,
    fps: float,
    frames: Optional[Sequence[int]] = None,
) -> int:
    frames = list(range(len(poses))) if frames is None else list(frames)
    rows = (
        {"frame": int(f), "rotation": _floats(g.r), "translation": _floats(g.t)}
        for f, g in zip(frames, poses)
    )
    return write_records(path, _header(CAMERAS, fps, intrinsics=intrinsics.to_dict()), rows)


def read_cameras(path: str) -> Tuple[List[int], List[CameraPose], Intrinsics]:
    header, records = read_records(path, CAMERAS)
    intrinsics = _intrinsics(header, path, required=True)
    frames, poses = [], []
    for line, r in records:
        try:
            frames.append(int(_field(r, "frame", path, line)))
            poses.append(CameraPose(
                np.asarray(_field(r, "rotation", path, line), dtype=float).reshape(3, 3),
                _field(r, "translation", path, line),
            ))
        except (TypeError, ValueError) as e:
            raise FormatError(str(e), path, line)
    return frames, poses, intrinsics


# ---------------------------------------------------------------------------
# tracks
# ---------------------------------------------------------------------------

def write_tracks(path: str, tracks: Sequence[PointTrack], fps: float) -> int:
    def rows():
        for t in tracks:
            vis = t.visible
            yield {
                "track_id": int(t.track_id),
                "anchor_frame": int(t.anchor_frame),
                "positions": [
                    [int(f), float(u), float(v)] for f, (u, v) in zip(t.frames[vis], t.positions[vis])
                ],
                "dynamic": bool(t.dynamic),
            }

    return write_records(path, _header(TRACKS, fps), rows())


def read_tracks(path: str) -> List[PointTrack]:
    _, records = read_records(path, TRACKS)
    tracks = []
    for line, r in records:
        positions = _field(r, "positions", path, line)
        try:
            frames = [int(p[0]) for p in positions]
            uv = np.asarray([p[1:3] for p in positions], dtype=float).reshape(-1, 2)
            tracks.append(PointTrack(
                track_id=int(_field(r, "track_id", path, line)),
                frames=frames,
                positions=uv,
                visible=np.ones(len(frames), dtype=bool),
                anchor_frame=int(_field(r, "anchor_frame", path, line)),
                dynamic=bool(r.get("dynamic", False)),
            ))
        except (TypeError, ValueError, IndexError) as e:
            raise FormatError(str(e), path, line)
    return tracks


# ---------------------------------------------------------------------------
# transitions
# ---------------------------------------------------------------------------

def write_transitions(path: str, segmentation: ShotSegmentation, fps: float) -> int:
    header = _header(TRANSITIONS, fps, total_frames=int(segmentation.total_frames))
    return write_records(path, header, (int(t) for t in segmentation.transitions))


def read_transitions(path: str) -> ShotSegmentation:
    header, records = read_records(path, TRANSITIONS)
    if "total_frames" not in header:
        raise FormatError("header lacks 'total_frames'", path, 1)
    total = header["total_frames"]
    if isinstance(total, bool) or not isinstance(total, int):
        raise FormatError(f"total_frames must be an integer, got {total!r}", path, 1)
    transitions = []
    for line, value in records:
        if not isinstance(value, int) or isinstance(value, bool):
            raise FormatError(f"expected a frame index, got {value!r}", path, line)
        transitions.append(value)
    return ShotSegmentation(transitions, total)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def write_metrics(path: str, records: Iterable[Dict[str, Any]], fps: float) -> int:
    rows = (
        {"video": str(r["video"]), "metric": str(r["metric"]), "value": float(r["value"]), "unit": str(r["unit"])}
        for r in records
    )
    return write_records(path, _header(METRICS, fps), rows)


def read_metrics(path: str) -> List[Dict[str, Any]]:
    _, records = read_records(path, METRICS)
    out = []
    for line, r in records:
        out.append({key: _field(r, key, path, line) for key in ("video", "metric", "value", "unit")})
    return out


# ---------------------------------------------------------------------------
# relative poses
# ---------------------------------------------------------------------------

def write_relposes(path: str, transitions: Sequence[int], poses: Sequence[RelativePose], fps: float) -> int:
    rows = (
        {
            "transition": int(t),
            "rotation": _floats(p.r_delta),
            "t_dir": _floats(p.t_dir),
            "inliers": int(p.inlier_count),
        }
        for t, p in zip(transitions, poses)
    )
    return write_records(path, _header(RELPOSES, fps), rows)


def read_relposes(path: str) -> List[Tuple[int, RelativePose]]:
    _, records = read_records(path, RELPOSES)
    out = []
    for line, r in records:
        try:
            rotation = np.asarray(_field(r, "rotation", path, line), dtype=float).reshape(3, 3)
            t_dir = np.asarray(_field(r, "t_dir", path, line), dtype=float).reshape(3)
            inliers = int(_field(r, "inliers", path, line))
            transition = int(_field(r, "transition", path, line))
        except (TypeError, ValueError) as e:
            raise FormatError(str(e), path, line)
        out.append((transition, RelativePose(rotation, t_dir, inliers, np.zeros(0, dtype=bool))))
    return out


# ---------------------------------------------------------------------------
# contacts
# ---------------------------------------------------------------------------

def write_contacts(path: str, contacts: ContactState, fps: float) -> int:
    rows = (
        {"frame": i, "left": bool(l), "right": bool(r), "root_velocity": _floats(v)}
        for i, (l, r, v) in enumerate(zip(contacts.left_contact, contacts.right_contact, contacts.root_velocity))
    )
    return write_records(path, _header(CONTACTS, fps), rows)


def read_contacts(path: str) -> ContactState:
    _, records = read_records(path, CONTACTS)
    left, right, velocity = [], [], []
    for line, r in records:
        left.append(bool(_field(r, "left", path, line)))
        right.append(bool(_field(r, "right", path, line)))
        velocity.append(_field(r, "root_velocity", path, line))
    try:
        return ContactState(left, right, np.asarray(velocity, dtype=float).reshape(-1, 3))
    except (TypeError, ValueError) as e:
        raise FormatError(str(e), path)


# ---------------------------------------------------------------------------
# scene description
# ---------------------------------------------------------------------------

def write_scene(path: str, scene: Dict[str, Any], fps: float) -> int:
    return write_records(path, _header(SCENE, fps), [scene])


def read_scene(path: str) -> Dict[str, Any]:
    _, records = read_records(path, SCENE)
    if len(records) != 1 or not isinstance(records[0][1], dict):
        raise FormatError("expected exactly one scene record", path)
    return records[0][1]
