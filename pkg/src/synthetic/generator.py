"""
Synthetic multi-shot scenes with complete ground truth.

A continuous world-frame motion is observed by several cameras placed on a
ring around the subject. The timeline is cut into shots, each filmed by a
camera different from the previous one. Per frame the generator emits the
detector inputs (keypoints, boxes, scene-change score), per shot it emits
static and body-attached point tracks, and it keeps the truth needed to
score every stage.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.camera.bundle_adjustment import PointTrack
from src.config import SynthConfig
from src.errors import InfeasibleSpecError, InputError
from src.geometry.camera import CameraPose, Intrinsics, look_at, project_points
from src.geometry.rotations import axis_angle_to_matrix, matrix_to_axis_angle, yaw_angle, yaw_matrix
from src.motion.body import BodyState, ShotMotion
from src.motion.skeleton import forward_kinematics_sequence, joints_array
from src.motion.trajectory import ContactState, detect_contacts
from src.shots.detector import BBox, FrameObservation, Keypoints2D, ShotSegmentation
from src.synthetic.gait import MOTION_KINDS, generate_gait

logger = logging.getLogger(__name__)

SHOT_COUNTS = (2, 3, 4)
CAMERA_MODES = ("follow", "orbit")
MIN_VISIBLE_DEPTH = 0.1
BBOX_PAD = 0.1
MASK_PAD = 0.25
STATIC_DEPTH_RANGE = (3.0, 15.0)
MISSED_CUT_SCORE = 0.9


@dataclass
class SceneSpec:
    """Parameters of one synthetic video."""
    seed: int = 0
    duration_frames: int = 300
    fps: float = 30.0
    motion_kind: str = "walk_circle"
    camera_count: int = 4
    shot_count: int = 2
    static_point_count: int = 40
    dynamic_point_count: int = 20
    keypoint_noise_px: float = 0.0
    outlier_fraction: float = 0.0
    bbox_jitter: float = 0.0
    track_noise_px: float = 0.0
    scene_miss_rate: float = 0.0
    camera_distance_jitter: float = 0.0
    camera_mode: str = "follow"
    orbit_rate: float = 0.2
    min_shot_len: int = 30
    ring_radius_m: float = 4.0
    camera_height_m: float = 1.5
    image_width: int = 1280
    image_height: int = 720
    focal_px: float = 1000.0

    def validate(self) -> None:
        """
        Raises:
            InputError: a field outside its valid range
            InfeasibleSpecError: the duration cannot hold the shots
        """
        if self.shot_count not in SHOT_COUNTS:
            raise InputError(f"shot_count must be one of {{2, 3, 4}}, got {self.shot_count}")
        if self.motion_kind not in MOTION_KINDS:
            raise InputError(f"motion_kind must be one of {', '.join(MOTION_KINDS)}, got {self.motion_kind!r}")
        if self.camera_mode not in CAMERA_MODES:
            raise InputError(f"camera_mode must be one of {', '.join(CAMERA_MODES)}, got {self.camera_mode!r}")
        if self.camera_count < 2:
            raise InputError(f"camera_count must be at least 2, got {self.camera_count}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise InputError(f"outlier_fraction must be in [0, 1), got {self.outlier_fraction}")
        if not 0.0 <= self.scene_miss_rate <= 1.0:
            raise InputError(f"scene_miss_rate must be in [0, 1], got {self.scene_miss_rate}")
        for name in ("keypoint_noise_px", "bbox_jitter", "track_noise_px", "camera_distance_jitter"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be non-negative")
        if self.fps <= 0 or self.focal_px <= 0:
            raise InputError("fps and focal_px must be positive")
        if self.min_shot_len < 2:
            raise InputError("min_shot_len must be at least 2")
        if self.duration_frames < self.shot_count * self.min_shot_len:
            raise InfeasibleSpecError(
                f"{self.duration_frames} frame(s) cannot hold {self.shot_count} shots of at least "
                f"{self.min_shot_len} frames"
            )

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.focal_px, self.focal_px, self.image_width / 2.0, self.image_height / 2.0)

    @classmethod
    def from_config(cls, cfg: SynthConfig, **overrides) -> "SceneSpec":
        base = dict(
            fps=cfg.fps,
            min_shot_len=cfg.min_shot_len,
            ring_radius_m=cfg.ring_radius_m,
            camera_height_m=cfg.camera_height_m,
            image_width=cfg.image_width,
            image_height=cfg.image_height,
            focal_px=cfg.focal_px,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneSpec":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class GroundTruthBundle:
    """
    Everything generated for one synthetic video.

    Attributes:
        motion: World-frame body states
        shot_states: Per-frame states in each shot's own view frame
        cameras: Active world-to-camera pose per frame
        cameras_per_shot: The same poses grouped by shot
        camera_assignment: Ring camera index per shot
        segmentation: True shot transitions
        observations: Detector inputs per frame
        tracks: Point tracks (global frame indices), dynamic flags unset
        dynamic_track_ids: Tracks attached to the moving subject
        contact_schedule: Exact foot contacts of the motion
        true_relative: Camera rotation across each transition
        true_offsets: Yaw part of each transition's camera rotation
    """
    spec: SceneSpec
    intrinsics: Intrinsics
    motion: List[BodyState]
    shot_states: List[BodyState]
    cameras: List[CameraPose]
    cameras_per_shot: List[List[CameraPose]]
    camera_assignment: List[int]
    segmentation: ShotSegmentation
    observations: List[FrameObservation]
    tracks: List[PointTrack]
    dynamic_track_ids: List[int]
    contact_schedule: ContactState
    true_relative: List[np.ndarray] = field(default_factory=list)
    true_offsets: List[np.ndarray] = field(default_factory=list)

    @property
    def frame_count(self) -> int:
        return len(self.motion)

    @property
    def fps(self) -> float:
        return self.spec.fps

    def shot_motions(self) -> List[ShotMotion]:
        """Per-shot view-frame motions with their true cameras."""
        return [
            ShotMotion(self.shot_states[start:end], list(self.cameras_per_shot[k]), k, (start, end))
            for k, (start, end) in enumerate(self.segmentation.shot_ranges)
        ]

    def shot_tracks(self, shot: int) -> List[PointTrack]:
        start, end = self.segmentation.shot_ranges[shot]
        return [t for t in self.tracks if start <= t.frames[0] < end]

    def masks(self) -> Dict[int, Optional[BBox]]:
        return {o.frame_index: o.mask_bbox for o in self.observations}


class _CameraRig:
    """Ring cameras that keep the subject's root in view."""

    def __init__(self, spec: SceneSpec, rng: np.random.Generator):
        self.spec = spec
        spacing = 2.0 * np.pi / spec.camera_count
        self.angles = spacing * np.arange(spec.camera_count) + rng.uniform(-0.2, 0.2, spec.camera_count) * spacing
        self.distances = spec.ring_radius_m * (
            1.0 + spec.camera_distance_jitter * rng.uniform(-1.0, 1.0, spec.camera_count)
        )

    def pose(self, camera: int, t: float, root: np.ndarray) -> CameraPose:
        angle = self.angles[camera]
        if self.spec.camera_mode == "orbit":
            angle = angle + self.spec.orbit_rate * t
        d = self.distances[camera]
        center = np.array([root[0] + d * np.sin(angle), self.spec.camera_height_m, root[2] + d * np.cos(angle)])
        return look_at(center, root)


def _cut_points(spec: SceneSpec, rng: np.random.Generator) -> List[int]:
    slack = spec.duration_frames - spec.shot_count * spec.min_shot_len
    extra = np.sort(rng.integers(0, slack + 1, size=spec.shot_count - 1))
    return [int((k + 1) * spec.min_shot_len + extra[k]) for k in range(spec.shot_count - 1)]


def _assign_cameras(spec: SceneSpec, rng: np.random.Generator) -> List[int]:
    cams = [int(rng.integers(spec.camera_count))]
    for _ in range(spec.shot_count - 1):
        choices = [c for c in range(spec.camera_count) if c != cams[-1]]
        cams.append(int(choices[rng.integers(len(choices))]))
    return cams


def _view_states(motion: Sequence[BodyState], ranges, offsets: Sequence[np.ndarray]) -> List[BodyState]:
    """Shot k's states expressed in its own view frame (orientation O_kᵀ·Γ, translation from its start)."""
    out = []
    accumulated = np.eye(3)
    for k, (start, end) in enumerate(ranges):
        if k > 0:
            accumulated = offsets[k - 1] @ accumulated
        origin = motion[start].translation
        for s in motion[start:end]:
            out.append(BodyState(
                root_orient=matrix_to_axis_angle(accumulated.T @ axis_angle_to_matrix(s.root_orient)),
                body_pose=s.body_pose.copy(),
                shape=s.shape.copy(),
                translation=accumulated.T @ (s.translation - origin),
            ))
    return out


def _observe(
    spec: SceneSpec,
    k: Intrinsics,
    joints: np.ndarray,
    pose: CameraPose,
    rng: np.random.Generator,
) -> tuple:
    """Noisy keypoints plus detector and mask boxes for one frame."""
    uv, depth = project_points(k, pose, joints)
    inside = (
        (depth > MIN_VISIBLE_DEPTH)
        & (uv[:, 0] >= 0) & (uv[:, 0] <= spec.image_width)
        & (uv[:, 1] >= 0) & (uv[:, 1] <= spec.image_height)
    )
    clean = uv[inside] if inside.any() else np.nan_to_num(uv)
    bbox = BBox.around(clean, BBOX_PAD)
    mask = BBox.around(clean, MASK_PAD)
    if spec.bbox_jitter > 0:
        size = np.array([bbox.x_max - bbox.x_min, bbox.y_max - bbox.y_min] * 2)
        j = np.array(bbox.as_list()) + rng.normal(0.0, spec.bbox_jitter, 4) * size
        bbox = BBox(min(j[0], j[2]), min(j[1], j[3]), max(j[0], j[2]), max(j[1], j[3]))

    noisy = np.nan_to_num(uv).copy()
    if spec.keypoint_noise_px > 0:
        noisy += rng.normal(0.0, spec.keypoint_noise_px, noisy.shape)
    if spec.outlier_fraction > 0:
        outliers = inside & (rng.random(len(noisy)) < spec.outlier_fraction)
        n_out = int(outliers.sum())
        noisy[outliers] = np.column_stack([
            rng.uniform(0, spec.image_width, n_out), rng.uniform(0, spec.image_height, n_out)
        ])
    noisy[~inside] = 0.0
    keypoints = Keypoints2D(noisy, inside, inside.astype(float))
    return keypoints, bbox, mask


def _static_tracks(
    spec: SceneSpec,
    k: Intrinsics,
    cameras: Sequence[CameraPose],
    start: int,
    count: int,
    first_id: int,
    rng: np.random.Generator,
) -> List[PointTrack]:
    """Static points sampled in the shot's first view, tracked through the shot."""
    if count == 0:
        return []
    u = rng.uniform(0, spec.image_width, count)
    v = rng.uniform(0, spec.image_height, count)
    z = rng.uniform(*STATIC_DEPTH_RANGE, count)
    rays = np.column_stack([u, v, np.ones(count)]) @ k.inverse_matrix.T
    g0 = cameras[0]
    world = (rays * z[:, None] - g0.t) @ g0.r
    return _track_points(spec, k, cameras, start, [world] * len(cameras), first_id, rng)


def _track_points(
    spec: SceneSpec,
    k: Intrinsics,
    cameras: Sequence[CameraPose],
    start: int,
    world_per_frame: Sequence[np.ndarray],
    first_id: int,
    rng: np.random.Generator,
) -> List[PointTrack]:
    n_points = len(world_per_frame[0])
    uv = np.full((len(cameras), n_points, 2), np.nan)
    for i, (pose, world) in enumerate(zip(cameras, world_per_frame)):
        proj, depth = project_points(k, pose, world)
        ok = (
            (depth > MIN_VISIBLE_DEPTH)
            & (proj[:, 0] >= 0) & (proj[:, 0] <= spec.image_width)
            & (proj[:, 1] >= 0) & (proj[:, 1] <= spec.image_height)
        )
        uv[i, ok] = proj[ok]
    if spec.track_noise_px > 0:
        uv = uv + rng.normal(0.0, spec.track_noise_px, uv.shape)

    tracks = []
    for p in range(n_points):
        seen = np.flatnonzero(np.isfinite(uv[:, p, 0]))
        if len(seen) < 2:
            continue
        tracks.append(PointTrack(
            track_id=first_id + len(tracks),
            frames=start + seen,
            positions=uv[seen, p],
            visible=np.ones(len(seen), dtype=bool),
        ))
    return tracks


def generate(spec: SceneSpec, motion: Optional[Sequence[BodyState]] = None) -> GroundTruthBundle:
    """
    Build a synthetic multi-shot video and its ground truth.

    Args:
        spec: Scene parameters; all randomness derives from ``spec.seed``
        motion: Optional world-frame motion replacing the analytic gait;
            its contact schedule is then detected from the motion itself

    Returns:
        GroundTruthBundle

    Raises:
        InputError / InfeasibleSpecError: invalid spec
    """
    spec.validate()
    motion_rng, camera_rng, cut_rng, noise_rng, track_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(5)
    )
    k = spec.intrinsics
    n = spec.duration_frames

    if motion is None:
        gait = generate_gait(
            spec.motion_kind,
            n,
            spec.fps,
            psi0=float(motion_rng.uniform(-np.pi, np.pi)),
            shape=motion_rng.normal(0.0, 0.5, 10),
        )
        states, contacts = gait.states, gait.contacts
    else:
        if len(motion) != n:
            raise InputError(f"Supplied motion has {len(motion)} frame(s), spec asks for {n}")
        states = [s.copy() for s in motion]
        contacts = detect_contacts(forward_kinematics_sequence(states, spec.fps))

    joints = joints_array(forward_kinematics_sequence(states, spec.fps))
    rig = _CameraRig(spec, camera_rng)
    cuts = _cut_points(spec, cut_rng)
    assignment = _assign_cameras(spec, cut_rng)
    segmentation = ShotSegmentation(cuts, n)
    ranges = segmentation.shot_ranges

    cameras: List[CameraPose] = []
    for shot, (start, end) in enumerate(ranges):
        for f in range(start, end):
            cameras.append(rig.pose(assignment[shot], f / spec.fps, states[f].translation))

    true_relative, true_offsets = [], []
    for shot, t in enumerate(cuts, start=1):
        previous = rig.pose(assignment[shot - 1], t / spec.fps, states[t].translation)
        r_delta = cameras[t].r @ previous.r.T
        true_relative.append(r_delta)
        true_offsets.append(yaw_matrix(yaw_angle(r_delta)))

    missed = 0
    observations = []
    for f in range(n):
        keypoints, bbox, mask = _observe(spec, k, joints[f], cameras[f], noise_rng)
        score = 1.0
        if f in cuts:
            if cut_rng.random() < spec.scene_miss_rate:
                score = MISSED_CUT_SCORE
                missed += 1
            else:
                score = 0.0
        observations.append(FrameObservation(f, bbox, keypoints, score, mask))

    tracks: List[PointTrack] = []
    dynamic_ids: List[int] = []
    for start, end in ranges:
        shot_cams = cameras[start:end]
        tracks.extend(_static_tracks(spec, k, shot_cams, start, spec.static_point_count, len(tracks), track_rng))
        if spec.dynamic_point_count:
            anchor_joints = track_rng.integers(0, joints.shape[1], spec.dynamic_point_count)
            offsets = track_rng.normal(0.0, 0.03, (spec.dynamic_point_count, 3))
            moving = [joints[f, anchor_joints] + offsets for f in range(start, end)]
            body_tracks = _track_points(spec, k, shot_cams, start, moving, len(tracks), track_rng)
            dynamic_ids.extend(t.track_id for t in body_tracks)
            tracks.extend(body_tracks)

    bundle = GroundTruthBundle(
        spec=spec,
        intrinsics=k,
        motion=states,
        shot_states=_view_states(states, ranges, true_offsets),
        cameras=cameras,
        cameras_per_shot=[cameras[s:e] for s, e in ranges],
        camera_assignment=assignment,
        segmentation=segmentation,
        observations=observations,
        tracks=tracks,
        dynamic_track_ids=dynamic_ids,
        contact_schedule=contacts,
        true_relative=true_relative,
        true_offsets=true_offsets,
    )
    logger.info(
        f"Generated {spec.motion_kind} scene (seed {spec.seed}): {n} frames, cuts {cuts}, "
        f"cameras {assignment}, {len(tracks)} track(s) ({len(dynamic_ids)} on the subject), "
        f"{missed} missed scene cut(s)"
    )
    return bundle


def inject_noise(
    motion: Sequence[BodyState],
    seed: int,
    yaw_max_rad: float = 1.0,
    pose_noise_rad: float = 0.0,
    joint_fraction: float = 0.1,
) -> List[BodyState]:
    """
    Corrupt a motion the way training data is augmented.

    A yaw drawn from uniform(0, yaw_max_rad) is applied to the root
    orientation over one contiguous random segment, and Gaussian rotations
    with standard deviation ``pose_noise_rad`` perturb a random
    ``joint_fraction`` of (frame, joint) pairs.

    Raises:
        InputError: negative noise magnitude
    """
    if yaw_max_rad < 0 or pose_noise_rad < 0:
        raise InputError("Noise magnitudes must be non-negative")
    rng = np.random.default_rng(seed)
    out = [s.copy() for s in motion]
    n = len(out)
    if n == 0:
        return out

    if yaw_max_rad > 0:
        a = int(rng.integers(0, n))
        b = int(rng.integers(a + 1, n + 1))
        yaw = yaw_matrix(float(rng.uniform(0.0, yaw_max_rad)))
        for s in out[a:b]:
            s.root_orient = matrix_to_axis_angle(yaw @ axis_angle_to_matrix(s.root_orient))
        logger.debug(f"Injected yaw {np.degrees(yaw_angle(yaw)):.1f} deg over frames {a}-{b - 1}")

    if pose_noise_rad > 0:
        chosen = rng.random((n, out[0].body_pose.shape[0])) < joint_fraction
        for f, j in zip(*np.nonzero(chosen)):
            noise = axis_angle_to_matrix(rng.normal(0.0, pose_noise_rad, 3))
            out[f].body_pose[j] = matrix_to_axis_angle(noise @ axis_angle_to_matrix(out[f].body_pose[j]))
    return out


def shot_count_versions(spec: SceneSpec, counts: Sequence[int] = SHOT_COUNTS) -> Dict[int, GroundTruthBundle]:
    """The same motion cut into each of ``counts`` shots (same seed, so the gait is shared)."""
    return {c: generate(replace(spec, shot_count=c)) for c in counts}
