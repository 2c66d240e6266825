import numpy as np
import pytest

from src.camera.bundle_adjustment import (
    BAWindow,
    PointTrack,
    ba_solve,
    compute_weights,
    mask_tracks,
    reprojection_jacobian,
    reprojection_residual,
    track_confidence,
    window_confidences,
)
from src.camera.sequence import solve_sequence
from src.config import BAConfig
from src.errors import UnderConstrainedError
from src.evaluation.metrics import ate, rpe
from src.geometry.camera import CameraPose, project_points
from src.geometry.rotations import axis_angle_to_matrix, geodesic_distance, yaw_matrix
from src.shots.detector import BBox
from src.synthetic.generator import SceneSpec, generate


def _moving_poses(n, step_yaw=0.01, step_x=0.08):
    return [CameraPose(yaw_matrix(step_yaw * i), np.array([-step_x * i, 0.0, 0.0])) for i in range(n)]


def _scene_tracks(intrinsics, poses, points, start=0):
    """Exact tracks of static world points, anchored at the first frame with true inverse depth."""
    frames = np.arange(start, start + len(poses))
    uv = np.stack([project_points(intrinsics, p, points)[0] for p in poses], axis=1)
    depth0 = poses[0].transform(points)[:, 2]
    return [
        PointTrack(i, frames, uv[i], np.ones(len(poses), dtype=bool), anchor_frame=start, inv_depth=1.0 / depth0[i])
        for i in range(len(points))
    ]


@pytest.fixture
def scene_points(rng):
    return np.column_stack([
        rng.uniform(-3.0, 3.0, 24),
        rng.uniform(-1.5, 1.5, 24),
        rng.uniform(5.0, 10.0, 24),
    ])


@pytest.mark.ba
class TestReprojectionJacobian:

    def test_matches_finite_differences(self, intrinsics, rng):
        anchor = CameraPose(axis_angle_to_matrix([0.02, 0.1, -0.03]), np.array([0.1, -0.05, 0.2]))
        pose = CameraPose(axis_angle_to_matrix([-0.05, 0.2, 0.01]), np.array([-0.4, 0.1, 0.05]))
        anchor_uv = np.array([700.0, 320.0])
        uv = np.array([610.0, 355.0])
        inv_depth = 0.15
        jac = reprojection_jacobian(intrinsics, anchor, pose, anchor_uv, inv_depth, uv)
        eps = 1e-6

        def residual(a, p, d):
            return reprojection_residual(intrinsics, a, p, anchor_uv, d, uv)

        def perturbed(g, i):
            if i < 3:
                w = np.zeros(3)
                w[i] = eps
                return CameraPose(axis_angle_to_matrix(w) @ g.r, g.t)
            dt = np.zeros(3)
            dt[i - 3] = eps
            return CameraPose(g.r, g.t + dt)

        base = residual(anchor, pose, inv_depth)
        for i in range(6):
            num_a = (residual(perturbed(anchor, i), pose, inv_depth) - base) / eps
            num_j = (residual(anchor, perturbed(pose, i), inv_depth) - base) / eps
            assert np.allclose(jac["anchor"][:, i], num_a, rtol=1e-3, atol=1e-2)
            assert np.allclose(jac["frame"][:, i], num_j, rtol=1e-3, atol=1e-2)
        num_d = (residual(anchor, pose, inv_depth + eps) - base) / eps
        assert np.allclose(jac["depth"], num_d, rtol=1e-3, atol=1e-2)

    def test_zero_residual_for_exact_observation(self, intrinsics):
        anchor = CameraPose.identity()
        pose = CameraPose(yaw_matrix(0.1), np.array([-0.3, 0.0, 0.0]))
        point = np.array([0.4, -0.2, 6.0])
        anchor_uv = project_points(intrinsics, anchor, point[None])[0][0]
        uv = project_points(intrinsics, pose, point[None])[0][0]
        r = reprojection_residual(intrinsics, anchor, pose, anchor_uv, 1.0 / 6.0, uv)
        assert np.allclose(r, 0.0, atol=1e-9)


@pytest.mark.ba
class TestTrackConfidence:

    def test_constant_velocity_track_is_fully_confident(self):
        frames = np.arange(10)
        track = PointTrack(0, frames, np.column_stack([frames * 3.0, frames * -1.0]), np.ones(10, dtype=bool))
        assert np.isclose(track_confidence(track, (0, 9)), 1.0)

    def test_too_few_visible_frames(self):
        track = PointTrack(0, [0, 1, 2], np.zeros((3, 2)), [True, False, True])
        assert track_confidence(track, (0, 2)) == 0.0

    def test_erratic_track_scores_lower(self, rng):
        frames = np.arange(20)
        smooth = PointTrack(0, frames, np.column_stack([frames, frames]) * 2.0, np.ones(20, dtype=bool))
        jumpy_pos = np.column_stack([frames, frames]) * 2.0 + rng.normal(0.0, 20.0, (20, 2))
        jumpy = PointTrack(1, frames, jumpy_pos, np.ones(20, dtype=bool))
        conf = window_confidences([smooth, jumpy], (0, 19))
        assert conf[0] == 1.0
        assert conf[1] < 1.0

    def test_weights_normalize_per_frame_pair(self, intrinsics, scene_points):
        poses = _moving_poses(5)
        window = BAWindow(list(range(5)), 12, poses, _scene_tracks(intrinsics, poses, scene_points))
        weights = compute_weights(window, BAConfig())
        for j in range(1, 5):
            total = sum(w for (a, f, _), w in weights.items() if (a, f) == (0, j))
            assert np.isclose(total, 1.0)
        assert not any(f == a for (a, f, _) in weights)


@pytest.mark.ba
class TestMaskTracks:

    def test_positions_inside_mask_are_hidden(self):
        frames = np.arange(8)
        inside = PointTrack(0, frames, np.tile([50.0, 50.0], (8, 1)), np.ones(8, dtype=bool))
        outside = PointTrack(1, frames, np.tile([500.0, 500.0], (8, 1)), np.ones(8, dtype=bool))
        masks = {f: BBox(0.0, 0.0, 100.0, 100.0) for f in range(4)}
        masked = mask_tracks([inside, outside], masks, min_track_len=5)
        assert masked[0].visible.tolist() == [False] * 4 + [True] * 4
        assert masked[0].dynamic
        assert masked[1].visible.all()
        assert not masked[1].dynamic

    def test_input_tracks_untouched(self):
        track = PointTrack(0, np.arange(6), np.tile([10.0, 10.0], (6, 1)), np.ones(6, dtype=bool))
        mask_tracks([track], {0: BBox(0.0, 0.0, 20.0, 20.0)})
        assert track.visible.all()


@pytest.mark.ba
class TestBASolve:

    def test_exact_window_stays_put(self, intrinsics, scene_points):
        poses = _moving_poses(6)
        window = BAWindow(list(range(6)), 12, poses, _scene_tracks(intrinsics, poses, scene_points))
        out = ba_solve(window, intrinsics, BAConfig(gn_iters=3))
        assert out.residual_history[-1] < 1e-12
        for est, truth in zip(out.poses, poses):
            assert geodesic_distance(est.r, truth.r) < 1e-6
            assert np.allclose(est.t, truth.t, atol=1e-6)

    def test_residual_never_increases(self, intrinsics, scene_points, rng):
        truth = _moving_poses(6)
        tracks = _scene_tracks(intrinsics, truth, scene_points)
        start = [truth[0]] + [
            CameraPose(axis_angle_to_matrix(rng.normal(0.0, 0.01, 3)) @ p.r, p.t + rng.normal(0.0, 0.02, 3))
            for p in truth[1:]
        ]
        for t in tracks[1:]:
            t.inv_depth *= 1.0 + rng.uniform(-0.1, 0.1)
        window = BAWindow(list(range(6)), 12, start, tracks)
        out = ba_solve(window, intrinsics, BAConfig(gn_iters=10))
        history = out.residual_history
        assert all(b <= a for a, b in zip(history, history[1:]))
        assert history[-1] < 1e-3 * history[0]

    def test_gauge_held_fixed(self, intrinsics, scene_points):
        poses = _moving_poses(5)
        window = BAWindow(list(range(5)), 12, poses, _scene_tracks(intrinsics, poses, scene_points))
        out = ba_solve(window, intrinsics)
        assert out.poses[0] is poses[0]
        assert out.fixed_track == 0

    def test_too_few_tracks(self, intrinsics, scene_points):
        poses = _moving_poses(5)
        tracks = _scene_tracks(intrinsics, poses, scene_points[:5])
        with pytest.raises(UnderConstrainedError) as info:
            ba_solve(BAWindow(list(range(5)), 12, poses, tracks), intrinsics)
        assert info.value.frame_range == (0, 4)

    def test_single_frame(self, intrinsics, scene_points):
        poses = _moving_poses(1)
        with pytest.raises(UnderConstrainedError):
            ba_solve(BAWindow([0], 12, poses, _scene_tracks(intrinsics, poses, scene_points)), intrinsics)


@pytest.mark.ba
class TestSolveSequence:

    def test_exact_initialization_is_recovered(self, intrinsics, scene_points):
        truth = _moving_poses(20, step_yaw=0.005, step_x=0.03)
        tracks = _scene_tracks(intrinsics, truth, scene_points)
        est = solve_sequence(tracks, {}, intrinsics, BAConfig(window_size=8), initial_poses=truth)
        assert len(est) == 20
        for e, t in zip(est, truth):
            assert geodesic_distance(e.r, t.r) < 1e-6
            assert np.allclose(e.t, t.t, atol=1e-5)

    def test_static_camera_gives_identity(self, intrinsics, scene_points):
        truth = [CameraPose.identity()] * 10
        tracks = _scene_tracks(intrinsics, truth, scene_points)
        est = solve_sequence(tracks, {}, intrinsics, BAConfig(window_size=6))
        for e in est:
            assert geodesic_distance(e.r, np.eye(3)) < 1e-6
            assert np.allclose(e.t, 0.0, atol=1e-6)

    def test_first_pose_is_identity(self, intrinsics, scene_points):
        truth = _moving_poses(12)
        tracks = _scene_tracks(intrinsics, truth, scene_points, start=40)
        shifted = [p.compose(CameraPose(yaw_matrix(0.3), np.array([1.0, 0.0, 0.0]))) for p in truth]
        est = solve_sequence(tracks, {}, intrinsics, BAConfig(window_size=6), initial_poses=shifted)
        assert np.allclose(est[0].r, np.eye(3))
        assert np.allclose(est[0].t, 0.0)

    def test_needs_two_frames(self, intrinsics, scene_points):
        tracks = _scene_tracks(intrinsics, _moving_poses(3), scene_points)
        with pytest.raises(UnderConstrainedError):
            solve_sequence(tracks, {}, intrinsics, frame_range=(0, 1))

    def test_no_tracks(self, intrinsics):
        with pytest.raises(UnderConstrainedError):
            solve_sequence([], {}, intrinsics)


def _masked_cluster(frames, box, rng, count=6, first_id=100):
    """Tracks that stay inside ``box`` on every frame."""
    frames = np.asarray(frames)
    return [
        PointTrack(
            first_id + i,
            frames,
            np.column_stack([
                rng.uniform(box.x_min + 1.0, box.x_max - 1.0, len(frames)),
                rng.uniform(box.y_min + 1.0, box.y_max - 1.0, len(frames)),
            ]),
            np.ones(len(frames), dtype=bool),
        )
        for i in range(count)
    ]


@pytest.mark.ba
class TestMaskedEstimation:

    BOX = BBox(10.0, 10.0, 130.0, 130.0)

    def test_masked_points_do_not_change_a_window(self, intrinsics, scene_points, rng):
        poses = _moving_poses(6)
        static = _scene_tracks(intrinsics, poses, scene_points)
        masks = {f: self.BOX for f in range(6)}
        cfg = BAConfig(gn_iters=4)
        start = [poses[0]] + [CameraPose(p.r, p.t + 0.01) for p in poses[1:]]
        base = ba_solve(BAWindow(list(range(6)), 12, start, mask_tracks(static, masks)), intrinsics, cfg)
        extra = mask_tracks(static + _masked_cluster(range(6), self.BOX, rng), masks)
        assert all(t.dynamic for t in extra[len(static):])
        out = ba_solve(BAWindow(list(range(6)), 12, start, extra), intrinsics, cfg)
        for a, b in zip(base.poses, out.poses):
            assert np.array_equal(a.r, b.r)
            assert np.array_equal(a.t, b.t)
        assert base.residual_history == out.residual_history

    def test_masked_points_do_not_change_a_sequence(self, intrinsics, scene_points, rng):
        truth = _moving_poses(16, step_yaw=0.005, step_x=0.03)
        static = _scene_tracks(intrinsics, truth, scene_points)
        masks = {f: self.BOX for f in range(16)}
        cfg = BAConfig(window_size=6)
        base = solve_sequence(static, masks, intrinsics, cfg, initial_poses=truth)
        cluster = _masked_cluster(range(16), self.BOX, rng)
        out = solve_sequence(static + cluster, masks, intrinsics, cfg, initial_poses=truth)
        for a, b in zip(base, out):
            assert np.array_equal(a.r, b.r)
            assert np.array_equal(a.t, b.t)

    @pytest.mark.slow
    @pytest.mark.acceptance
    def test_orbit_masked_beats_unmasked(self, config):
        bundle = generate(SceneSpec(
            seed=0,
            camera_mode="orbit",
            shot_count=2,
            duration_frames=120,
            min_shot_len=60,
            static_point_count=40,
            dynamic_point_count=20,
        ))
        start, end = bundle.segmentation.shot_ranges[0]
        truth = bundle.cameras[start:end]
        runs = {
            use_masks: solve_sequence(
                bundle.shot_tracks(0), bundle.masks(), bundle.intrinsics, config.ba,
                frame_range=(start, end), use_masks=use_masks,
            )
            for use_masks in (True, False)
        }
        assert config.ba.window_size == 12
        assert ate(runs[True], truth) < 0.02
        masked_trans, _ = rpe(runs[True], truth)
        unmasked_trans, _ = rpe(runs[False], truth)
        assert masked_trans <= unmasked_trans + 1e-12
