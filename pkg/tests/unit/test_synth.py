import numpy as np
import pytest

from src.config import SynthConfig
from src.errors import InfeasibleSpecError, InputError
from src.geometry.camera import project_points
from src.geometry.rotations import axis_angle_to_matrix, geodesic_distance, is_rotation, yaw_angle, yaw_matrix
from src.motion.skeleton import forward_kinematics_sequence, joints_array
from src.synthetic.generator import (
    MISSED_CUT_SCORE,
    SceneSpec,
    generate,
    inject_noise,
    shot_count_versions,
)


@pytest.mark.synth
class TestSceneSpec:

    @pytest.mark.parametrize("shots", [1, 5])
    def test_shot_count_outside_range(self, shots):
        with pytest.raises(InputError, match="must be one of"):
            SceneSpec(shot_count=shots).validate()

    def test_too_short_for_the_shots(self):
        with pytest.raises(InfeasibleSpecError):
            SceneSpec(duration_frames=50, shot_count=4).validate()

    def test_unknown_motion_and_camera_mode(self):
        with pytest.raises(InputError):
            SceneSpec(motion_kind="swim").validate()
        with pytest.raises(InputError):
            SceneSpec(camera_mode="dolly").validate()

    def test_negative_noise(self):
        with pytest.raises(InputError):
            SceneSpec(keypoint_noise_px=-1.0).validate()

    def test_from_config_and_dict(self):
        spec = SceneSpec.from_config(SynthConfig(focal_px=800.0), seed=4, shot_count=3)
        assert spec.focal_px == 800.0
        assert spec.intrinsics.fx == 800.0
        assert SceneSpec.from_dict({**spec.to_dict(), "unknown": 1}) == spec


@pytest.mark.synth
class TestGenerate:

    def test_cut_points_respect_minimum_shot_length(self, three_shot_bundle):
        bundle = three_shot_bundle
        lengths = [end - start for start, end in bundle.segmentation.shot_ranges]
        assert len(lengths) == 3
        assert min(lengths) >= bundle.spec.min_shot_len
        assert sum(lengths) == bundle.frame_count

    def test_consecutive_shots_use_different_cameras(self, three_shot_bundle):
        assignment = three_shot_bundle.camera_assignment
        assert all(a != b for a, b in zip(assignment, assignment[1:]))

    def test_keypoints_reproject_exactly_without_noise(self, two_shot_bundle):
        bundle = two_shot_bundle
        joints = joints_array(forward_kinematics_sequence(bundle.motion))
        for f in range(0, bundle.frame_count, 17):
            obs = bundle.observations[f]
            uv, _ = project_points(bundle.intrinsics, bundle.cameras[f], joints[f])
            vis = obs.keypoints.visible
            assert vis.sum() > 10
            assert np.allclose(obs.keypoints.uv[vis], uv[vis], atol=1e-9)
            assert np.all(obs.keypoints.uv[~vis] == 0.0)

    def test_static_tracks_are_epipolar_consistent(self, two_shot_bundle):
        bundle = two_shot_bundle
        track = next(t for t in bundle.shot_tracks(0) if t.track_id not in bundle.dynamic_track_ids)
        first, last = int(track.frames[0]), int(track.frames[-1])
        g0, g1 = bundle.cameras[first], bundle.cameras[last]
        k = bundle.intrinsics
        ray0 = k.inverse_matrix @ np.append(track.positions[0], 1.0)
        ray1 = k.inverse_matrix @ np.append(track.positions[-1], 1.0)
        r = g1.r @ g0.r.T
        t = g1.t - r @ g0.t
        assert abs(ray1 @ np.cross(t, r @ ray0)) < 1e-9 * max(np.linalg.norm(t), 1.0)

    def test_scene_scores_mark_cuts(self, two_shot_bundle):
        cuts = set(two_shot_bundle.segmentation.transitions)
        for obs in two_shot_bundle.observations:
            assert obs.scene_score == (0.0 if obs.frame_index in cuts else 1.0)

    def test_missed_cuts_get_high_score(self):
        bundle = generate(SceneSpec(seed=5, duration_frames=120, shot_count=2, scene_miss_rate=1.0,
                                    static_point_count=0, dynamic_point_count=0))
        cut = bundle.segmentation.transitions[0]
        assert bundle.observations[cut].scene_score == MISSED_CUT_SCORE

    def test_view_frames_start_at_origin(self, three_shot_bundle):
        bundle = three_shot_bundle
        for start, _ in bundle.segmentation.shot_ranges:
            assert np.allclose(bundle.shot_states[start].translation, 0.0)

    def test_true_offsets_are_yaw_of_relative_rotation(self, three_shot_bundle):
        for rel, offset in zip(three_shot_bundle.true_relative, three_shot_bundle.true_offsets):
            assert is_rotation(rel)
            assert np.allclose(offset, yaw_matrix(yaw_angle(rel)))

    def test_dynamic_tracks_are_flagged(self, two_shot_bundle):
        ids = {t.track_id for t in two_shot_bundle.tracks}
        assert set(two_shot_bundle.dynamic_track_ids) <= ids
        assert len(two_shot_bundle.dynamic_track_ids) > 0
        assert all(not t.dynamic for t in two_shot_bundle.tracks)

    def test_masks_cover_the_subject(self, two_shot_bundle):
        obs = two_shot_bundle.observations[10]
        kp = obs.keypoints
        assert np.all(obs.mask_bbox.contains(kp.uv[kp.visible, 0], kp.uv[kp.visible, 1]))

    def test_same_seed_same_scene(self):
        spec = SceneSpec(seed=21, duration_frames=90, shot_count=2, keypoint_noise_px=1.0, outlier_fraction=0.1)
        a, b = generate(spec), generate(spec)
        assert a.segmentation.transitions == b.segmentation.transitions
        assert a.camera_assignment == b.camera_assignment
        assert np.array_equal(a.observations[40].keypoints.uv, b.observations[40].keypoints.uv)
        assert np.array_equal(a.tracks[3].positions, b.tracks[3].positions)

    def test_supplied_motion_length_checked(self, two_shot_bundle):
        with pytest.raises(InputError):
            generate(SceneSpec(seed=1, duration_frames=100), motion=two_shot_bundle.motion)

    def test_shot_count_versions_share_the_motion(self):
        spec = SceneSpec(seed=8, duration_frames=150, static_point_count=0, dynamic_point_count=0)
        versions = shot_count_versions(spec)
        assert sorted(versions) == [2, 3, 4]
        for count, bundle in versions.items():
            assert len(bundle.segmentation.transitions) == count - 1
            assert np.allclose(bundle.motion[75].translation, versions[2].motion[75].translation)


@pytest.mark.synth
class TestInjectNoise:

    def test_yaw_applied_to_one_segment(self, two_shot_bundle):
        motion = two_shot_bundle.motion
        noisy = inject_noise(motion, seed=3, yaw_max_rad=0.8)
        angles = np.array([
            geodesic_distance(axis_angle_to_matrix(a.root_orient), axis_angle_to_matrix(b.root_orient))
            for a, b in zip(noisy, motion)
        ])
        changed = np.flatnonzero(angles > 1e-9)
        assert len(changed) > 0
        assert np.all(np.diff(changed) == 1)
        assert np.allclose(angles[changed], angles[changed[0]])
        assert angles.max() <= 0.8 + 1e-9

    def test_deterministic_and_non_destructive(self, two_shot_bundle):
        motion = two_shot_bundle.motion
        before = motion[50].body_pose.copy()
        a = inject_noise(motion, seed=9, pose_noise_rad=0.1)
        b = inject_noise(motion, seed=9, pose_noise_rad=0.1)
        assert all(np.array_equal(x.body_pose, y.body_pose) for x, y in zip(a, b))
        assert np.array_equal(motion[50].body_pose, before)

    def test_translations_untouched(self, two_shot_bundle):
        motion = two_shot_bundle.motion
        noisy = inject_noise(motion, seed=2, yaw_max_rad=1.0, pose_noise_rad=0.05)
        assert all(np.array_equal(a.translation, b.translation) for a, b in zip(noisy, motion))

    def test_negative_magnitude(self, two_shot_bundle):
        with pytest.raises(InputError):
            inject_noise(two_shot_bundle.motion, seed=0, yaw_max_rad=-0.1)
