import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.config import MetricsConfig
from src.errors import DegenerateConfigurationError, ShapeMismatchError
from src.evaluation.metrics import (
    UNITS,
    MetricsReport,
    MotionPair,
    ate,
    evaluate_motion,
    foot_sliding,
    jitter,
    mpjpe,
    pa_mpjpe,
    procrustes_align,
    roe,
    rpe,
    rte,
    w_mpjpe,
    wa_mpjpe,
)
from src.geometry.camera import CameraPose
from src.geometry.rotations import axis_angle_to_matrix, matrix_to_axis_angle, random_rotation, yaw_matrix
from src.motion.body import BodyState
from src.motion.skeleton import FOOT_JOINTS, JOINT_COUNT, SkeletonFrame
from src.motion.trajectory import ContactState


def _transform_motion(states, rot, shift):
    """Rigidly move a whole motion in the world."""
    out = []
    for s in states:
        moved = s.copy()
        moved.root_orient = matrix_to_axis_angle(rot @ axis_angle_to_matrix(s.root_orient))
        moved.translation = rot @ s.translation + shift
        out.append(moved)
    return out


def _pair(pred_joints, true_joints):
    n = len(pred_joints)
    rest = [BodyState.rest()] * n
    return MotionPair(rest, rest, np.asarray(pred_joints, float), np.asarray(true_joints, float))


@pytest.fixture(scope="module")
def motion(two_shot_bundle):
    return two_shot_bundle.motion[:120]


@pytest.mark.metrics
class TestProcrustes:

    def test_recovers_known_similarity(self, rng):
        a = rng.normal(size=(30, 3))
        rot = random_rotation(rng)
        b = 2.5 * a @ rot.T + np.array([1.0, -2.0, 0.5])
        sim = procrustes_align(a, b)
        assert np.isclose(sim.scale, 2.5)
        assert np.allclose(sim.rotation, rot)
        assert np.allclose(sim.apply(a), b)

    def test_fixed_scale(self, rng):
        a = rng.normal(size=(20, 3))
        sim = procrustes_align(a, 3.0 * a, with_scale=False)
        assert sim.scale == 1.0

    def test_never_returns_a_reflection(self, rng):
        a = rng.normal(size=(20, 3))
        sim = procrustes_align(a, a * np.array([1.0, 1.0, -1.0]))
        assert np.isclose(np.linalg.det(sim.rotation), 1.0)

    def test_degenerate_inputs(self):
        line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateConfigurationError):
            procrustes_align(line, line)
        with pytest.raises(DegenerateConfigurationError):
            procrustes_align(np.eye(3)[:2], np.eye(3)[:2])
        with pytest.raises(ShapeMismatchError):
            procrustes_align(np.eye(3), np.eye(4)[:, :3])


@pytest.mark.metrics
class TestJointErrors:

    def test_constant_offset(self, rng):
        truth = rng.normal(size=(10, JOINT_COUNT, 3))
        pair = _pair(truth + np.array([0.01, 0.0, 0.0]), truth)
        assert np.isclose(mpjpe(pair), 10.0)
        assert pa_mpjpe(pair) < 1e-6
        assert wa_mpjpe(pair) < 1e-6
        assert w_mpjpe(pair) < 1e-6

    def test_pa_mpjpe_similarity_invariant(self, rng):
        truth = rng.normal(size=(6, JOINT_COUNT, 3))
        pred = np.stack([
            1.3 * f @ random_rotation(rng).T + rng.normal(size=3) for f in truth
        ])
        pair = _pair(pred, truth)
        assert pa_mpjpe(pair) < 1e-6
        assert mpjpe(pair) > 100.0

    def test_wa_mpjpe_rigid_per_chunk(self, rng):
        truth = rng.normal(size=(40, JOINT_COUNT, 3))
        pred = truth.copy()
        pred[:20] = truth[:20] @ yaw_matrix(0.3).T
        pred[20:] = truth[20:] + 1.0
        pair = _pair(pred, truth)
        assert wa_mpjpe(pair, chunk=20) < 1e-6
        assert w_mpjpe(pair, chunk=20) > 100.0

    def test_naive_loop(self, rng):
        truth = rng.normal(size=(4, JOINT_COUNT, 3))
        pred = truth + rng.normal(scale=0.05, size=truth.shape)
        expected = np.mean([[np.linalg.norm(p - t) for p, t in zip(pf, tf)] for pf, tf in zip(pred, truth)]) * 1000
        assert np.isclose(mpjpe(_pair(pred, truth)), expected)

    def test_length_mismatch(self, motion):
        with pytest.raises(ShapeMismatchError):
            MotionPair.from_states(motion, motion[:-1])


@pytest.mark.metrics
class TestRootErrors:

    def test_global_yaw_and_shift_ignored(self, motion):
        moved = _transform_motion(motion, yaw_matrix(1.1), np.array([3.0, 0.0, -2.0]))
        pair = MotionPair.from_states(moved, motion)
        assert rte(pair) < 1e-9
        assert roe(pair) < 1e-6
        assert wa_mpjpe(pair) < 1e-6

    def test_orientation_error_on_half_the_frames(self, motion):
        n = len(motion)
        pred = [s.copy() for s in motion]
        for s in pred[n // 2:]:
            s.root_orient = matrix_to_axis_angle(yaw_matrix(np.radians(10.0)) @ axis_angle_to_matrix(s.root_orient))
        assert np.isclose(roe(MotionPair.from_states(pred, motion)), 10.0 * (n - n // 2) / n)

    def test_translation_error(self, motion):
        pred = [s.copy() for s in motion]
        for s in pred[1:]:
            s.translation = s.translation + np.array([0.0, 0.2, 0.0])
        n = len(motion)
        assert np.isclose(rte(MotionPair.from_states(pred, motion)), 0.2 * (n - 1) / n)


@pytest.mark.metrics
class TestSmoothness:

    def test_quadratic_motion_has_no_jitter(self):
        t = np.arange(10.0)
        frames = [SkeletonFrame(np.full((JOINT_COUNT, 3), 0.5 * ti ** 2 + ti)) for ti in t]
        assert jitter(frames) < 1e-9

    def test_cubic_motion_jitter(self):
        frames = [SkeletonFrame(np.tile([ti ** 3, 0.0, 0.0], (JOINT_COUNT, 1)), fps=10.0) for ti in range(6)]
        # third difference of t³ is 6
        assert np.isclose(jitter(frames), 6.0 * 10.0 ** 3 / 10.0)

    def test_jitter_needs_four_frames(self):
        with pytest.raises(ShapeMismatchError):
            jitter([SkeletonFrame(np.zeros((JOINT_COUNT, 3)))] * 3)

    def test_foot_sliding_without_contacts(self):
        frames = [SkeletonFrame(np.zeros((JOINT_COUNT, 3)))] * 5
        contacts = ContactState(np.zeros(5, bool), np.zeros(5, bool), np.zeros((5, 3)))
        assert foot_sliding(frames, contacts) == (0.0, False)

    def test_foot_sliding_measures_horizontal_motion(self):
        frames = [SkeletonFrame(np.tile([0.01 * i, 0.3 * i, 0.0], (JOINT_COUNT, 1))) for i in range(5)]
        contacts = ContactState(np.ones(5, bool), np.zeros(5, bool), np.zeros((5, 3)))
        sliding = foot_sliding(frames, contacts)
        assert sliding.has_contact
        assert np.isclose(sliding.value_cm, 1.0)

    def test_foot_sliding_length_mismatch(self):
        frames = [SkeletonFrame(np.zeros((JOINT_COUNT, 3)))] * 5
        contacts = ContactState(np.ones(4, bool), np.ones(4, bool), np.zeros((4, 3)))
        with pytest.raises(ShapeMismatchError):
            foot_sliding(frames, contacts)


@pytest.mark.metrics
class TestCameraMetrics:

    @staticmethod
    def _trajectory(n=30):
        return [
            CameraPose(yaw_matrix(0.02 * i), -yaw_matrix(0.02 * i) @ np.array([0.1 * i, 0.02 * i ** 1.5, np.sin(i / 5.0)]))
            for i in range(n)
        ]

    def test_similarity_invariant(self, rng):
        truth = self._trajectory()
        rot, scale, shift = random_rotation(rng), 0.4, np.array([2.0, -1.0, 5.0])
        pred = []
        for g in truth:
            r = g.r @ rot.T
            center = scale * rot @ g.center + shift
            pred.append(CameraPose(r, -r @ center))
        assert ate(pred, truth) < 1e-9
        trans_err, rot_err = rpe(pred, truth)
        assert trans_err < 1e-9
        assert rot_err < 1e-6

    def test_identical(self):
        truth = self._trajectory()
        assert ate(truth, truth) < 1e-12
        assert rpe(truth, truth, delta=3) == pytest.approx((0.0, 0.0), abs=1e-9)

    def test_static_cameras(self):
        still = [CameraPose.identity()] * 5
        assert ate(still, still) == 0.0

    def test_rotation_error(self):
        truth = self._trajectory(10)
        pred = [CameraPose(yaw_matrix(0.01) @ g.r, g.t) if i % 2 else g for i, g in enumerate(truth)]
        _, rot_err = rpe(pred, truth)
        assert np.isclose(rot_err, np.degrees(0.01), rtol=1e-6)

    def test_mismatched_lengths(self):
        truth = self._trajectory(5)
        with pytest.raises(ShapeMismatchError):
            ate(truth[:4], truth)
        with pytest.raises(ShapeMismatchError):
            rpe(truth[:1], truth[:1])


@pytest.mark.metrics
class TestEvaluateMotion:

    def test_prediction_equal_to_truth(self, two_shot_bundle):
        bundle = two_shot_bundle
        report = evaluate_motion(
            bundle.motion, bundle.motion, bundle.fps, MetricsConfig(),
            contacts=bundle.contact_schedule, pred_cameras=bundle.cameras, true_cameras=bundle.cameras,
        )
        for name in ("mpjpe", "pa_mpjpe", "wa_mpjpe", "w_mpjpe", "rte", "roe", "ate", "rpe_trans", "rpe_rot"):
            assert getattr(report, name) == pytest.approx(0.0, abs=1e-6), name
        assert report.jitter > 0.0
        assert report.foot_sliding < 0.5

    def test_records_skip_missing_metrics(self):
        report = MetricsReport(roe=1.5, f1=1.0)
        records = list(report.to_records("clip"))
        assert [r["metric"] for r in records] == ["roe", "f1"]
        assert records[0] == {"video": "clip", "metric": "roe", "value": 1.5, "unit": "deg"}
        assert set(report.as_dict()) == set(UNITS)


# ---------------------------------------------------------------------------
# Loop-based reference implementations
# ---------------------------------------------------------------------------

SEEDS = range(50)


def _naive_rigid(a, b, with_scale):
    """Best (s, R, t) for s·R·a + t ≈ b from scipy's vector alignment."""
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ac, bc = a - mu_a, b - mu_b
    rot = Rotation.align_vectors(bc, ac)[0].as_matrix()
    scale = 1.0
    if with_scale:
        scale = sum(float(q @ (rot @ p)) for p, q in zip(ac, bc)) / sum(float(p @ p) for p in ac)
    return scale, rot, mu_b - scale * rot @ mu_a


def _naive_mean_error(pred, truth, transform=None):
    total, count = 0.0, 0
    for p, q in zip(pred, truth):
        if transform is not None:
            s, r, t = transform
            p = s * r @ p + t
        total += float(np.sqrt(np.sum((p - q) ** 2)))
        count += 1
    return total / count


def _naive_pa(pred, truth):
    per_frame = []
    for pf, tf in zip(pred, truth):
        transform = _naive_rigid(pf, tf, with_scale=True)
        per_frame.extend(_naive_mean_error([p], [q], transform) for p, q in zip(pf, tf))
    return 1000.0 * float(np.mean(per_frame))


def _naive_wa(pred, truth, chunk):
    errors = []
    for start in range(0, len(pred), chunk):
        p = pred[start:start + chunk].reshape(-1, 3)
        q = truth[start:start + chunk].reshape(-1, 3)
        transform = _naive_rigid(p, q, with_scale=False)
        errors.extend(_naive_mean_error([a], [b], transform) for a, b in zip(p, q))
    return 1000.0 * float(np.mean(errors))


def _naive_w(pred, truth, chunk):
    transform = _naive_rigid(pred[:chunk].reshape(-1, 3), truth[:chunk].reshape(-1, 3), with_scale=False)
    return 1000.0 * _naive_mean_error(pred.reshape(-1, 3), truth.reshape(-1, 3), transform)


def _heading_fix(pred_states, true_states):
    rel = Rotation.from_rotvec(true_states[0].root_orient) * Rotation.from_rotvec(pred_states[0].root_orient).inv()
    forward = rel.apply([0.0, 0.0, 1.0])
    return Rotation.from_rotvec([0.0, np.arctan2(forward[0], forward[2]), 0.0])


def _naive_rte(pred_states, true_states):
    fix = _heading_fix(pred_states, true_states)
    p0, t0 = pred_states[0].translation, true_states[0].translation
    dists = [np.linalg.norm(fix.apply(p.translation - p0) + t0 - t.translation) for p, t in zip(pred_states, true_states)]
    return float(sum(dists) / len(dists))


def _naive_roe(pred_states, true_states):
    fix = _heading_fix(pred_states, true_states)
    angles = [
        ((fix * Rotation.from_rotvec(p.root_orient)).inv() * Rotation.from_rotvec(t.root_orient)).magnitude()
        for p, t in zip(pred_states, true_states)
    ]
    return float(np.degrees(sum(angles) / len(angles)))


def _naive_jitter(joints, fps):
    mags = []
    for t in range(len(joints) - 3):
        for j in range(joints.shape[1]):
            d = joints[t + 3, j] - 3.0 * joints[t + 2, j] + 3.0 * joints[t + 1, j] - joints[t, j]
            mags.append(np.sqrt(d @ d))
    return float(np.mean(mags)) * fps ** 3 / 10.0


def _naive_sliding(joints, left, right):
    steps = []
    for contact, ids in ((left, FOOT_JOINTS["left"]), (right, FOOT_JOINTS["right"])):
        for t in range(len(joints) - 1):
            if contact[t] and contact[t + 1]:
                for j in ids:
                    dx = joints[t + 1, j, 0] - joints[t, j, 0]
                    dz = joints[t + 1, j, 2] - joints[t, j, 2]
                    steps.append(np.hypot(dx, dz))
    return 100.0 * float(np.mean(steps))


def _homogeneous(pose):
    m = np.eye(4)
    m[:3, :3], m[:3, 3] = pose.r, pose.t
    return m


def _naive_camera_scale_and_centers(pred, truth):
    pc = np.array([-p.r.T @ p.t for p in pred])
    tc = np.array([-p.r.T @ p.t for p in truth])
    return _naive_rigid(pc, tc, with_scale=True), pc, tc


def _naive_ate(pred, truth):
    (s, r, t), pc, tc = _naive_camera_scale_and_centers(pred, truth)
    sq = [np.sum((s * r @ p + t - q) ** 2) for p, q in zip(pc, tc)]
    return float(np.sqrt(np.mean(sq)))


def _naive_rpe(pred, truth, delta):
    (s, _, _), _, _ = _naive_camera_scale_and_centers(pred, truth)
    trans, rots = [], []
    for t in range(len(pred) - delta):
        rp = _homogeneous(pred[t + delta]) @ np.linalg.inv(_homogeneous(pred[t]))
        rt = _homogeneous(truth[t + delta]) @ np.linalg.inv(_homogeneous(truth[t]))
        trans.append(np.linalg.norm(s * rp[:3, 3] - rt[:3, 3]))
        cos = (np.trace(rp[:3, :3].T @ rt[:3, :3]) - 1.0) / 2.0
        rots.append(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(np.mean(trans)), float(np.degrees(np.mean(rots)))


def _random_joints(rng, frames=12):
    truth = rng.normal(size=(frames, JOINT_COUNT, 3))
    pred = np.stack([
        rng.uniform(0.5, 2.0) * f @ random_rotation(rng).T + rng.normal(size=3) for f in truth
    ]) + rng.normal(scale=0.05, size=truth.shape)
    return pred, truth


def _random_states(rng, frames=15):
    return [
        BodyState(rng.normal(scale=0.8, size=3), translation=rng.normal(scale=2.0, size=3))
        for _ in range(frames)
    ]


def _random_cameras(rng, frames=20):
    truth = [
        CameraPose(r, -r @ c)
        for r, c in ((random_rotation(rng), rng.normal(scale=3.0, size=3)) for _ in range(frames))
    ]
    rot, scale, shift = random_rotation(rng), rng.uniform(0.3, 3.0), rng.normal(size=3)
    pred = []
    for g in truth:
        r = axis_angle_to_matrix(rng.normal(scale=0.05, size=3)) @ g.r @ rot.T
        center = scale * rot @ g.center + shift + rng.normal(scale=0.1, size=3)
        pred.append(CameraPose(r, -r @ center))
    return pred, truth


@pytest.mark.metrics
class TestAgainstLoopReference:

    @pytest.mark.parametrize("seed", SEEDS)
    def test_mpjpe(self, seed):
        pred, truth = _random_joints(np.random.default_rng(seed))
        expected = 1000.0 * _naive_mean_error(pred.reshape(-1, 3), truth.reshape(-1, 3))
        assert mpjpe(_pair(pred, truth)) == pytest.approx(expected, rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_pa_mpjpe(self, seed):
        pred, truth = _random_joints(np.random.default_rng(seed))
        assert pa_mpjpe(_pair(pred, truth)) == pytest.approx(_naive_pa(pred, truth), rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_wa_mpjpe(self, seed):
        rng = np.random.default_rng(seed)
        truth = rng.normal(size=(20, JOINT_COUNT, 3))
        pred = truth @ random_rotation(rng).T + rng.normal(scale=0.1, size=truth.shape)
        assert wa_mpjpe(_pair(pred, truth), chunk=7) == pytest.approx(_naive_wa(pred, truth, 7), rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_w_mpjpe(self, seed):
        rng = np.random.default_rng(seed)
        truth = rng.normal(size=(20, JOINT_COUNT, 3))
        pred = truth @ random_rotation(rng).T + rng.normal(scale=0.1, size=truth.shape)
        assert w_mpjpe(_pair(pred, truth), chunk=7) == pytest.approx(_naive_w(pred, truth, 7), rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_rte_and_roe(self, seed):
        rng = np.random.default_rng(seed)
        pred, truth = _random_states(rng), _random_states(rng)
        empty = np.zeros((len(pred), JOINT_COUNT, 3))
        pair = MotionPair(pred, truth, empty, empty.copy())
        assert rte(pair) == pytest.approx(_naive_rte(pred, truth), rel=1e-6)
        assert roe(pair) == pytest.approx(_naive_roe(pred, truth), rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_jitter(self, seed):
        rng = np.random.default_rng(seed)
        joints = rng.normal(size=(12, JOINT_COUNT, 3))
        fps = float(rng.choice([24.0, 30.0, 60.0]))
        frames = [SkeletonFrame(j, fps) for j in joints]
        assert jitter(frames) == pytest.approx(_naive_jitter(joints, fps), rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_foot_sliding(self, seed):
        rng = np.random.default_rng(seed)
        joints = rng.normal(size=(15, JOINT_COUNT, 3))
        left, right = rng.random(15) < 0.6, rng.random(15) < 0.6
        left[:2] = True
        contacts = ContactState(left, right, np.zeros((15, 3)))
        sliding = foot_sliding([SkeletonFrame(j) for j in joints], contacts)
        assert sliding.has_contact
        assert sliding.value_cm == pytest.approx(_naive_sliding(joints, left, right), rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_ate(self, seed):
        pred, truth = _random_cameras(np.random.default_rng(seed))
        assert ate(pred, truth) == pytest.approx(_naive_ate(pred, truth), rel=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_rpe(self, seed):
        pred, truth = _random_cameras(np.random.default_rng(seed))
        delta = 1 + seed % 3
        trans_err, rot_err = rpe(pred, truth, delta)
        naive_trans, naive_rot = _naive_rpe(pred, truth, delta)
        assert trans_err == pytest.approx(naive_trans, rel=1e-6)
        assert rot_err == pytest.approx(naive_rot, rel=1e-6)


@pytest.mark.metrics
class TestClosedForms:

    @pytest.mark.parametrize("omega,fps", [(0.1, 30.0), (0.5, 25.0), (1.3, 60.0)])
    def test_circular_motion_jitter(self, omega, fps):
        # x = A·sin(ωt), z = A·cos(ωt): every third difference has length A·(2·sin(ω/2))³
        radius = 0.7
        frames = [
            SkeletonFrame(np.tile([radius * np.sin(omega * t), 1.0, radius * np.cos(omega * t)], (JOINT_COUNT, 1)), fps)
            for t in range(40)
        ]
        expected = radius * (2.0 * np.sin(omega / 2.0)) ** 3 * fps ** 3 / 10.0
        assert jitter(frames) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_procrustes_beats_random_search(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(24, 3))
        b = 1.7 * a @ random_rotation(rng).T + rng.normal(size=3) + rng.normal(scale=0.3, size=a.shape)
        best = procrustes_align(a, b)

        def cost(scale, rot, shift):
            return float(np.sum((scale * a @ rot.T + shift - b) ** 2))

        optimum = cost(best.scale, best.rotation, best.translation)
        for _ in range(300):
            rot = axis_angle_to_matrix(rng.normal(scale=0.2, size=3)) @ best.rotation
            scale = best.scale * rng.uniform(0.8, 1.25)
            shift = best.translation + rng.normal(scale=0.2, size=3)
            assert optimum <= cost(scale, rot, shift) + 1e-9
        for _ in range(300):
            rot = random_rotation(rng)
            assert optimum <= cost(rng.uniform(0.1, 5.0), rot, rng.normal(scale=3.0, size=3)) + 1e-9
