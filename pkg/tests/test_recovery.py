import numpy as np
import pytest

from pointmap4d import (
    PointmapSequence,
    RansacConfig,
    ate,
    corrupt_pointmap,
    estimate_focal,
    estimate_pose_pnp,
    normalize_pointmap,
    recover_all,
    rotation_angle_deg,
)
from pointmap4d.errors import NoConsensus, TooFewValidPoints
from pointmap4d.recovery import pixel_threshold


def rotation_error_deg(a, b):
    return rotation_angle_deg(a.rotation.T @ b.rotation)


class TestEstimateFocal:
    def test_recovers_scene_focal(self, small_scene):
        f = estimate_focal(small_scene.gt_pointmap.points[0],
                           small_scene.gt_pointmap.valid[0])
        assert abs(f - small_scene.intrinsics.focal) < 0.5

    def test_single_point_one_iteration(self):
        # one off-axis noise-free point pins the focal in a single update
        f_true = 75.0
        height, width = 10, 10
        pts = np.zeros((height, width, 3))
        valid = np.zeros((height, width), bool)
        u, v, z = 8.5, 2.5, 4.0
        pts[2, 8] = [(u - 5.0) * z / f_true, (v - 5.0) * z / f_true, z]
        valid[2, 8] = True
        trace = []
        f = estimate_focal(pts, valid, min_points=1, objective_trace=trace)
        assert abs(f - f_true) < 1e-9
        assert len(trace) <= 3

    def test_outlier_robustness(self, small_scene):
        corrupted = corrupt_pointmap(small_scene.gt_pointmap, 0.2, 0.0,
                                     seed=21)
        f = estimate_focal(corrupted.points[0], corrupted.valid[0])
        assert abs(f - small_scene.intrinsics.focal) \
            < 0.02 * small_scene.intrinsics.focal

    def test_objective_nonincreasing(self, small_scene):
        corrupted = corrupt_pointmap(small_scene.gt_pointmap, 0.1, 0.01,
                                     seed=4)
        trace = []
        estimate_focal(corrupted.points[0], corrupted.valid[0],
                       objective_trace=trace)
        diffs = np.diff(trace)
        assert np.all(diffs <= 1e-9 * np.abs(trace[:-1]))

    def test_too_few_points(self):
        pts = np.ones((4, 4, 3))
        valid = np.zeros((4, 4), bool)
        valid[0, 0] = True
        with pytest.raises(TooFewValidPoints):
            estimate_focal(pts, valid)

    def test_scale_invariant(self, small_scene):
        p = small_scene.gt_pointmap
        f1 = estimate_focal(p.points[0], p.valid[0])
        f2 = estimate_focal(p.points[0] * 3.7, p.valid[0])
        assert abs(f1 - f2) < 1e-9


class TestEstimatePose:
    def test_first_frame_identity(self, small_scene, fast_ransac):
        p = small_scene.gt_pointmap
        pose, ratio = estimate_pose_pnp(p.points[0], p.valid[0],
                                        small_scene.intrinsics, fast_ransac)
        assert rotation_angle_deg(pose.rotation) < 1e-6
        assert np.max(np.abs(pose.translation)) < 1e-6 * 5.0
        assert ratio == 1.0

    def test_noise_free_frames_exact(self, dynamic_scene, fast_ransac):
        p = dynamic_scene.gt_pointmap
        for i in range(1, p.frames):
            pose, ratio = estimate_pose_pnp(p.points[i], p.valid[i],
                                            dynamic_scene.intrinsics,
                                            fast_ransac)
            assert rotation_error_deg(pose,
                                      dynamic_scene.trajectory.poses[i]) < 0.01
            assert ratio == 1.0

    def test_outlier_robustness(self, small_scene, fast_ransac):
        corrupted = corrupt_pointmap(small_scene.gt_pointmap, 0.3, 0.0,
                                     seed=17)
        span = np.ptp(small_scene.trajectory.translations(), axis=0).max()
        for i in (1, 3):
            pose, ratio = estimate_pose_pnp(corrupted.points[i],
                                            corrupted.valid[i],
                                            small_scene.intrinsics,
                                            fast_ransac)
            gt = small_scene.trajectory.poses[i]
            assert rotation_error_deg(pose, gt) < 1.0
            assert np.linalg.norm(pose.translation - gt.translation) \
                < 0.01 * span

    def test_deterministic(self, small_scene, fast_ransac):
        p = small_scene.gt_pointmap
        a = estimate_pose_pnp(p.points[2], p.valid[2],
                              small_scene.intrinsics, fast_ransac)
        b = estimate_pose_pnp(p.points[2], p.valid[2],
                              small_scene.intrinsics, fast_ransac)
        assert np.array_equal(a[0].rotation, b[0].rotation)
        assert np.array_equal(a[0].translation, b[0].translation)
        assert a[1] == b[1]

    def test_reprojection_consistency_tight_threshold(self, small_scene):
        # noise-free input: every valid pixel is an inlier at 0.5 px
        cfg = RansacConfig(iterations=128, inlier_threshold=0.5, seed=3)
        p = small_scene.gt_pointmap
        _, ratio = estimate_pose_pnp(p.points[1], p.valid[1],
                                     small_scene.intrinsics, cfg)
        assert ratio == 1.0

    def test_too_few_points(self, small_scene, fast_ransac):
        pts = small_scene.gt_pointmap.points[0]
        valid = np.zeros(pts.shape[:2], bool)
        valid[0, :3] = True
        with pytest.raises(TooFewValidPoints):
            estimate_pose_pnp(pts, valid, small_scene.intrinsics, fast_ransac)

    def test_no_consensus_on_scrambled_points(self, small_scene, fast_ransac):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-50, 50, size=small_scene.gt_pointmap.points[0].shape)
        valid = np.ones(pts.shape[:2], bool)
        with pytest.raises(NoConsensus):
            estimate_pose_pnp(pts, valid, small_scene.intrinsics, fast_ransac)


class TestRecoverAll:
    def test_noise_free_round_trip(self, dynamic_scene, fast_ransac):
        res = recover_all(dynamic_scene.gt_pointmap, fast_ransac)
        assert res.failed_frames == ()
        assert abs(res.intrinsics.focal - dynamic_scene.intrinsics.focal) \
            < 1e-3 * dynamic_scene.intrinsics.focal
        for rec, gt in zip(res.trajectory.poses,
                           dynamic_scene.trajectory.poses):
            assert rotation_error_deg(rec, gt) < 0.01
        joint = res.depth.valid & dynamic_scene.depth.valid
        pred = res.depth.values[joint]
        gt = dynamic_scene.depth.values[joint]
        assert np.mean(np.abs(pred - gt) / gt) < 1e-4

    def test_single_static_frame(self, small_scene, fast_ransac):
        p = small_scene.gt_pointmap
        single = PointmapSequence(p.points[:1], p.valid[:1])
        res = recover_all(single, fast_ransac)
        assert len(res.trajectory) == 1
        assert res.trajectory.poses[0].is_identity(tol=0.0)
        m = single.valid[0]
        assert np.allclose(res.depth.values[0][m], p.points[0][m][:, 2],
                           atol=1e-12)

    def test_depth_positivity(self, dynamic_scene, fast_ransac):
        res = recover_all(dynamic_scene.gt_pointmap, fast_ransac)
        assert np.all(res.depth.values[res.depth.valid] > 0)

    def test_normalization_equivariance(self, small_scene, fast_ransac):
        base = recover_all(small_scene.gt_pointmap, fast_ransac)
        normalized = normalize_pointmap(small_scene.gt_pointmap)
        scaled = recover_all(normalized, fast_ransac)
        s = normalized.norm_scale
        assert abs(base.intrinsics.focal - scaled.intrinsics.focal) < 1e-9
        for a, b in zip(base.trajectory.poses, scaled.trajectory.poses):
            assert np.max(np.abs(a.rotation - b.rotation)) < 1e-9
            assert np.max(np.abs(b.translation * s - a.translation)) < 1e-9
        joint = base.depth.valid & scaled.depth.valid
        assert np.max(np.abs(scaled.depth.values[joint] * s
                             - base.depth.values[joint])) < 1e-9

    def test_failed_frames_flagged(self, small_scene, fast_ransac):
        p = small_scene.gt_pointmap
        pts = np.array(p.points)
        rng = np.random.default_rng(1)
        pts[2] = rng.uniform(-100, 100, size=pts[2].shape)  # destroy frame 2
        broken = PointmapSequence(pts, p.valid)
        res = recover_all(broken, fast_ransac)
        assert 2 in res.failed_frames
        assert res.per_frame_inlier_ratio[2] == 0.0
        assert not res.depth.valid[2].any()
        assert res.trajectory.poses[2].is_identity(tol=0.0)
        assert 1 not in res.failed_frames

    def test_monotone_degradation(self, small_scene, fast_ransac):
        # mean ATE over corruption seeds; a single seed's ordering between
        # adjacent fractions is a coin flip at these error magnitudes
        errs = []
        for frac in (0.0, 0.1, 0.3):
            vals = []
            for seed in range(40, 48):
                corrupted = corrupt_pointmap(small_scene.gt_pointmap, frac,
                                             0.0005, seed=seed)
                res = recover_all(corrupted, fast_ransac)
                vals.append(ate(res.trajectory, small_scene.trajectory))
            errs.append(np.mean(vals))
        assert errs[0] <= errs[1] <= errs[2]


def test_pixel_threshold_scales_with_diagonal():
    cfg = RansacConfig(inlier_threshold=2.0)
    assert abs(pixel_threshold(cfg, 512, 384) - 2.0) < 1e-12
    assert abs(pixel_threshold(cfg, 1024, 768) - 4.0) < 1e-12
