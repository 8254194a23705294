import numpy as np
import pytest

from needleguide.calibration import (
    DegenerateInput,
    LengthMismatch,
    RigidTransformEstimator,
    ScaleUnobservable,
    absolute_orientation,
    register_us_plane,
)
from needleguide.geometry import Pose, Quat, Vec3, invert, transform_point

from conftest import random_pose, random_quat


class TestAbsoluteOrientation:
    def test_identity_on_equal_clouds(self):
        rng = np.random.default_rng(21)
        pts = rng.uniform(-1, 1, size=(20, 3))
        fit = absolute_orientation(pts, pts)
        assert fit.transform.position.norm() < 1e-12
        assert fit.transform.orientation.approx_equal(Quat.identity(), 1e-12)
        assert fit.scale == 1.0
        assert fit.rms_residual < 1e-12

    def test_exact_recovery_of_random_rigid_transform(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            src = rng.uniform(-1, 1, size=(20, 3))
            pose = random_pose(rng)
            R = pose.orientation.as_matrix()
            tgt = src @ R.T + pose.position.as_array()
            fit = absolute_orientation(src, tgt)
            assert (fit.transform.position - pose.position).norm() < 1e-12
            assert fit.transform.orientation.approx_equal(pose.orientation, 1e-12)
            assert np.linalg.det(fit.transform.orientation.as_matrix()) > 0.0

    def test_scale_estimation(self):
        rng = np.random.default_rng(23)
        src = rng.uniform(-1, 1, size=(15, 3))
        pose = random_pose(rng)
        scale = 0.37
        tgt = scale * (src @ pose.orientation.as_matrix().T) + pose.position.as_array()
        fit = absolute_orientation(src, tgt, estimate_scale=True)
        assert abs(fit.scale - scale) < 1e-12
        assert (fit.transform.position - pose.position).norm() < 1e-12

    def test_coplanar_noisy_rotation_always_proper(self):
        rng = np.random.default_rng(24)
        for _ in range(1000):
            n = int(rng.integers(3, 12))
            src = np.column_stack([
                rng.uniform(-1, 1, size=(n, 2)), np.zeros(n)
            ])
            pose = random_pose(rng)
            tgt = src @ pose.orientation.as_matrix().T + pose.position.as_array()
            tgt = tgt + rng.normal(scale=1e-3, size=tgt.shape)
            est = RigidTransformEstimator().fit(src, tgt)
            assert np.linalg.det(est.rotation_) > 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            absolute_orientation(np.zeros((4, 3)), np.zeros((5, 3)))

    def test_collinear_source_degenerate(self):
        src = np.outer(np.linspace(0, 1, 10), [1.0, 1.0, 0.0])
        with pytest.raises(DegenerateInput):
            absolute_orientation(src, src)

    def test_estimator_transform_method(self):
        rng = np.random.default_rng(25)
        src = rng.uniform(-1, 1, size=(12, 3))
        pose = random_pose(rng)
        tgt = src @ pose.orientation.as_matrix().T + pose.position.as_array()
        est = RigidTransformEstimator().fit(src, tgt)
        assert np.abs(est.transform(src) - tgt).max() < 1e-12


def make_us_pairs(image_to_probe: Pose, spacing: float, n: int, rng):
    world, image, poses = [], [], []
    for _ in range(n):
        probe = random_pose(rng, trans_scale=0.2)
        u = float(rng.uniform(0, 300))
        v = float(rng.uniform(0, 200))
        img_pt = Vec3(u * spacing, v * spacing, 0.0)
        world_pt = transform_point(probe, transform_point(image_to_probe, img_pt))
        world.append(world_pt.as_array())
        image.append([u, v])
        poses.append(probe)
    return np.array(world), np.array(image), poses


class TestRegisterUsPlane:
    def test_identity_when_image_equals_probe_plane(self):
        rng = np.random.default_rng(26)
        cal_pose = Pose.identity()
        world, image, poses = make_us_pairs(cal_pose, 1.0, 8, rng)
        cal = register_us_plane(world, image, poses, known_pixel_spacing=1.0)
        assert cal.image_to_probe.position.norm() < 1e-9
        assert cal.image_to_probe.orientation.approx_equal(Quat.identity(), 1e-9)
        assert cal.rms_residual < 1e-9

    def test_known_spacing_recovery(self):
        rng = np.random.default_rng(27)
        truth = Pose(Vec3(0.01, -0.02, 0.005), random_quat(rng), 0.0)
        world, image, poses = make_us_pairs(truth, 0.0002, 12, rng)
        cal = register_us_plane(world, image, poses, known_pixel_spacing=0.0002)
        assert (cal.image_to_probe.position - truth.position).norm() < 1e-9
        assert cal.image_to_probe.orientation.approx_equal(truth.orientation, 1e-9)
        assert cal.pixel_spacing == 0.0002

    def test_unknown_spacing_recovery(self):
        rng = np.random.default_rng(28)
        truth = Pose(Vec3(0.01, -0.02, 0.005), random_quat(rng), 0.0)
        world, image, poses = make_us_pairs(truth, 0.0002, 12, rng)
        cal = register_us_plane(world, image, poses)
        assert abs(cal.pixel_spacing - 0.0002) / 0.0002 < 1e-6
        assert (cal.image_to_probe.position - truth.position).norm() < 1e-9

    def test_scale_unobservable_with_tiny_span(self):
        rng = np.random.default_rng(29)
        truth = Pose.identity()
        world, image, poses = make_us_pairs(truth, 0.0002, 8, rng)
        image = image * 0.0 + rng.uniform(0, 3, size=image.shape)   # < 10 px span
        with pytest.raises(ScaleUnobservable):
            register_us_plane(world, image, poses)

    def test_probe_pose_mismatch(self):
        rng = np.random.default_rng(30)
        world, image, poses = make_us_pairs(Pose.identity(), 1.0, 6, rng)
        with pytest.raises(LengthMismatch):
            register_us_plane(world, image, poses[:-1])

    def test_world_points_pulled_through_probe_inverse(self):
        # a probe far from the origin must not disturb the registration
        rng = np.random.default_rng(31)
        truth = Pose(Vec3(0.01, 0.0, 0.0), Quat.identity(), 0.0)
        world, image, poses = make_us_pairs(truth, 0.0005, 10, rng)
        cal = register_us_plane(world, image, poses, known_pixel_spacing=0.0005)
        for w, (u, v), probe in zip(world, image, poses):
            probe_pt = transform_point(invert(probe), Vec3(*w))
            img_pt = transform_point(cal.image_to_probe, Vec3(u * 0.0005, v * 0.0005, 0.0))
            assert (probe_pt - img_pt).norm() < 1e-9
