import math

import numpy as np
import pytest

from needleguide.geometry import (
    Pose,
    Quat,
    Vec3,
    compose,
    convert_handedness,
    convert_handedness_point,
    invert,
    rotation_between,
    slerp,
    transform_point,
)

from conftest import quat_matrix_oracle, random_pose, random_quat

ROT90Z = Quat.from_axis_angle(Vec3(0, 0, 1), math.pi / 2)


def pose_close(a: Pose, b: Pose, tol: float) -> bool:
    return (a.position - b.position).norm() <= tol and a.orientation.approx_equal(
        b.orientation, tol
    )


class TestCompose:
    def test_identity_left(self):
        rng = np.random.default_rng(1)
        p = random_pose(rng)
        assert pose_close(compose(Pose.identity(), p), p, 1e-15)

    def test_inverse_gives_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            p = random_pose(rng)
            assert pose_close(compose(p, invert(p)), Pose.identity(), 1e-9)

    def test_rotation_then_translation(self):
        rot = Pose(Vec3.zero(), ROT90Z, 0.0)
        trans = Pose(Vec3(1, 0, 0), Quat.identity(), 0.0)
        out = compose(rot, trans)
        assert (out.position - Vec3(0, 1, 0)).norm() < 1e-12

    def test_timestamp_from_second_operand(self):
        a = Pose(Vec3(1, 0, 0), Quat.identity(), 5.0)
        b = Pose(Vec3(0, 1, 0), Quat.identity(), 7.0)
        assert compose(a, b).timestamp == 7.0

    def test_associativity(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b, c = (random_pose(rng) for _ in range(3))
            lhs = compose(compose(a, b), c)
            rhs = compose(a, compose(b, c))
            assert pose_close(lhs, rhs, 1e-9)


class TestInvert:
    def test_identity(self):
        assert pose_close(invert(Pose.identity()), Pose.identity(), 0.0)

    def test_pure_translation(self):
        p = Pose(Vec3(1, 2, 3), Quat.identity(), 0.0)
        assert (invert(p).position - Vec3(-1, -2, -3)).norm() == 0.0


class TestTransformPoint:
    def test_identity(self):
        v = Vec3(1, 2, 3)
        assert (transform_point(Pose.identity(), v) - v).norm() == 0.0

    def test_rot90z(self):
        p = Pose(Vec3.zero(), ROT90Z, 0.0)
        out = transform_point(p, Vec3(1, 0, 0))
        assert (out - Vec3(0, 1, 0)).norm() < 1e-12

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            p = random_pose(rng)
            v = Vec3.from_array(rng.uniform(-1, 1, size=3))
            expected = quat_matrix_oracle(p.orientation) @ v.as_array() + p.position.as_array()
            got = transform_point(p, v).as_array()
            assert np.abs(got - expected).max() < 1e-12


class TestConvertHandedness:
    def test_identity(self):
        assert pose_close(convert_handedness(Pose.identity()), Pose.identity(), 0.0)

    def test_position_z_flip(self):
        p = Pose(Vec3(1, 2, 3), Quat.identity(), 0.0)
        assert (convert_handedness(p).position - Vec3(1, 2, -3)).norm() == 0.0

    def test_involution(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            p = random_pose(rng)
            back = convert_handedness(convert_handedness(p))
            assert pose_close(back, p, 1e-12)

    def test_commutes_with_point_transform(self):
        # conversion of a transformed point equals the converted pose applied
        # to the converted point; this pins the quaternion rule
        rng = np.random.default_rng(6)
        for _ in range(1000):
            p = random_pose(rng)
            v = Vec3.from_array(rng.uniform(-1, 1, size=3))
            lhs = convert_handedness_point(transform_point(p, v))
            rhs = transform_point(convert_handedness(p), convert_handedness_point(v))
            assert (lhs - rhs).norm() < 1e-12


class TestSlerp:
    def test_endpoints(self):
        rng = np.random.default_rng(7)
        a, b = random_quat(rng), random_quat(rng)
        assert slerp(a, b, 0.0).approx_equal(a, 1e-15)
        assert slerp(a, b, 1.0).approx_equal(b, 1e-12)

    def test_halfway_is_45_degrees(self):
        out = slerp(Quat.identity(), ROT90Z, 0.5)
        expected = Quat.from_axis_angle(Vec3(0, 0, 1), math.pi / 4)
        assert out.approx_equal(expected, 1e-12)

    def test_unit_norm_property(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            a, b = random_quat(rng), random_quat(rng)
            t = float(rng.uniform())
            assert abs(slerp(a, b, t).norm() - 1.0) < 1e-12

    def test_near_parallel_fallback(self):
        a = Quat.identity()
        b = Quat.from_axis_angle(Vec3(0, 0, 1), 1e-8)
        out = slerp(a, b, 0.25)
        assert abs(out.norm() - 1.0) < 1e-12

    def test_out_of_range_t(self):
        with pytest.raises(ValueError):
            slerp(Quat.identity(), ROT90Z, 1.5)


class TestNormPreservation:
    def test_operations_keep_unit_quaternions(self):
        rng = np.random.default_rng(9)
        for _ in range(500):
            a, b = random_pose(rng), random_pose(rng)
            assert abs(compose(a, b).orientation.norm() - 1.0) < 1e-9
            assert abs(invert(a).orientation.norm() - 1.0) < 1e-9
            assert abs(convert_handedness(a).orientation.norm() - 1.0) < 1e-9


class TestRotationBetween:
    def test_maps_a_to_b(self):
        rng = np.random.default_rng(10)
        for _ in range(500):
            a = Vec3.from_array(rng.normal(size=3)).normalized()
            b = Vec3.from_array(rng.normal(size=3)).normalized()
            out = rotation_between(a, b).rotate(a)
            assert (out - b).norm() < 1e-9

    def test_antiparallel(self):
        a = Vec3(0, 0, 1)
        out = rotation_between(a, Vec3(0, 0, -1)).rotate(a)
        assert (out - Vec3(0, 0, -1)).norm() < 1e-9


class TestInvariants:
    def test_vec3_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Vec3(float("nan"), 0.0, 0.0)

    def test_pose_rejects_negative_timestamp(self):
        with pytest.raises(ValueError):
            Pose(Vec3.zero(), Quat.identity(), -1.0)
