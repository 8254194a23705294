import math

import numpy as np
import pytest

from needleguide.calibration.results import NeedleCalibration
from needleguide.geometry import Pose, Quat, Vec3, transform_point
from needleguide.guidance import (
    GuidanceStatus,
    InvalidPlan,
    NeedleState,
    TrajectoryPlan,
    apply_needle_calibration,
    compute_guidance,
)

from conftest import quat_matrix_oracle, random_pose

PLAN = TrajectoryPlan(entry=Vec3(0, 0, 0), target=Vec3(0, 0, 0.1), id=1)


class TestComputeGuidance:
    def test_at_entry_aligned(self):
        needle = NeedleState(tip=Vec3(0, 0, 0), axis=Vec3(0, 0, 1))
        g = compute_guidance(PLAN, needle)
        assert g.progress == 0.0
        assert g.lateral_magnitude == 0.0
        assert g.angle_offset_deg == 0.0
        assert g.status is GuidanceStatus.ON_TRACK

    def test_midway_with_5mm_offset(self):
        needle = NeedleState(tip=Vec3(0.005, 0, 0.05), axis=Vec3(0, 0, 1))
        g = compute_guidance(PLAN, needle)
        assert abs(g.progress - 0.5) < 1e-12
        assert (g.lateral_offset - Vec3(0.005, 0, 0)).norm() < 1e-12
        assert abs(g.lateral_magnitude - 0.005) < 1e-12
        assert g.angle_offset_deg < 1e-12
        tip, foot, entry = g.triangle
        assert (tip - Vec3(0.005, 0, 0.05)).norm() < 1e-12
        assert (foot - Vec3(0, 0, 0.05)).norm() < 1e-12
        assert (entry - Vec3(0, 0, 0)).norm() < 1e-12
        assert g.status is GuidanceStatus.DEVIATING   # 5 mm > 3 mm threshold

    def test_45_degree_axis(self):
        axis = Vec3(1, 0, 1).normalized()
        needle = NeedleState(tip=Vec3(0.005, 0, 0.05), axis=axis)
        g = compute_guidance(PLAN, needle)
        assert abs(g.angle_offset_deg - 45.0) < 1e-12

    def test_magnification(self):
        needle = NeedleState(tip=Vec3(0.002, 0, 0.02), axis=Vec3(0, 0, 1))
        g1 = compute_guidance(PLAN, needle, magnification=1.0)
        g8 = compute_guidance(PLAN, needle, magnification=8.0)
        assert (g8.magnified_offset - 8.0 * g1.lateral_offset).norm() < 1e-15
        assert g8.progress == g1.progress
        assert g8.lateral_magnitude == g1.lateral_magnitude
        assert g8.angle_offset_deg == g1.angle_offset_deg
        with pytest.raises(ValueError):
            compute_guidance(PLAN, needle, magnification=0.5)

    def test_progress_outside_unit_range(self):
        behind = NeedleState(tip=Vec3(0, 0, -0.05), axis=Vec3(0, 0, 1))
        past = NeedleState(tip=Vec3(0, 0, 0.15), axis=Vec3(0, 0, 1))
        assert compute_guidance(PLAN, behind).progress == pytest.approx(-0.5)
        assert compute_guidance(PLAN, past).progress == pytest.approx(1.5)

    def test_lateral_perpendicular_to_plan(self):
        rng = np.random.default_rng(44)
        u = PLAN.direction()
        for _ in range(1000):
            needle = NeedleState(
                tip=Vec3.from_array(rng.uniform(-0.2, 0.2, size=3)),
                axis=Vec3.from_array(rng.normal(size=3)).normalized(),
            )
            g = compute_guidance(PLAN, needle)
            assert abs(g.lateral_offset.dot(u)) < 1e-9
            assert 0.0 <= g.angle_offset_deg <= 180.0
            assert abs(g.lateral_magnitude - g.lateral_offset.norm()) < 1e-15

    def test_rigid_invariance(self):
        rng = np.random.default_rng(45)
        needle = NeedleState(
            tip=Vec3(0.004, -0.002, 0.03), axis=Vec3(0.1, 0.05, 1.0).normalized()
        )
        base = compute_guidance(PLAN, needle)
        for _ in range(1000):
            pose = random_pose(rng)
            moved_plan = TrajectoryPlan(
                entry=transform_point(pose, PLAN.entry),
                target=transform_point(pose, PLAN.target),
                id=PLAN.id,
            )
            moved_needle = NeedleState(
                tip=transform_point(pose, needle.tip),
                axis=pose.orientation.rotate(needle.axis),
            )
            g = compute_guidance(moved_plan, moved_needle)
            assert abs(g.progress - base.progress) < 1e-9
            assert abs(g.lateral_magnitude - base.lateral_magnitude) < 1e-9
            assert abs(g.angle_offset_deg - base.angle_offset_deg) < 1e-9

    def test_pure_function(self):
        needle = NeedleState(tip=Vec3(0.005, 0, 0.05), axis=Vec3(0, 0, 1))
        assert compute_guidance(PLAN, needle) == compute_guidance(PLAN, needle)

    def test_invalid_plan(self):
        with pytest.raises(InvalidPlan):
            TrajectoryPlan(entry=Vec3(0, 0, 0), target=Vec3(0, 0, 0.0005))


class TestApplyNeedleCalibration:
    CALIB = NeedleCalibration(
        tip_offset=Vec3(0.01, -0.005, 0.15),
        axis_dir=Vec3(0, 0, 1),
        tip_rms=0.0,
        axis_rms=0.0,
    )

    def test_identity_pose(self):
        state = apply_needle_calibration(Pose.identity(), self.CALIB)
        assert (state.tip - self.CALIB.tip_offset).norm() == 0.0
        assert (state.axis - self.CALIB.axis_dir).norm() < 1e-12

    def test_translated_pose(self):
        pose = Pose(Vec3(1, 0, 0), Quat.identity(), 3.0)
        state = apply_needle_calibration(pose, self.CALIB)
        assert (state.tip - (self.CALIB.tip_offset + Vec3(1, 0, 0))).norm() < 1e-15
        assert state.timestamp == 3.0

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(46)
        for _ in range(1000):
            pose = random_pose(rng)
            state = apply_needle_calibration(pose, self.CALIB)
            R = quat_matrix_oracle(pose.orientation)
            tip = R @ self.CALIB.tip_offset.as_array() + pose.position.as_array()
            axis = R @ self.CALIB.axis_dir.as_array()
            assert np.abs(state.tip.as_array() - tip).max() < 1e-12
            assert np.abs(state.axis.as_array() - axis).max() < 1e-9
