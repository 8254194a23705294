import math

import numpy as np
import pytest

from needleguide.geometry import Pose, Quat, Vec3
from needleguide.history import EmptyBuffer, PoseBuffer, QueryQuality

from conftest import random_pose


def sample(t: float, x: float = 0.0, q: Quat = None) -> Pose:
    return Pose(Vec3(x, 0, 0), q or Quat.identity(), t)


class TestPush:
    def test_in_order(self):
        buf = PoseBuffer(1)
        assert buf.push(sample(1.0))
        assert buf.push(sample(2.0))
        assert len(buf) == 2
        assert buf.span() == (1.0, 2.0)

    def test_out_of_order_rejected_and_counted(self):
        buf = PoseBuffer(1)
        buf.push(sample(2.0))
        assert not buf.push(sample(1.0))
        assert len(buf) == 1
        assert buf.rejected_count == 1

    def test_equal_timestamp_rejected(self):
        buf = PoseBuffer(1)
        buf.push(sample(1.0))
        assert not buf.push(sample(1.0))

    def test_capacity_eviction(self):
        buf = PoseBuffer(1, capacity=1000, retention=1e9)
        for i in range(10_000):
            buf.push(sample(float(i)))
        assert len(buf) == 1000
        assert buf.span() == (9000.0, 9999.0)

    def test_retention_eviction(self):
        buf = PoseBuffer(1, capacity=10_000, retention=2.0)
        for i in range(500):
            buf.push(sample(i * 0.01))
        lo, hi = buf.span()
        assert hi - lo <= 2.0


class TestQueryAt:
    def test_exact(self):
        buf = PoseBuffer(1)
        buf.push(sample(1.0, x=1.0))
        buf.push(sample(2.0, x=2.0))
        out = buf.query_at(1.0)
        assert out.quality is QueryQuality.EXACT
        assert out.staleness == 0.0
        assert out.pose.position.x == 1.0

    def test_midpoint_interpolation(self):
        buf = PoseBuffer(1)
        buf.push(Pose(Vec3(0, 0, 0), Quat.identity(), 1.0))
        buf.push(Pose(Vec3(1, 0, 0), Quat.from_axis_angle(Vec3(0, 0, 1), math.pi / 2), 2.0))
        out = buf.query_at(1.5)
        assert out.quality is QueryQuality.INTERPOLATED
        assert (out.pose.position - Vec3(0.5, 0, 0)).norm() < 1e-12
        expected = Quat.from_axis_angle(Vec3(0, 0, 1), math.pi / 4)
        assert out.pose.orientation.approx_equal(expected, 1e-12)

    def test_clamp_and_staleness(self):
        buf = PoseBuffer(1)
        buf.push(sample(1.0, x=1.0))
        buf.push(sample(2.0, x=2.0))
        out = buf.query_at(5.0)
        assert out.quality is QueryQuality.CLAMPED_STALE
        assert out.pose.position.x == 2.0
        assert abs(out.staleness - 3.0) < 1e-12
        before = buf.query_at(0.25)
        assert before.quality is QueryQuality.CLAMPED_STALE
        assert abs(before.staleness - 0.75) < 1e-12

    def test_empty_buffer(self):
        with pytest.raises(EmptyBuffer):
            PoseBuffer(1).query_at(0.0)

    def test_constant_velocity_exact(self):
        buf = PoseBuffer(1, retention=1e9)
        for i in range(50):
            buf.push(sample(float(i), x=2.0 * i))
        rng = np.random.default_rng(41)
        for t in rng.uniform(0.0, 49.0, size=200):
            out = buf.query_at(float(t))
            assert abs(out.pose.position.x - 2.0 * t) < 1e-12

    def test_interpolation_on_segment_and_unit_norm(self):
        rng = np.random.default_rng(42)
        buf = PoseBuffer(1)
        poses = []
        t = 0.0
        for _ in range(50):
            t += float(rng.uniform(0.01, 0.1))
            p = random_pose(rng)
            p = Pose(p.position, p.orientation, t)
            poses.append(p)
            buf.push(p)
        lo, hi = buf.span()
        for tq in rng.uniform(lo, hi, size=200):
            out = buf.query_at(float(tq))
            assert abs(out.pose.orientation.norm() - 1.0) < 1e-9
            if out.quality is QueryQuality.INTERPOLATED:
                # position must sit on the segment between its brackets
                i = next(
                    k for k in range(len(poses) - 1)
                    if poses[k].timestamp <= tq <= poses[k + 1].timestamp
                )
                a = poses[i].position.as_array()
                b = poses[i + 1].position.as_array()
                ab = b - a
                f = np.dot(out.pose.position.as_array() - a, ab) / np.dot(ab, ab)
                off_segment = np.linalg.norm(
                    out.pose.position.as_array() - (a + f * ab)
                )
                assert -1e-12 <= f <= 1.0 + 1e-12
                assert off_segment < 1e-12


class TestBounds:
    def test_random_stream_respects_bounds(self):
        rng = np.random.default_rng(43)
        buf = PoseBuffer(1, capacity=64, retention=0.5)
        t = 0.0
        for _ in range(2000):
            t += float(rng.uniform(-0.01, 0.05))
            try:
                buf.push(sample(max(t, 0.0)))
            except ValueError:
                continue
            if len(buf):
                lo, hi = buf.span()
                assert len(buf) <= 64
                assert hi - lo <= 0.5
