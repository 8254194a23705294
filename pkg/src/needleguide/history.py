"""Per-body timestamped pose buffer with interpolated time queries.

Lag compensation: instead of using the latest sample, consumers ask "where
was this body at time t" and get an exact, interpolated or clamped answer.
"""

from __future__ import annotations

import bisect
import math
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .geometry import Pose, Vec3, slerp

DEFAULT_CAPACITY = 512       # samples; covers ~4 s at 120 Hz
DEFAULT_RETENTION_S = 2.0    # evict samples older than this behind the newest
EXACT_MATCH_TOL_S = 1e-9


class QueryQuality(Enum):
    EXACT = "exact"
    INTERPOLATED = "interpolated"
    CLAMPED_STALE = "clamped_stale"


@dataclass(frozen=True, slots=True)
class QueryResult:
    pose: Pose
    quality: QueryQuality
    staleness: float = 0.0   # seconds outside the stored span; 0 unless clamped


class EmptyBuffer(LookupError):
    """Raised when querying a buffer that holds no samples."""


class PoseBuffer:
    """Time-ordered pose samples for one body.

    One writer, any number of readers: all access goes through one lock so
    queries always observe a consistent snapshot. Out-of-order pushes are
    rejected and counted, never stored.
    """

    def __init__(
        self,
        body_id: int,
        capacity: int = DEFAULT_CAPACITY,
        retention: float = DEFAULT_RETENTION_S,
    ):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if retention <= 0.0:
            raise ValueError("retention must be positive")
        self.body_id = body_id
        self.capacity = capacity
        self.retention = retention
        self.rejected_count = 0
        self._samples: deque[Pose] = deque()
        self._timestamps: list[float] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._samples)

    def push(self, pose: Pose) -> bool:
        """Insert a sample; returns False (and counts) if not newer than the last."""
        if not math.isfinite(pose.timestamp):
            raise ValueError("pose timestamp must be finite")
        with self._lock:
            if self._timestamps and pose.timestamp <= self._timestamps[-1]:
                self.rejected_count += 1
                return False
            self._samples.append(pose)
            self._timestamps.append(pose.timestamp)
            while len(self._samples) > self.capacity:
                self._samples.popleft()
                self._timestamps.pop(0)
            newest = self._timestamps[-1]
            while newest - self._timestamps[0] > self.retention:
                self._samples.popleft()
                self._timestamps.pop(0)
            return True

    def latest(self) -> Pose:
        with self._lock:
            if not self._samples:
                raise EmptyBuffer(f"body {self.body_id}: no samples")
            return self._samples[-1]

    def span(self) -> tuple[float, float]:
        with self._lock:
            if not self._samples:
                raise EmptyBuffer(f"body {self.body_id}: no samples")
            return self._timestamps[0], self._timestamps[-1]

    def query_at(self, t: float) -> QueryResult:
        """Pose at time t: exact sample, interpolation, or clamped endpoint."""
        with self._lock:
            if not self._samples:
                raise EmptyBuffer(f"body {self.body_id}: no samples")
            ts = self._timestamps
            if t <= ts[0]:
                stale = ts[0] - t
                if stale <= EXACT_MATCH_TOL_S:
                    return QueryResult(self._samples[0], QueryQuality.EXACT)
                return QueryResult(self._samples[0], QueryQuality.CLAMPED_STALE, stale)
            if t >= ts[-1]:
                stale = t - ts[-1]
                if stale <= EXACT_MATCH_TOL_S:
                    return QueryResult(self._samples[-1], QueryQuality.EXACT)
                return QueryResult(self._samples[-1], QueryQuality.CLAMPED_STALE, stale)

            i = bisect.bisect_left(ts, t)
            if abs(ts[i] - t) <= EXACT_MATCH_TOL_S:
                return QueryResult(self._samples[i], QueryQuality.EXACT)
            if abs(ts[i - 1] - t) <= EXACT_MATCH_TOL_S:
                return QueryResult(self._samples[i - 1], QueryQuality.EXACT)

            lo, hi = self._samples[i - 1], self._samples[i]
            f = (t - ts[i - 1]) / (ts[i] - ts[i - 1])
            position = Vec3(
                lo.position.x + f * (hi.position.x - lo.position.x),
                lo.position.y + f * (hi.position.y - lo.position.y),
                lo.position.z + f * (hi.position.z - lo.position.z),
            )
            orientation = slerp(lo.orientation, hi.orientation, f)
            return QueryResult(
                Pose(position, orientation, t), QueryQuality.INTERPOLATED
            )
