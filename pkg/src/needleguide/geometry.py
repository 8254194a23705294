"""Rigid-body math: vectors, unit quaternions, poses, handedness conversion.

Conventions used everywhere in this package:

* Quaternions are scalar-first ``(w, x, y, z)`` and kept unit-norm.
* A ``Pose`` maps body-frame points into its parent frame: ``v' = R v + t``.
* Handedness conversion mirrors the z axis (``diag(1, 1, -1)``); the
  matching quaternion rule is ``(w, x, y, z) -> (w, -x, -y, z)``.
* Angles are radians internally; degrees appear only at API/wire edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# |dot| above this switches slerp to normalized lerp (near-parallel inputs)
SLERP_LERP_THRESHOLD = 1.0 - 1e-6


class Handedness(Enum):
    RIGHT_HANDED = "right"
    LEFT_HANDED = "left"


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for c in (self.x, self.y, self.z):
            if not math.isfinite(c):
                raise ValueError(f"Vec3 components must be finite, got {self}")

    @staticmethod
    def zero() -> "Vec3":
        return Vec3(0.0, 0.0, 0.0)

    @staticmethod
    def from_array(a) -> "Vec3":
        a = np.asarray(a, dtype=float).reshape(3)
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)


@dataclass(frozen=True, slots=True)
class Quat:
    """Unit quaternion, scalar-first. ``q`` and ``-q`` are the same rotation."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Quat":
        return Quat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_array(a) -> "Quat":
        a = np.asarray(a, dtype=float).reshape(4)
        return Quat(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @staticmethod
    def from_axis_angle(axis: Vec3, angle: float) -> "Quat":
        u = axis.normalized()
        half = 0.5 * angle
        s = math.sin(half)
        return Quat(math.cos(half), u.x * s, u.y * s, u.z * s).normalized()

    @staticmethod
    def from_rotvec(v: Vec3) -> "Quat":
        angle = v.norm()
        if angle < 1e-12:
            # first-order small-angle form avoids dividing by a tiny norm
            return Quat(1.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z).normalized()
        return Quat.from_axis_angle(v, angle)

    @staticmethod
    def from_matrix(m) -> "Quat":
        """Shepperd's method: pick the largest diagonal pivot for stability."""
        m = np.asarray(m, dtype=float).reshape(3, 3)
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                 (m[1, 0] - m[0, 1]) / s)
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
                 (m[0, 2] + m[2, 0]) / s)
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
                 (m[1, 2] + m[2, 1]) / s)
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                 (m[1, 2] + m[2, 1]) / s, 0.25 * s)
        return Quat(*q).normalized()

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Quat":
        n = self.norm()
        if n < 1e-12:
            raise ValueError("cannot normalize near-zero quaternion")
        return Quat(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quat") -> "Quat":
        """Hamilton product self ⊗ other, renormalized."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quat(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ).normalized()

    def rotate(self, v: Vec3) -> Vec3:
        """Rotate a vector by the quaternion sandwich q (0,v) q*."""
        qv = Vec3(self.x, self.y, self.z)
        t = 2.0 * qv.cross(v)
        return v + self.w * t + qv.cross(t)

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def angle_to(self, other: "Quat") -> float:
        """Rotation angle (radians) between two quaternions, sign-agnostic.

        atan2 on the relative quaternion keeps full precision for tiny
        angles, where the acos form rounds off near 1.
        """
        r = self.conjugate() * other
        v = math.sqrt(r.x * r.x + r.y * r.y + r.z * r.z)
        return 2.0 * math.atan2(v, abs(r.w))

    def approx_equal(self, other: "Quat", tol: float = 1e-9) -> bool:
        """Same rotation within tol, comparing up to quaternion sign."""
        a, b = self.as_array(), other.as_array()
        return min(np.abs(a - b).max(), np.abs(a + b).max()) <= tol


@dataclass(frozen=True, slots=True)
class Pose:
    """Position (m) + unit orientation + timestamp (s, source clock)."""

    position: Vec3
    orientation: Quat
    timestamp: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.timestamp) or self.timestamp < 0.0:
            raise ValueError(f"timestamp must be finite and >= 0, got {self.timestamp}")

    @staticmethod
    def identity(timestamp: float = 0.0) -> "Pose":
        return Pose(Vec3.zero(), Quat.identity(), timestamp)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.orientation.as_matrix()
        m[:3, 3] = self.position.as_array()
        return m

    @staticmethod
    def from_matrix(m, timestamp: float = 0.0) -> "Pose":
        m = np.asarray(m, dtype=float)
        return Pose(Vec3.from_array(m[:3, 3]), Quat.from_matrix(m[:3, :3]), timestamp)


def compose(a: Pose, b: Pose) -> Pose:
    """a applied after b (a∘b); timestamp taken from b."""
    q = a.orientation * b.orientation
    p = a.orientation.rotate(b.position) + a.position
    return Pose(p, q, b.timestamp)


def invert(p: Pose) -> Pose:
    qi = p.orientation.conjugate()
    return Pose(qi.rotate(-p.position), qi, p.timestamp)


def transform_point(p: Pose, v: Vec3) -> Vec3:
    return p.orientation.rotate(v) + p.position


def convert_handedness(p: Pose) -> Pose:
    """Mirror the z axis: the right-handed <-> left-handed pose conversion.

    Involution: applying it twice restores the original pose.
    """
    return Pose(
        convert_handedness_point(p.position),
        convert_handedness_quat(p.orientation),
        p.timestamp,
    )


def convert_handedness_point(v: Vec3) -> Vec3:
    return Vec3(v.x, v.y, -v.z)


def convert_handedness_quat(q: Quat) -> Quat:
    return Quat(q.w, -q.x, -q.y, q.z)


def rotation_between(a: Vec3, b: Vec3) -> Quat:
    """Shortest-arc rotation taking direction a to direction b."""
    u = a.normalized()
    v = b.normalized()
    d = u.dot(v)
    if d > 1.0 - 1e-12:
        return Quat.identity()
    if d < -1.0 + 1e-12:
        # antiparallel: rotate 180 deg about any axis perpendicular to u
        helper = Vec3(1.0, 0.0, 0.0) if abs(u.x) < 0.9 else Vec3(0.0, 1.0, 0.0)
        axis = u.cross(helper).normalized()
        return Quat.from_axis_angle(axis, math.pi)
    axis = u.cross(v)
    return Quat(1.0 + d, axis.x, axis.y, axis.z).normalized()


def slerp(a: Quat, b: Quat, t: float) -> Quat:
    """Shortest-arc spherical interpolation; t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    av, bv = a.as_array(), b.as_array()
    dot = float(av @ bv)
    if dot < 0.0:
        bv = -bv
        dot = -dot
    if dot > SLERP_LERP_THRESHOLD:
        out = (1.0 - t) * av + t * bv
        return Quat.from_array(out).normalized()
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    out = (math.sin((1.0 - t) * theta) / s) * av + (math.sin(t * theta) / s) * bv
    return Quat.from_array(out).normalized()
