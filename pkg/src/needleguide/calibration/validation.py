"""Input validation helpers shared by the calibration estimators.

All solvers accept either numpy arrays or sequences of the package's value
types (:class:`~needleguide.geometry.Vec3`, :class:`~needleguide.geometry.Pose`)
and normalize to float arrays here.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..geometry import Pose, Quat, Vec3
from .errors import DegenerateInput, LengthMismatch

# Fixed degeneracy thresholds (documented constants; not tunable per call)
RANK_RTOL = 1e-10            # relative singular-value cutoff for rank tests
PARALLEL_AXIS_RAD = np.deg2rad(1.0)   # hand-eye axes parallel within 1 deg
ON_AXIS_RADIUS_M = 1e-3      # spin-circle radius below which axis is unobservable
TIP_SPREAD_LIMIT_M = 5e-3    # max disagreement of per-pose tip offsets
MIN_IMAGE_SPAN_PX = 10.0     # image points must span at least this many pixels


def as_points(points, min_points: int, name: str = "points") -> np.ndarray:
    """Coerce to an (n, 3) float array; require finiteness and n >= min_points."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    else:
        seq = list(points)
        if seq and isinstance(seq[0], Vec3):
            arr = np.array([p.as_array() for p in seq], dtype=float)
        else:
            arr = np.asarray(seq, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must be an (n, 3) array, got shape {arr.shape}")
    if len(arr) < min_points:
        raise DegenerateInput(f"{name}: need at least {min_points} points, got {len(arr)}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_image_points(points, min_points: int, name: str = "image_points") -> np.ndarray:
    """Coerce to an (n, 2) float pixel-coordinate array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must be an (n, 2) array, got shape {arr.shape}")
    if len(arr) < min_points:
        raise DegenerateInput(f"{name}: need at least {min_points} points, got {len(arr)}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_poses(poses: Sequence[Pose], min_poses: int, name: str = "poses") -> list[Pose]:
    poses = list(poses)
    if len(poses) < min_poses:
        raise DegenerateInput(f"{name}: need at least {min_poses} poses, got {len(poses)}")
    for i, p in enumerate(poses):
        if not isinstance(p, Pose):
            raise TypeError(f"{name}[{i}] is not a Pose")
        if abs(p.orientation.norm() - 1.0) > 1e-6:
            raise ValueError(f"{name}[{i}] orientation is not unit-norm")
    return poses


def check_same_length(a, b, name_a: str, name_b: str) -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"{name_a} has {len(a)} entries but {name_b} has {len(b)}")


def spread_rank(points: np.ndarray) -> int:
    """Effective rank of the centered cloud at the shared relative tolerance."""
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] <= 0.0:
        return 0
    return int((sv / sv[0] > RANK_RTOL).sum())


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip an axis/normal so its largest-magnitude component is positive.

    Ties break by component order x, y, z (argmax picks the first maximum).
    """
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0.0 else v.copy()


def quat_array(q: Quat) -> np.ndarray:
    return q.as_array()


def positions_array(poses: Sequence[Pose]) -> np.ndarray:
    return np.array([p.position.as_array() for p in poses], dtype=float)
