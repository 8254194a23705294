"""Hand-eye calibration: least-squares X from paired motions A X = X B."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..geometry import Pose, Quat, Vec3, compose
from .errors import DegenerateMotion
from .results import HandEyeFit
from .validation import PARALLEL_AXIS_RAD, as_poses, check_same_length

# Motions rotating less than this contribute no usable axis direction
_MIN_ROTATION_RAD = 1e-6


def _left_mult(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, -z, y],
        [y, z, w, -x],
        [z, -y, x, w],
    ])


def _right_mult(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, z, -y],
        [y, -z, w, x],
        [z, y, -x, w],
    ])


def _check_axis_spread(motions: Sequence[Pose]) -> None:
    axes = []
    for m in motions:
        q = m.orientation.as_array()
        vec = q[1:]
        ang = 2.0 * np.arccos(min(1.0, abs(q[0])))
        if ang > _MIN_ROTATION_RAD and np.linalg.norm(vec) > 0.0:
            axes.append(vec / np.linalg.norm(vec))
    if len(axes) < 2:
        raise DegenerateMotion(
            "hand-eye needs at least two motions with non-negligible rotation; "
            "more varied motion is required"
        )
    axes_arr = np.array(axes)
    cos = np.abs(axes_arr @ axes_arr.T).clip(max=1.0)
    max_angle = float(np.arccos(cos).max())
    if max_angle < PARALLEL_AXIS_RAD:
        raise DegenerateMotion(
            "all rotation axes are parallel within 1 degree, so X is not "
            "unique; more varied motion is required"
        )


class HandEyeCalibrator(BaseEstimator):
    """Solves ``A_i X = X B_i`` over relative-motion pairs.

    Rotation first, as the least-squares null vector of the stacked
    quaternion relation ``q_a ⊗ q_x - q_x ⊗ q_b = 0``; then translation by
    a stacked linear system ``(R_a - I) t_x = R_x t_b - t_a``. Deterministic
    by construction, no iterative refinement.

    Attributes (after ``fit``): ``x_`` (Pose), ``rotation_residual_`` (rad),
    ``translation_residual_`` (m), both max over the motion pairs.
    """

    def fit(self, X, y):
        motions_a = as_poses(X, min_poses=2, name="motions_a")
        motions_b = as_poses(y, min_poses=2, name="motions_b")
        check_same_length(motions_a, motions_b, "motions_a", "motions_b")
        _check_axis_spread(motions_a)

        n = len(motions_a)
        M = np.zeros((4 * n, 4))
        for i, (a, b) in enumerate(zip(motions_a, motions_b)):
            qa = a.orientation.as_array()
            qb = b.orientation.as_array()
            M[4 * i:4 * i + 4] = _left_mult(qa) - _right_mult(qb)
        _, _, vt = np.linalg.svd(M)
        qx = vt[-1]
        if qx[0] < 0.0 or (qx[0] == 0.0 and (qx[qx != 0.0][:1] < 0.0).any()):
            qx = -qx
        q_x = Quat.from_array(qx).normalized()
        Rx = q_x.as_matrix()

        C = np.zeros((3 * n, 3))
        d = np.zeros(3 * n)
        for i, (a, b) in enumerate(zip(motions_a, motions_b)):
            Ra = a.orientation.as_matrix()
            C[3 * i:3 * i + 3] = Ra - np.eye(3)
            d[3 * i:3 * i + 3] = Rx @ b.position.as_array() - a.position.as_array()
        tx, *_ = np.linalg.lstsq(C, d, rcond=None)

        x = Pose(Vec3.from_array(tx), q_x, 0.0)
        rot_res = 0.0
        trans_res = 0.0
        for a, b in zip(motions_a, motions_b):
            ax = compose(a, x)
            xb = compose(x, b)
            rot_res = max(rot_res, ax.orientation.angle_to(xb.orientation))
            trans_res = max(trans_res, (ax.position - xb.position).norm())

        self.x_ = x
        self.rotation_residual_ = float(rot_res)
        self.translation_residual_ = float(trans_res)
        return self

    def result_(self) -> HandEyeFit:
        return HandEyeFit(
            x=self.x_,
            rotation_residual=self.rotation_residual_,
            translation_residual=self.translation_residual_,
        )


def hand_eye_calibrate(motions_a: Sequence[Pose], motions_b: Sequence[Pose]) -> HandEyeFit:
    """Solve A X = X B from equal-length lists of relative motions."""
    return HandEyeCalibrator().fit(motions_a, motions_b).result_()


def relative_motions(poses: Sequence[Pose]) -> list[Pose]:
    """Consecutive relative motions P_{i+1} ∘ P_i^{-1} from absolute poses."""
    from ..geometry import invert

    poses = list(poses)
    return [compose(poses[i + 1], invert(poses[i])) for i in range(len(poses) - 1)]
