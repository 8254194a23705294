"""Point-cloud registration: absolute orientation and US plane calibration."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..geometry import Pose, Quat, Vec3, invert, transform_point
from .errors import DegenerateInput, ScaleUnobservable
from .results import RigidTransformFit, UsPlaneCalibration
from .validation import (
    MIN_IMAGE_SPAN_PX,
    RANK_RTOL,
    as_image_points,
    as_points,
    as_poses,
    check_same_length,
)


class RigidTransformEstimator(BaseEstimator):
    """Closed-form absolute orientation between corresponded 3D clouds.

    Solves ``target ~ scale * R @ source + t`` over centered clouds via SVD.
    The smallest singular direction is sign-corrected so the returned
    rotation is always proper (determinant +1), even for coplanar or noisy
    near-degenerate clouds.

    Parameters
    ----------
    estimate_scale : bool
        When True, also estimate a uniform scale from the variance ratio;
        otherwise the scale is fixed at 1.

    Attributes (after ``fit``): ``rotation_`` (3, 3), ``translation_`` (3,),
    ``scale_``, ``rms_residual_``.
    """

    def __init__(self, estimate_scale: bool = False):
        self.estimate_scale = estimate_scale

    def fit(self, X, y):
        src = as_points(X, min_points=3, name="source")
        tgt = as_points(y, min_points=3, name="target")
        check_same_length(src, tgt, "source", "target")

        src_centroid = src.mean(axis=0)
        tgt_centroid = tgt.mean(axis=0)
        src_c = src - src_centroid
        tgt_c = tgt - tgt_centroid

        sv_src = np.linalg.svd(src_c, compute_uv=False)
        if sv_src[0] <= 0.0 or sv_src[1] / sv_src[0] < RANK_RTOL:
            raise DegenerateInput(
                "source points are collinear; the rotation is not determined"
            )

        H = src_c.T @ tgt_c
        U, S, Vt = np.linalg.svd(H)
        d = np.sign(np.linalg.det(Vt.T @ U.T))
        if d == 0.0:
            d = 1.0
        D = np.diag([1.0, 1.0, d])
        R = Vt.T @ D @ U.T

        if self.estimate_scale:
            denom = float((src_c**2).sum())
            scale = float((S * np.diag(D)).sum() / denom)
            if scale <= 0.0:
                raise DegenerateInput("estimated scale is non-positive")
        else:
            scale = 1.0

        t = tgt_centroid - scale * R @ src_centroid
        residual = src @ (scale * R).T + t - tgt

        self.rotation_ = R
        self.translation_ = t
        self.scale_ = scale
        self.rms_residual_ = float(np.sqrt(np.mean((residual**2).sum(axis=1))))
        return self

    def transform(self, X) -> np.ndarray:
        """Map points through the fitted similarity transform."""
        P = as_points(X, min_points=1, name="points")
        return P @ (self.scale_ * self.rotation_).T + self.translation_

    def result_(self) -> RigidTransformFit:
        pose = Pose(
            Vec3.from_array(self.translation_),
            Quat.from_matrix(self.rotation_),
            0.0,
        )
        return RigidTransformFit(
            transform=pose, scale=self.scale_, rms_residual=self.rms_residual_
        )


class UsPlaneRegistrator(BaseEstimator):
    """Registers the ultrasound image plane into the probe rigid-body frame.

    Point pairs are a tracked world point known to lie in the physical scan
    plane and its pixel coordinates in the image (x right, y down). World
    points are pulled into the probe frame with the inverse probe pose;
    image points are lifted to 3D as ``(u * s, v * s, 0)`` and the two
    clouds are matched by absolute orientation. With ``pixel_spacing=None``
    the spacing is recovered through the uniform-scale estimate.

    Attributes (after ``fit``): ``image_to_probe_`` (Pose),
    ``pixel_spacing_`` (m/px), ``rms_residual_``.
    """

    def __init__(self, pixel_spacing: Optional[float] = None):
        self.pixel_spacing = pixel_spacing

    def fit(self, X, y, probe_poses: Sequence[Pose] = ()):
        world = as_points(X, min_points=3, name="world_points")
        image = as_image_points(y, min_points=3, name="image_points")
        poses = as_poses(probe_poses, min_poses=3, name="probe_poses")
        check_same_length(world, image, "world_points", "image_points")
        check_same_length(world, poses, "world_points", "probe_poses")

        span = image.max(axis=0) - image.min(axis=0)
        if float(np.hypot(*span)) < MIN_IMAGE_SPAN_PX:
            raise ScaleUnobservable(
                f"image points span {float(np.hypot(*span)):.2f} px; "
                f"need at least {MIN_IMAGE_SPAN_PX:.0f} px of spread"
            )

        probe_pts = np.array([
            transform_point(invert(pose), Vec3.from_array(w)).as_array()
            for pose, w in zip(poses, world)
        ])

        if self.pixel_spacing is not None:
            if self.pixel_spacing <= 0.0:
                raise ValueError("pixel_spacing must be positive")
            lifted = np.column_stack([
                image[:, 0] * self.pixel_spacing,
                image[:, 1] * self.pixel_spacing,
                np.zeros(len(image)),
            ])
            est = RigidTransformEstimator(estimate_scale=False).fit(lifted, probe_pts)
            spacing = float(self.pixel_spacing)
        else:
            lifted = np.column_stack([image, np.zeros(len(image))])
            est = RigidTransformEstimator(estimate_scale=True).fit(lifted, probe_pts)
            spacing = est.scale_

        self.image_to_probe_ = Pose(
            Vec3.from_array(est.translation_), Quat.from_matrix(est.rotation_), 0.0
        )
        self.pixel_spacing_ = spacing
        self.rms_residual_ = est.rms_residual_
        return self

    def result_(self) -> UsPlaneCalibration:
        return UsPlaneCalibration(
            image_to_probe=self.image_to_probe_,
            pixel_spacing=self.pixel_spacing_,
            rms_residual=self.rms_residual_,
        )


def absolute_orientation(source, target, estimate_scale: bool = False) -> RigidTransformFit:
    """Closed-form rigid (optionally similarity) alignment of two clouds."""
    return RigidTransformEstimator(estimate_scale=estimate_scale).fit(source, target).result_()


def register_us_plane(
    world_points,
    image_points,
    probe_poses: Sequence[Pose],
    known_pixel_spacing: Optional[float] = None,
) -> UsPlaneCalibration:
    """Solve the image-plane-to-probe transform from tracked point pairs."""
    reg = UsPlaneRegistrator(pixel_spacing=known_pixel_spacing)
    return reg.fit(world_points, image_points, probe_poses=probe_poses).result_()
