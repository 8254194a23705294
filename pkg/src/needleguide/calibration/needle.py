"""Needle tip and shaft-axis calibration from tracked body poses."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..geometry import Pose, Vec3
from .errors import PoorConditioning
from .fitting import CircleFitter3D, SphereFitter
from .results import AxisCalibration, TipCalibration
from .validation import (
    ON_AXIS_RADIUS_M,
    TIP_SPREAD_LIMIT_M,
    as_points,
    as_poses,
    canonical_sign,
    positions_array,
)


class PivotCalibrator(BaseEstimator):
    """Tip offset from a pivot sweep about the fixed physical tip.

    Body positions trace a sphere centered on the tip; the body-frame offset
    is the mean of the per-pose back-rotations of (tip - position). Averaging
    in the body frame keeps the estimate free of sign ambiguity.

    Attributes (after ``fit``): ``tip_world_`` (3,), ``tip_offset_`` (3,),
    ``rms_residual_``.
    """

    def fit(self, X, marker_points=None):
        poses = as_poses(X, min_poses=10, name="pivot poses")
        if marker_points is None:
            cloud = positions_array(poses)
        else:
            cloud = as_points(marker_points, min_points=len(poses), name="marker_points")

        sphere = SphereFitter().fit(cloud)
        tip_world = sphere.center_

        offsets = np.array([
            p.orientation.as_matrix().T @ (tip_world - p.position.as_array())
            for p in poses
        ])
        tip_offset = offsets.mean(axis=0)
        spread = float(np.linalg.norm(offsets - tip_offset, axis=1).max())
        if spread > TIP_SPREAD_LIMIT_M:
            raise PoorConditioning(
                f"per-pose tip offsets disagree by {spread * 1e3:.1f} mm; "
                "the sweep did not pivot about a fixed point"
            )

        self.tip_world_ = tip_world
        self.tip_offset_ = tip_offset
        self.rms_residual_ = sphere.rms_residual_
        return self

    def result_(self) -> TipCalibration:
        return TipCalibration(
            tip_world=Vec3.from_array(self.tip_world_),
            tip_offset=Vec3.from_array(self.tip_offset_),
            rms_residual=self.rms_residual_,
        )


class SpinAxisCalibrator(BaseEstimator):
    """Shaft axis from a spin about the needle's physical axis.

    Body positions trace a circle whose normal is the world-frame spin axis;
    the body-frame direction is the mean back-rotation of that normal,
    renormalized and sign-canonicalized.

    Attributes (after ``fit``): ``axis_dir_`` (3,), ``rms_residual_``.
    """

    def fit(self, X, y=None):
        poses = as_poses(X, min_poses=8, name="spin poses")
        cloud = positions_array(poses)
        # markers on the shaft axis spin in place: catch that before the
        # circle fit calls a zero-radius cloud degenerate
        spread = float(np.linalg.norm(cloud - cloud.mean(axis=0), axis=1).max())
        if spread < ON_AXIS_RADIUS_M:
            raise PoorConditioning(
                f"positions spread only {spread * 1e3:.2f} mm: markers sit on "
                "the axis and its direction is unobservable from positions"
            )
        circle = CircleFitter3D().fit(cloud)
        if circle.radius_ < ON_AXIS_RADIUS_M:
            raise PoorConditioning(
                f"spin circle radius {circle.radius_ * 1e3:.2f} mm is below "
                f"{ON_AXIS_RADIUS_M * 1e3:.0f} mm: markers sit on the axis and "
                "its direction is unobservable from positions"
            )
        body_axes = np.array([
            p.orientation.as_matrix().T @ circle.normal_ for p in poses
        ])
        mean_axis = body_axes.mean(axis=0)
        norm = np.linalg.norm(mean_axis)
        if norm < 1e-9:
            raise PoorConditioning("back-rotated axis directions cancel out")
        self.axis_dir_ = canonical_sign(mean_axis / norm)
        self.rms_residual_ = circle.rms_residual_
        return self

    def result_(self) -> AxisCalibration:
        return AxisCalibration(
            axis_dir=Vec3.from_array(self.axis_dir_),
            rms_residual=self.rms_residual_,
        )


def calibrate_needle_tip(
    poses: Sequence[Pose], marker_points: Optional[Sequence] = None
) -> TipCalibration:
    """Pivot calibration: sphere-fit the sweep, average the body-frame offset."""
    return PivotCalibrator().fit(poses, marker_points=marker_points).result_()


def calibrate_needle_axis(poses: Sequence[Pose]) -> AxisCalibration:
    """Axis calibration: circle-fit the spin, back-rotate the plane normal."""
    return SpinAxisCalibrator().fit(poses).result_()
