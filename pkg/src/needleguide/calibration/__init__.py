"""Calibration suite: sphere/circle fits, pivot and spin-axis needle
calibration, hand-eye AX=XB, absolute orientation and US plane registration.

Solvers are pure and deterministic. Each is exposed both as an
sklearn-style estimator (``fit`` + trailing-underscore attributes) and as a
plain function returning a frozen result record.
"""

from .errors import (
    CalibrationError,
    DegenerateInput,
    DegenerateMotion,
    LengthMismatch,
    PoorConditioning,
    ScaleUnobservable,
)
from .fitting import CircleFitter3D, SphereFitter, fit_circle_3d, fit_sphere
from .handeye import HandEyeCalibrator, hand_eye_calibrate, relative_motions
from .needle import (
    PivotCalibrator,
    SpinAxisCalibrator,
    calibrate_needle_axis,
    calibrate_needle_tip,
)
from .registration import (
    RigidTransformEstimator,
    UsPlaneRegistrator,
    absolute_orientation,
    register_us_plane,
)
from .results import (
    AxisCalibration,
    CalibrationSet,
    CircleFit3D,
    HandEyeFit,
    NeedleCalibration,
    RigidTransformFit,
    SphereFit,
    TipCalibration,
    UsPlaneCalibration,
)

__all__ = [
    "CalibrationError",
    "DegenerateInput",
    "DegenerateMotion",
    "LengthMismatch",
    "PoorConditioning",
    "ScaleUnobservable",
    "SphereFitter",
    "CircleFitter3D",
    "fit_sphere",
    "fit_circle_3d",
    "HandEyeCalibrator",
    "hand_eye_calibrate",
    "relative_motions",
    "PivotCalibrator",
    "SpinAxisCalibrator",
    "calibrate_needle_tip",
    "calibrate_needle_axis",
    "RigidTransformEstimator",
    "UsPlaneRegistrator",
    "absolute_orientation",
    "register_us_plane",
    "SphereFit",
    "CircleFit3D",
    "RigidTransformFit",
    "HandEyeFit",
    "TipCalibration",
    "AxisCalibration",
    "NeedleCalibration",
    "UsPlaneCalibration",
    "CalibrationSet",
]
