"""Structured results produced by the calibration estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..geometry import Pose, Vec3


@dataclass(frozen=True, slots=True)
class SphereFit:
    center: Vec3
    radius: float
    rms_residual: float
    point_count: int


@dataclass(frozen=True, slots=True)
class CircleFit3D:
    center: Vec3
    normal: Vec3          # unit, canonical sign
    radius: float
    rms_residual: float


@dataclass(frozen=True, slots=True)
class RigidTransformFit:
    transform: Pose       # timestamp 0
    scale: float          # 1.0 when scale estimation is disabled
    rms_residual: float


@dataclass(frozen=True, slots=True)
class HandEyeFit:
    x: Pose                       # the unknown X in AX = XB
    rotation_residual: float      # radians, max over motion pairs
    translation_residual: float   # meters, max over motion pairs


@dataclass(frozen=True, slots=True)
class TipCalibration:
    tip_world: Vec3       # pivot point in tracker frame
    tip_offset: Vec3      # tip in the needle body frame
    rms_residual: float


@dataclass(frozen=True, slots=True)
class AxisCalibration:
    axis_dir: Vec3        # unit, needle body frame, canonical sign
    rms_residual: float


@dataclass(frozen=True, slots=True)
class NeedleCalibration:
    tip_offset: Vec3
    axis_dir: Vec3
    tip_rms: float
    axis_rms: float


@dataclass(frozen=True, slots=True)
class UsPlaneCalibration:
    image_to_probe: Pose  # image coords (pixels lifted to meters) -> probe frame
    pixel_spacing: float  # m/pixel, uniform; image y axis points down
    rms_residual: float


@dataclass
class CalibrationSet:
    """The live set of calibrations a session applies to incoming frames."""

    needle: Optional[NeedleCalibration] = None
    hand_eye: Optional[HandEyeFit] = None
    us_plane: Optional[UsPlaneCalibration] = None
