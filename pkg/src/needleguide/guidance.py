"""Trajectory planning and live deviation metrics.

Given a planned entry-to-target line and the calibrated needle state, this
computes progress along the plan, the perpendicular (and magnified) offset,
the angle between needle axis and plan, and the deviation-triangle vertices
drawn by guidance displays: needle tip, its perpendicular foot on the
planned line, and the entry point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

from .calibration.results import NeedleCalibration
from .geometry import Pose, Vec3, transform_point

MIN_PLAN_LENGTH_M = 1e-3
DEFAULT_MAGNIFICATION = 5.0
DEFAULT_ON_TRACK_RADIUS_M = 3e-3
DEFAULT_ON_TRACK_ANGLE_DEG = 5.0


class GuidanceStatus(IntEnum):
    # wire codes; Lost is set by the caller on staleness, never here
    ON_TRACK = 0
    DEVIATING = 1
    LOST = 2


class InvalidPlan(ValueError):
    """Entry and target are (nearly) coincident."""


@dataclass(frozen=True, slots=True)
class TrajectoryPlan:
    entry: Vec3
    target: Vec3
    id: int = 0

    def __post_init__(self):
        if (self.target - self.entry).norm() <= MIN_PLAN_LENGTH_M:
            raise InvalidPlan(
                "plan entry and target must be more than 1 mm apart"
            )

    def direction(self) -> Vec3:
        return (self.target - self.entry).normalized()

    def length(self) -> float:
        return (self.target - self.entry).norm()


@dataclass(frozen=True, slots=True)
class NeedleState:
    tip: Vec3
    axis: Vec3           # unit, pointing from handle toward tip
    timestamp: float = 0.0


@dataclass(frozen=True, slots=True)
class GuidanceState:
    progress: float              # 0 at entry, 1 at target; may leave [0, 1]
    lateral_offset: Vec3         # m, perpendicular to the planned direction
    lateral_magnitude: float     # m
    magnified_offset: Vec3       # m, magnification * lateral_offset
    angle_offset_deg: float      # [0, 180]
    triangle: tuple[Vec3, Vec3, Vec3]   # (tip, foot on planned line, entry)
    status: GuidanceStatus
    plan_id: int = 0
    timestamp: float = 0.0


def compute_guidance(
    plan: TrajectoryPlan,
    needle: NeedleState,
    magnification: float = DEFAULT_MAGNIFICATION,
    on_track_radius: float = DEFAULT_ON_TRACK_RADIUS_M,
    on_track_angle_deg: float = DEFAULT_ON_TRACK_ANGLE_DEG,
) -> GuidanceState:
    """Deviation metrics of the needle against the planned line.

    Pure and total on valid inputs; magnification must be >= 1.
    """
    if magnification < 1.0:
        raise ValueError("magnification must be >= 1")
    u = plan.direction()
    rel = needle.tip - plan.entry
    along = rel.dot(u)
    progress = along / plan.length()
    foot = plan.entry + along * u
    lateral = rel - along * u
    lateral_mag = lateral.norm()
    axis = needle.axis.normalized()
    angle = math.degrees(math.acos(max(-1.0, min(1.0, axis.dot(u)))))
    status = (
        GuidanceStatus.ON_TRACK
        if lateral_mag < on_track_radius and angle < on_track_angle_deg
        else GuidanceStatus.DEVIATING
    )
    return GuidanceState(
        progress=progress,
        lateral_offset=lateral,
        lateral_magnitude=lateral_mag,
        magnified_offset=magnification * lateral,
        angle_offset_deg=angle,
        triangle=(needle.tip, foot, plan.entry),
        status=status,
        plan_id=plan.id,
        timestamp=needle.timestamp,
    )


def apply_needle_calibration(body_pose: Pose, calib: NeedleCalibration) -> NeedleState:
    """Tip and axis of the physical needle from its tracked body pose."""
    tip = transform_point(body_pose, calib.tip_offset)
    axis = body_pose.orientation.rotate(calib.axis_dir).normalized()
    return NeedleState(tip=tip, axis=axis, timestamp=body_pose.timestamp)
