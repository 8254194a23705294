"""Calibration routines over recordings: extraction, solving, reporting.

Shared by the CLI (offline `calibrate`/`report`) and the server (live
`run_calibration_routine`). Each routine reads the relevant bodies out of a
JSON Lines recording, runs its solver, and reports a summary dict; the
wire-ready CalibrationResult is built from the same solve.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import protocol as proto
from .calibration import (
    calibrate_needle_axis,
    calibrate_needle_tip,
    fit_circle_3d,
    fit_sphere,
    hand_eye_calibrate,
    register_us_plane,
    relative_motions,
)
from .geometry import Pose, Quat, Vec3
from .recording import read_records, record_to_message
from .simulator import (
    BODY_HEADSET,
    BODY_HEADSET_DISPLAY,
    BODY_NEEDLE,
    BODY_PROBE,
)

ROUTINES = ("sphere", "circle", "tip", "axis", "handeye", "usplane")


def frames_of(path: str, body_id: int) -> list[proto.RigidBodyFrame]:
    out = []
    for rec in read_records(path):
        if rec.get("type") == "rigid_body_frame" and rec.get("body_id") == body_id:
            out.append(record_to_message(rec))
    return out


def poses_of(path: str, body_id: int) -> list[Pose]:
    return [f.pose() for f in frames_of(path, body_id)]


def positions_of(path: str, body_id: int) -> np.ndarray:
    poses = poses_of(path, body_id)
    if not poses:
        raise ValueError(f"recording has no frames for body {body_id}")
    return np.array([p.position.as_array() for p in poses])


def us_pairs_of(path: str):
    probe_by_time: dict[float, Pose] = {}
    pairs: list[dict] = []
    for rec in read_records(path):
        if rec.get("type") == "rigid_body_frame" and rec.get("body_id") == BODY_PROBE:
            probe_by_time[rec["timestamp"]] = record_to_message(rec).pose()
        elif rec.get("type") == "us_point_pair":
            pairs.append(rec)
    if not pairs:
        raise ValueError("recording has no us_point_pair records")
    world, image, poses = [], [], []
    for pair in pairs:
        probe = probe_by_time.get(pair["timestamp"])
        if probe is None:
            raise ValueError(
                f"us_point_pair at t={pair['timestamp']} has no probe frame"
            )
        world.append(pair["world"])
        image.append(pair["image"])
        poses.append(probe)
    return np.array(world), np.array(image), poses


def truth_record(path: Optional[str], scenario: str) -> Optional[dict]:
    if path is None:
        return None
    for rec in read_records(path):
        if rec.get("type") == "truth" and rec.get("scenario") == scenario:
            return rec
    return None


def _angle_between_deg(a: Vec3, b: Vec3) -> float:
    d = abs(a.normalized().dot(b.normalized()))
    return math.degrees(math.acos(min(1.0, d)))


def run_calibration_routine(
    routine: str,
    input_path: str,
    truth_path: Optional[str] = None,
    spacing: Optional[float] = None,
) -> dict:
    """Run one routine over a recording; returns the printable summary.

    Raises CalibrationError/ValueError on degenerate or missing data.
    """
    if routine == "sphere":
        fit = fit_sphere(positions_of(input_path, BODY_NEEDLE))
        out = {
            "routine": "sphere",
            "center_m": [fit.center.x, fit.center.y, fit.center.z],
            "radius_m": fit.radius,
            "rms_mm": fit.rms_residual * 1e3,
            "points": fit.point_count,
        }
        truth = truth_record(truth_path, "pivot")
        if truth:
            out["center_error_mm"] = (fit.center - Vec3(*truth["tip_world"])).norm() * 1e3
        return out

    if routine == "circle":
        fit = fit_circle_3d(positions_of(input_path, BODY_NEEDLE))
        out = {
            "routine": "circle",
            "center_m": [fit.center.x, fit.center.y, fit.center.z],
            "normal": [fit.normal.x, fit.normal.y, fit.normal.z],
            "radius_m": fit.radius,
            "rms_mm": fit.rms_residual * 1e3,
        }
        truth = truth_record(truth_path, "axis_spin")
        if truth and "world_axis" in truth:
            out["normal_error_deg"] = _angle_between_deg(
                fit.normal, Vec3(*truth["world_axis"])
            )
        return out

    if routine == "tip":
        tip = calibrate_needle_tip(poses_of(input_path, BODY_NEEDLE))
        out = {
            "routine": "tip",
            "tip_world_m": [tip.tip_world.x, tip.tip_world.y, tip.tip_world.z],
            "tip_offset_m": [tip.tip_offset.x, tip.tip_offset.y, tip.tip_offset.z],
            "rms_mm": tip.rms_residual * 1e3,
        }
        truth = truth_record(truth_path, "pivot")
        if truth:
            out["tip_error_mm"] = (tip.tip_world - Vec3(*truth["tip_world"])).norm() * 1e3
            out["offset_error_mm"] = (tip.tip_offset - Vec3(*truth["tip_offset"])).norm() * 1e3
        return out

    if routine == "axis":
        axis = calibrate_needle_axis(poses_of(input_path, BODY_NEEDLE))
        out = {
            "routine": "axis",
            "axis_dir": [axis.axis_dir.x, axis.axis_dir.y, axis.axis_dir.z],
            "rms_mm": axis.rms_residual * 1e3,
        }
        truth = truth_record(truth_path, "axis_spin")
        if truth:
            out["axis_error_deg"] = _angle_between_deg(
                axis.axis_dir, Vec3(*truth["axis_dir"])
            )
        return out

    if routine == "handeye":
        tracker = poses_of(input_path, BODY_HEADSET)
        display = poses_of(input_path, BODY_HEADSET_DISPLAY)
        if len(tracker) != len(display):
            raise ValueError(
                f"headset streams differ in length ({len(tracker)} vs {len(display)})"
            )
        fit = hand_eye_calibrate(relative_motions(tracker), relative_motions(display))
        x = fit.x
        out = {
            "routine": "handeye",
            "position_m": [x.position.x, x.position.y, x.position.z],
            "quaternion_wxyz": [
                x.orientation.w, x.orientation.x, x.orientation.y, x.orientation.z
            ],
            "rotation_residual_deg": math.degrees(fit.rotation_residual),
            "translation_residual_mm": fit.translation_residual * 1e3,
        }
        truth = truth_record(truth_path, "handeye")
        if truth:
            true_x = Pose(Vec3(*truth["position"]), Quat(*truth["quaternion"]), 0.0)
            out["rotation_error_deg"] = math.degrees(
                x.orientation.angle_to(true_x.orientation)
            )
            out["translation_error_mm"] = (x.position - true_x.position).norm() * 1e3
        return out

    if routine == "usplane":
        world, image, poses = us_pairs_of(input_path)
        cal = register_us_plane(world, image, poses, known_pixel_spacing=spacing)
        p = cal.image_to_probe
        out = {
            "routine": "usplane",
            "position_m": [p.position.x, p.position.y, p.position.z],
            "quaternion_wxyz": [
                p.orientation.w, p.orientation.x, p.orientation.y, p.orientation.z
            ],
            "pixel_spacing_m": cal.pixel_spacing,
            "rms_mm": cal.rms_residual * 1e3,
        }
        truth = truth_record(truth_path, "us_sweep")
        if truth:
            true_pose = Pose(Vec3(*truth["position"]), Quat(*truth["quaternion"]), 0.0)
            out["rotation_error_deg"] = math.degrees(
                p.orientation.angle_to(true_pose.orientation)
            )
            out["translation_error_mm"] = (p.position - true_pose.position).norm() * 1e3
            out["spacing_rel_error"] = abs(
                cal.pixel_spacing - truth["pixel_spacing"]
            ) / truth["pixel_spacing"]
        return out

    raise ValueError(f"unknown routine {routine!r}")


def routine_result_message(
    routine: str, input_path: str, spacing: Optional[float] = None
) -> proto.CalibrationResult:
    """The broadcastable result of a routine; raises like the solvers do."""
    if routine == "tip":
        tip = calibrate_needle_tip(poses_of(input_path, BODY_NEEDLE))
        return proto.CalibrationResult(
            kind=proto.CalibrationKind.TIP,
            vector=tip.tip_offset, rms=tip.rms_residual,
        )
    if routine == "axis":
        axis = calibrate_needle_axis(poses_of(input_path, BODY_NEEDLE))
        return proto.CalibrationResult(
            kind=proto.CalibrationKind.AXIS,
            vector=axis.axis_dir, rms=axis.rms_residual,
        )
    if routine == "handeye":
        tracker = poses_of(input_path, BODY_HEADSET)
        display = poses_of(input_path, BODY_HEADSET_DISPLAY)
        if len(tracker) != len(display):
            raise ValueError(
                f"headset streams differ in length ({len(tracker)} vs {len(display)})"
            )
        fit = hand_eye_calibrate(relative_motions(tracker), relative_motions(display))
        return proto.CalibrationResult(
            kind=proto.CalibrationKind.HAND_EYE,
            transform=fit.x,
            rotation_residual=fit.rotation_residual,
            translation_residual=fit.translation_residual,
        )
    if routine == "usplane":
        world, image, poses = us_pairs_of(input_path)
        cal = register_us_plane(world, image, poses, known_pixel_spacing=spacing)
        return proto.CalibrationResult(
            kind=proto.CalibrationKind.US_PLANE,
            transform=cal.image_to_probe,
            pixel_spacing=cal.pixel_spacing,
            rms=cal.rms_residual,
        )
    raise ValueError(f"routine {routine!r} does not produce a calibration message")
