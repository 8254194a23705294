"""JSON Lines recordings: the offline interchange for every tool.

`simulate` writes them, `serve`/`replay` read them back as a source, and
`calibrate`/`report` consume them. One JSON object per line with a ``type``
tag and explicit field names; timestamps are f64 seconds. Quaternions are
listed scalar-first, matching the wire protocol.

Two record types are not wire messages:

* ``us_point_pair`` — a world point known to lie in the scan plane plus its
  exact pixel coordinates; scenario data consumed by the US-plane routine.
* ``truth`` — ground-truth records, written to a separate truth file so
  no client can read them off the stream.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

from .geometry import Pose, Quat, Vec3
from .guidance import GuidanceState, GuidanceStatus
from . import protocol as proto

_STATUS_NAMES = {
    GuidanceStatus.ON_TRACK: "on_track",
    GuidanceStatus.DEVIATING: "deviating",
    GuidanceStatus.LOST: "lost",
}
_STATUS_VALUES = {v: k for k, v in _STATUS_NAMES.items()}

_CALIB_NAMES = {
    proto.CalibrationKind.TIP: "tip",
    proto.CalibrationKind.AXIS: "axis",
    proto.CalibrationKind.HAND_EYE: "hand_eye",
    proto.CalibrationKind.US_PLANE: "us_plane",
}
_CALIB_VALUES = {v: k for k, v in _CALIB_NAMES.items()}

_COMMAND_NAMES = {
    proto.SimCommandKind.NUDGE_TRANSLATE: "nudge_translate",
    proto.SimCommandKind.NUDGE_ROTATE: "nudge_rotate",
    proto.SimCommandKind.SET_NOISE: "set_noise",
    proto.SimCommandKind.SELECT_SCENARIO: "select_scenario",
}
_COMMAND_VALUES = {v: k for k, v in _COMMAND_NAMES.items()}


def _vec(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def _quat(q: Quat) -> list[float]:
    return [q.w, q.x, q.y, q.z]


def dumps_record(record: dict) -> str:
    """Canonical one-line JSON; key-sorted so identical data is byte-identical."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def message_to_record(m: proto.Message) -> dict:
    if isinstance(m, proto.RigidBodyFrame):
        return {
            "type": "rigid_body_frame",
            "body_id": m.body_id,
            "sequence": m.sequence,
            "timestamp": m.timestamp,
            "position": _vec(m.position),
            "quaternion": _quat(m.orientation),
            "valid": m.valid,
        }
    if isinstance(m, proto.VideoFrame):
        return {
            "type": "video_frame",
            "stream_id": m.stream_id,
            "sequence": m.sequence,
            "timestamp": m.timestamp,
            "width": m.width,
            "height": m.height,
            "format": "gray8" if m.pixel_format == proto.VIDEO_FORMAT_GRAY8 else m.pixel_format,
            "data_b64": base64.b64encode(m.data).decode("ascii"),
        }
    if isinstance(m, proto.PlanUpdate):
        return {
            "type": "plan_update",
            "plan_id": m.plan_id,
            "entry": _vec(m.entry),
            "target": _vec(m.target),
        }
    if isinstance(m, proto.Guidance):
        s = m.state
        return {
            "type": "guidance",
            "plan_id": s.plan_id,
            "timestamp": s.timestamp,
            "status": _STATUS_NAMES[s.status],
            "progress": s.progress,
            "lateral_offset": _vec(s.lateral_offset),
            "lateral_magnitude": s.lateral_magnitude,
            "magnified_offset": _vec(s.magnified_offset),
            "angle_offset_deg": s.angle_offset_deg,
            "triangle": [_vec(v) for v in s.triangle],
        }
    if isinstance(m, proto.CalibrationResult):
        rec: dict = {"type": "calibration_result", "kind": _CALIB_NAMES[m.kind]}
        if m.kind == proto.CalibrationKind.TIP:
            rec.update(tip_offset=_vec(m.vector), rms=m.rms)
        elif m.kind == proto.CalibrationKind.AXIS:
            rec.update(axis_dir=_vec(m.vector), rms=m.rms)
        elif m.kind == proto.CalibrationKind.HAND_EYE:
            rec.update(
                position=_vec(m.transform.position),
                quaternion=_quat(m.transform.orientation),
                rotation_residual=m.rotation_residual,
                translation_residual=m.translation_residual,
            )
        else:
            rec.update(
                position=_vec(m.transform.position),
                quaternion=_quat(m.transform.orientation),
                pixel_spacing=m.pixel_spacing,
                rms=m.rms,
            )
        return rec
    if isinstance(m, proto.SimCommand):
        rec = {"type": "sim_command", "kind": _COMMAND_NAMES[m.kind]}
        if m.kind in (proto.SimCommandKind.NUDGE_TRANSLATE, proto.SimCommandKind.NUDGE_ROTATE):
            rec["delta"] = _vec(m.delta)
        elif m.kind == proto.SimCommandKind.SET_NOISE:
            rec.update(position_sigma=m.position_sigma, orientation_sigma=m.orientation_sigma)
        else:
            rec["scenario"] = m.scenario
        return rec
    if isinstance(m, proto.ErrorMessage):
        return {"type": "error", "code": m.code, "text": m.text}
    if isinstance(m, proto.Heartbeat):
        return {"type": "heartbeat", "timestamp": m.timestamp}
    if isinstance(m, proto.Hello):
        return {
            "type": "hello",
            "client_name": m.client_name,
            "protocol_version": m.protocol_version,
        }
    if isinstance(m, proto.Subscribe):
        return {"type": "subscribe", "all": m.all_bodies, "body_ids": list(m.body_ids)}
    raise TypeError(f"cannot record message type {type(m).__name__}")


def record_to_message(rec: dict) -> Optional[proto.Message]:
    """Rebuild the wire message for a record; None for non-message records."""
    t = rec.get("type")
    if t == "rigid_body_frame":
        return proto.RigidBodyFrame(
            body_id=rec["body_id"],
            sequence=rec["sequence"],
            timestamp=rec["timestamp"],
            position=Vec3(*rec["position"]),
            orientation=Quat(*rec["quaternion"]),
            valid=bool(rec["valid"]),
        )
    if t == "video_frame":
        return proto.VideoFrame(
            stream_id=rec["stream_id"],
            sequence=rec["sequence"],
            timestamp=rec["timestamp"],
            width=rec["width"],
            height=rec["height"],
            pixel_format=proto.VIDEO_FORMAT_GRAY8,
            data=base64.b64decode(rec["data_b64"]),
        )
    if t == "plan_update":
        return proto.PlanUpdate(
            plan_id=rec["plan_id"],
            entry=Vec3(*rec["entry"]),
            target=Vec3(*rec["target"]),
        )
    if t == "guidance":
        state = GuidanceState(
            progress=rec["progress"],
            lateral_offset=Vec3(*rec["lateral_offset"]),
            lateral_magnitude=rec["lateral_magnitude"],
            magnified_offset=Vec3(*rec["magnified_offset"]),
            angle_offset_deg=rec["angle_offset_deg"],
            triangle=tuple(Vec3(*v) for v in rec["triangle"]),
            status=_STATUS_VALUES[rec["status"]],
            plan_id=rec["plan_id"],
            timestamp=rec["timestamp"],
        )
        return proto.Guidance(state=state)
    if t == "calibration_result":
        kind = _CALIB_VALUES[rec["kind"]]
        if kind == proto.CalibrationKind.TIP:
            return proto.CalibrationResult(
                kind=kind, vector=Vec3(*rec["tip_offset"]), rms=rec["rms"]
            )
        if kind == proto.CalibrationKind.AXIS:
            return proto.CalibrationResult(
                kind=kind, vector=Vec3(*rec["axis_dir"]), rms=rec["rms"]
            )
        transform = Pose(Vec3(*rec["position"]), Quat(*rec["quaternion"]), 0.0)
        if kind == proto.CalibrationKind.HAND_EYE:
            return proto.CalibrationResult(
                kind=kind,
                transform=transform,
                rotation_residual=rec["rotation_residual"],
                translation_residual=rec["translation_residual"],
            )
        return proto.CalibrationResult(
            kind=kind,
            transform=transform,
            pixel_spacing=rec["pixel_spacing"],
            rms=rec["rms"],
        )
    if t == "sim_command":
        kind = _COMMAND_VALUES[rec["kind"]]
        if kind in (proto.SimCommandKind.NUDGE_TRANSLATE, proto.SimCommandKind.NUDGE_ROTATE):
            return proto.SimCommand(kind=kind, delta=Vec3(*rec["delta"]))
        if kind == proto.SimCommandKind.SET_NOISE:
            return proto.SimCommand(
                kind=kind,
                position_sigma=rec["position_sigma"],
                orientation_sigma=rec["orientation_sigma"],
            )
        return proto.SimCommand(kind=kind, scenario=rec["scenario"])
    if t == "error":
        return proto.ErrorMessage(code=rec["code"], text=rec["text"])
    if t == "heartbeat":
        return proto.Heartbeat(timestamp=rec["timestamp"])
    if t == "hello":
        return proto.Hello(
            client_name=rec["client_name"], protocol_version=rec["protocol_version"]
        )
    if t == "subscribe":
        return proto.Subscribe(all_bodies=rec["all"], body_ids=tuple(rec["body_ids"]))
    return None


class RecordingWriter:
    def __init__(self, stream: IO[str]):
        self._stream = stream

    def write_record(self, record: dict) -> None:
        self._stream.write(dumps_record(record))
        self._stream.write("\n")

    def write_message(self, m: proto.Message) -> None:
        self.write_record(message_to_record(m))


def write_records(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        w = RecordingWriter(fh)
        for rec in records:
            w.write_record(rec)
            n += 1
    return n


def read_records(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: not valid JSON: {e}") from e
            if not isinstance(rec, dict) or "type" not in rec:
                raise ValueError(f"{path}:{line_no}: record must be an object with a 'type'")
            yield rec


def read_messages(path: str | Path) -> Iterator[proto.Message]:
    """Wire messages from a recording, skipping scenario-data records."""
    for rec in read_records(path):
        msg = record_to_message(rec)
        if msg is not None:
            yield msg
