#!/usr/bin/env python3
"""Regenerates golden/protocol_vectors.jsonl.

Each line holds one wire message as {"hex": <encoded bytes>, "decoded":
<recording-format record>}. Every implementation of the protocol must
decode the hex to exactly the decoded fields, and re-encode to the same
bytes. Deterministic: a fixed seed drives the value choices.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from needleguide import protocol as proto               # noqa: E402
from needleguide.geometry import Pose, Quat, Vec3      # noqa: E402
from needleguide.guidance import GuidanceState, GuidanceStatus  # noqa: E402
from needleguide.recording import dumps_record, message_to_record  # noqa: E402


def _quat(rng) -> Quat:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Quat(*q)


def build_messages() -> list:
    rng = np.random.default_rng(20260810)
    msgs = [
        proto.Heartbeat(timestamp=0.0),
        proto.Heartbeat(timestamp=1234.5678),
        proto.Hello(client_name="browser-ui"),
        proto.Hello(client_name=""),
        proto.Subscribe(all_bodies=True),
        proto.Subscribe(all_bodies=False, body_ids=(1, 2, 3)),
        proto.Subscribe(all_bodies=False, body_ids=()),
        proto.ErrorMessage(code=104, text="commands are not accepted"),
        proto.ErrorMessage(code=0, text=""),
        proto.PlanUpdate(plan_id=7, entry=Vec3(0.0, 0.0, 0.0),
                         target=Vec3(0.0, 0.0, 0.12)),
        proto.SimCommand(kind=proto.SimCommandKind.NUDGE_TRANSLATE,
                         delta=Vec3(0.001, 0.0, -0.002)),
        proto.SimCommand(kind=proto.SimCommandKind.NUDGE_ROTATE,
                         delta=Vec3(0.0, 0.017453292519943295, 0.0)),
        proto.SimCommand(kind=proto.SimCommandKind.SET_NOISE,
                         position_sigma=0.001, orientation_sigma=0.0034906585),
        proto.SimCommand(kind=proto.SimCommandKind.SELECT_SCENARIO,
                         scenario="insertion"),
        proto.CalibrationResult(kind=proto.CalibrationKind.TIP,
                                vector=Vec3(0.0, 0.002, 0.15), rms=0.0003),
        proto.CalibrationResult(kind=proto.CalibrationKind.AXIS,
                                vector=Vec3(0.0, 0.0, 1.0), rms=0.0001),
        proto.CalibrationResult(
            kind=proto.CalibrationKind.HAND_EYE,
            transform=Pose(Vec3(0.1, -0.2, 0.3), _quat(rng), 0.0),
            rotation_residual=0.001, translation_residual=0.0005,
        ),
        proto.CalibrationResult(
            kind=proto.CalibrationKind.US_PLANE,
            transform=Pose(Vec3(-0.01, 0.02, 0.005), _quat(rng), 0.0),
            pixel_spacing=0.0002, rms=0.0004,
        ),
        proto.VideoFrame(stream_id=1, sequence=42, timestamp=3.5,
                         width=4, height=3, data=bytes(range(12))),
    ]
    for i in range(12):
        msgs.append(proto.RigidBodyFrame(
            body_id=int(rng.integers(1, 5)),
            sequence=int(rng.integers(0, 1 << 31)),
            timestamp=float(rng.uniform(0, 1e4)),
            position=Vec3.from_array(rng.uniform(-0.5, 0.5, 3)),
            orientation=_quat(rng),
            valid=bool(i % 5 != 0),
        ))
    for i in range(8):
        tri = tuple(Vec3.from_array(rng.uniform(-0.3, 0.3, 3)) for _ in range(3))
        msgs.append(proto.Guidance(state=GuidanceState(
            progress=float(rng.uniform(-0.5, 1.5)),
            lateral_offset=Vec3.from_array(rng.uniform(-0.05, 0.05, 3)),
            lateral_magnitude=float(rng.uniform(0, 0.05)),
            magnified_offset=Vec3.from_array(rng.uniform(-0.25, 0.25, 3)),
            angle_offset_deg=float(rng.uniform(0, 180)),
            triangle=tri,
            status=GuidanceStatus(i % 3),
            plan_id=int(rng.integers(0, 100)),
            timestamp=float(rng.uniform(0, 1e4)),
        )))
    return msgs


def main() -> None:
    out_path = Path(__file__).resolve().parent.parent / "golden" / "protocol_vectors.jsonl"
    out_path.parent.mkdir(exist_ok=True)
    lines = []
    for m in build_messages():
        lines.append(dumps_record({
            "hex": proto.encode(m).hex(),
            "decoded": message_to_record(m),
        }))
    out_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} vectors to {out_path}")


if __name__ == "__main__":
    main()
