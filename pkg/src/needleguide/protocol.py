"""Length-prefixed binary wire protocol.

One codec, two transports: the byte stream below runs verbatim over TCP,
and each encoded message travels as one binary WebSocket frame on the
bridge. The byte layout is normative and documented in PROTOCOL.md.

Framing: every message starts with an 8-byte header

    magic 0x4E 0x54 ("NT") | version u8 = 1 | msg_type u8 | payload_len u32

followed by ``payload_len`` bytes of payload. All integers and floats are
little-endian; strings are u16-length-prefixed UTF-8; quaternions are
scalar-first (w, x, y, z). Unknown message types are skippable via the
length field. All floats must be finite (enforced at encode).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Optional, Union

from .geometry import Pose, Quat, Vec3
from .guidance import GuidanceState, GuidanceStatus, TrajectoryPlan

MAGIC = b"NT"
PROTOCOL_VERSION = 1
HEADER = struct.Struct("<2sBBI")
MAX_PAYLOAD = 16 * 1024 * 1024


class MsgType(IntEnum):
    HELLO = 0x01
    SUBSCRIBE = 0x02
    RIGID_BODY_FRAME = 0x03
    VIDEO_FRAME = 0x04
    PLAN_UPDATE = 0x05
    GUIDANCE = 0x06
    CALIBRATION_RESULT = 0x07
    SIM_COMMAND = 0x08
    ERROR = 0x09
    HEARTBEAT = 0x0A


class CalibrationKind(IntEnum):
    TIP = 1
    AXIS = 2
    HAND_EYE = 3
    US_PLANE = 4


class SimCommandKind(IntEnum):
    NUDGE_TRANSLATE = 1
    NUDGE_ROTATE = 2
    SET_NOISE = 3
    SELECT_SCENARIO = 4


class ErrorCode(IntEnum):
    INVALID_PLAN = 100
    DEGENERATE_INPUT = 101
    POOR_CONDITIONING = 102
    DEGENERATE_MOTION = 103
    COMMAND_REJECTED = 104
    MALFORMED_MESSAGE = 105
    INTERNAL = 106
    LENGTH_MISMATCH = 107
    SCALE_UNOBSERVABLE = 108


VIDEO_FORMAT_GRAY8 = 1


# --------------------------------------------------------------------------
# message types

@dataclass(frozen=True, slots=True)
class Hello:
    client_name: str
    protocol_version: int = PROTOCOL_VERSION


@dataclass(frozen=True, slots=True)
class Subscribe:
    all_bodies: bool = True
    body_ids: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class RigidBodyFrame:
    body_id: int
    sequence: int
    timestamp: float
    position: Vec3
    orientation: Quat
    valid: bool = True

    def pose(self) -> Pose:
        return Pose(self.position, self.orientation, self.timestamp)


@dataclass(frozen=True, slots=True)
class VideoFrame:
    stream_id: int
    sequence: int
    timestamp: float
    width: int
    height: int
    pixel_format: int = VIDEO_FORMAT_GRAY8
    data: bytes = b""


@dataclass(frozen=True, slots=True)
class PlanUpdate:
    """Raw plan fields; geometric validity is an application concern, so a
    degenerate plan still decodes and gets rejected by the server."""

    plan_id: int
    entry: Vec3
    target: Vec3

    @staticmethod
    def from_plan(plan: TrajectoryPlan) -> "PlanUpdate":
        return PlanUpdate(plan_id=plan.id, entry=plan.entry, target=plan.target)

    def to_plan(self) -> TrajectoryPlan:
        """Validated plan; raises InvalidPlan when entry and target coincide."""
        return TrajectoryPlan(entry=self.entry, target=self.target, id=self.plan_id)


@dataclass(frozen=True, slots=True)
class Guidance:
    state: GuidanceState


@dataclass(frozen=True, slots=True)
class CalibrationResult:
    """Calibration broadcast; fields used depend on ``kind``.

    Wire transforms carry no timestamp: ``transform`` is always stamped 0.
    """

    kind: CalibrationKind
    vector: Vec3 = field(default_factory=Vec3.zero)  # tip_offset | axis_dir
    transform: Optional[Pose] = None                 # hand-eye X | image_to_probe
    rms: float = 0.0
    rotation_residual: float = 0.0       # hand-eye only
    translation_residual: float = 0.0    # hand-eye only
    pixel_spacing: float = 0.0           # us-plane only


@dataclass(frozen=True, slots=True)
class SimCommand:
    kind: SimCommandKind
    delta: Vec3 = field(default_factory=Vec3.zero)   # m translate | rad rotvec
    position_sigma: float = 0.0                      # m, SET_NOISE
    orientation_sigma: float = 0.0                   # rad, SET_NOISE
    scenario: str = ""                               # SELECT_SCENARIO


@dataclass(frozen=True, slots=True)
class ErrorMessage:
    code: int
    text: str


@dataclass(frozen=True, slots=True)
class Heartbeat:
    timestamp: float


@dataclass(frozen=True, slots=True)
class UnknownMessage:
    """A forward-compatible message this build does not understand."""

    msg_type: int
    payload: bytes


Message = Union[
    Hello, Subscribe, RigidBodyFrame, VideoFrame, PlanUpdate, Guidance,
    CalibrationResult, SimCommand, ErrorMessage, Heartbeat, UnknownMessage,
]


# --------------------------------------------------------------------------
# errors

class EncodeError(ValueError):
    """Message cannot be represented on the wire (size, non-finite floats)."""


class ProtocolError(Exception):
    """Framing or payload error; poisons the connection it occurred on."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagic(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class PayloadTooLarge(ProtocolError):
    pass


class MalformedPayload(ProtocolError):
    pass


# --------------------------------------------------------------------------
# primitive writers / readers

def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise EncodeError(f"non-finite float {v!r} cannot be encoded")


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise EncodeError("string longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def _pack_vec3(v: Vec3) -> bytes:
    _check_finite(v.x, v.y, v.z)
    return struct.pack("<3d", v.x, v.y, v.z)


def _pack_quat(q: Quat) -> bytes:
    _check_finite(q.w, q.x, q.y, q.z)
    return struct.pack("<4d", q.w, q.x, q.y, q.z)


class _Reader:
    """Cursor over one payload; raises MalformedPayload on any overrun."""

    def __init__(self, payload: memoryview, base_offset: int):
        self.buf = payload
        self.pos = 0
        self.base = base_offset

    def _fail(self, why: str):
        raise MalformedPayload(why, self.base + self.pos)

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            self._fail(f"payload truncated, wanted {n} more bytes")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def vec3(self) -> Vec3:
        x, y, z = struct.unpack("<3d", self.take(24))
        return Vec3(x, y, z)

    def quat(self) -> Quat:
        w, x, y, z = struct.unpack("<4d", self.take(32))
        return Quat(w, x, y, z)

    def string(self) -> str:
        n = self.u16()
        try:
            return bytes(self.take(n)).decode("utf-8")
        except UnicodeDecodeError:
            self._fail("invalid utf-8 in string")

    def done(self) -> None:
        if self.pos != len(self.buf):
            self._fail(f"{len(self.buf) - self.pos} trailing payload bytes")


_RBF = struct.Struct("<HId3d4dB")
_VIDEO_HEAD = struct.Struct("<HIdHHBI")


# --------------------------------------------------------------------------
# encode

def _payload(m: Message) -> tuple[int, bytes]:
    if isinstance(m, Hello):
        return MsgType.HELLO, struct.pack("<B", m.protocol_version) + _pack_str(m.client_name)
    if isinstance(m, Subscribe):
        if m.all_bodies and m.body_ids:
            raise EncodeError("subscribe-to-all must not list body ids")
        body = struct.pack("<BH", 1 if m.all_bodies else 0, len(m.body_ids))
        for bid in m.body_ids:
            body += struct.pack("<H", bid)
        return MsgType.SUBSCRIBE, body
    if isinstance(m, RigidBodyFrame):
        _check_finite(m.timestamp)
        p, q = m.position, m.orientation
        _check_finite(p.x, p.y, p.z, q.w, q.x, q.y, q.z)
        return MsgType.RIGID_BODY_FRAME, _RBF.pack(
            m.body_id, m.sequence, m.timestamp,
            p.x, p.y, p.z, q.w, q.x, q.y, q.z, 1 if m.valid else 0,
        )
    if isinstance(m, VideoFrame):
        _check_finite(m.timestamp)
        if m.pixel_format == VIDEO_FORMAT_GRAY8 and len(m.data) != m.width * m.height:
            raise EncodeError(
                f"gray8 frame {m.width}x{m.height} needs {m.width * m.height} "
                f"bytes, got {len(m.data)}"
            )
        head = _VIDEO_HEAD.pack(
            m.stream_id, m.sequence, m.timestamp,
            m.width, m.height, m.pixel_format, len(m.data),
        )
        return MsgType.VIDEO_FRAME, head + m.data
    if isinstance(m, PlanUpdate):
        return MsgType.PLAN_UPDATE, (
            struct.pack("<I", m.plan_id) + _pack_vec3(m.entry) + _pack_vec3(m.target)
        )
    if isinstance(m, Guidance):
        s = m.state
        _check_finite(s.timestamp, s.progress, s.lateral_magnitude, s.angle_offset_deg)
        body = struct.pack("<IdB", s.plan_id, s.timestamp, int(s.status))
        body += struct.pack("<d", s.progress)
        body += _pack_vec3(s.lateral_offset)
        body += struct.pack("<d", s.lateral_magnitude)
        body += _pack_vec3(s.magnified_offset)
        body += struct.pack("<d", s.angle_offset_deg)
        for v in s.triangle:
            body += _pack_vec3(v)
        return MsgType.GUIDANCE, body
    if isinstance(m, CalibrationResult):
        body = struct.pack("<B", int(m.kind))
        if m.kind in (CalibrationKind.TIP, CalibrationKind.AXIS):
            body += _pack_vec3(m.vector) + struct.pack("<d", m.rms)
            _check_finite(m.rms)
        elif m.kind == CalibrationKind.HAND_EYE:
            if m.transform is None:
                raise EncodeError("hand-eye result needs a transform")
            _check_finite(m.rotation_residual, m.translation_residual)
            body += _pack_vec3(m.transform.position) + _pack_quat(m.transform.orientation)
            body += struct.pack("<2d", m.rotation_residual, m.translation_residual)
        elif m.kind == CalibrationKind.US_PLANE:
            if m.transform is None:
                raise EncodeError("us-plane result needs a transform")
            _check_finite(m.pixel_spacing, m.rms)
            body += _pack_vec3(m.transform.position) + _pack_quat(m.transform.orientation)
            body += struct.pack("<2d", m.pixel_spacing, m.rms)
        else:
            raise EncodeError(f"unknown calibration kind {m.kind}")
        return MsgType.CALIBRATION_RESULT, body
    if isinstance(m, SimCommand):
        body = struct.pack("<B", int(m.kind))
        if m.kind in (SimCommandKind.NUDGE_TRANSLATE, SimCommandKind.NUDGE_ROTATE):
            body += _pack_vec3(m.delta)
        elif m.kind == SimCommandKind.SET_NOISE:
            _check_finite(m.position_sigma, m.orientation_sigma)
            body += struct.pack("<2d", m.position_sigma, m.orientation_sigma)
        elif m.kind == SimCommandKind.SELECT_SCENARIO:
            body += _pack_str(m.scenario)
        else:
            raise EncodeError(f"unknown sim command kind {m.kind}")
        return MsgType.SIM_COMMAND, body
    if isinstance(m, ErrorMessage):
        return MsgType.ERROR, struct.pack("<H", m.code) + _pack_str(m.text)
    if isinstance(m, Heartbeat):
        _check_finite(m.timestamp)
        return MsgType.HEARTBEAT, struct.pack("<d", m.timestamp)
    if isinstance(m, UnknownMessage):
        return m.msg_type, m.payload
    raise EncodeError(f"not a protocol message: {type(m).__name__}")


def encode(m: Message) -> bytes:
    """Serialize one message: 8-byte header plus payload."""
    msg_type, payload = _payload(m)
    if len(payload) > MAX_PAYLOAD:
        raise EncodeError(f"payload of {len(payload)} bytes exceeds 16 MiB")
    return HEADER.pack(MAGIC, PROTOCOL_VERSION, int(msg_type), len(payload)) + payload


# --------------------------------------------------------------------------
# decode

def _decode_payload(msg_type: int, payload: memoryview, base: int) -> Message:
    r = _Reader(payload, base)
    if msg_type == MsgType.HELLO:
        version = r.u8()
        name = r.string()
        r.done()
        return Hello(client_name=name, protocol_version=version)
    if msg_type == MsgType.SUBSCRIBE:
        all_flag = r.u8()
        count = r.u16()
        ids = tuple(r.u16() for _ in range(count))
        r.done()
        if all_flag not in (0, 1):
            r.pos = 0
            r._fail(f"subscribe flag must be 0 or 1, got {all_flag}")
        if all_flag == 1 and ids:
            r.pos = 0
            r._fail("subscribe-to-all must not list body ids")
        return Subscribe(all_bodies=all_flag == 1, body_ids=ids)
    if msg_type == MsgType.RIGID_BODY_FRAME:
        vals = r.unpack(_RBF)
        r.done()
        body_id, seq, ts = vals[0], vals[1], vals[2]
        pos = Vec3(*vals[3:6])
        quat = Quat(*vals[6:10])
        return RigidBodyFrame(body_id, seq, ts, pos, quat, valid=vals[10] != 0)
    if msg_type == MsgType.VIDEO_FRAME:
        stream_id, seq, ts, w, h, fmt, n = r.unpack(_VIDEO_HEAD)
        data = bytes(r.take(n))
        r.done()
        if fmt == VIDEO_FORMAT_GRAY8 and n != w * h:
            r.pos = 0
            r._fail(f"gray8 frame {w}x{h} carries {n} data bytes")
        return VideoFrame(stream_id, seq, ts, w, h, fmt, data)
    if msg_type == MsgType.PLAN_UPDATE:
        plan_id = r.u32()
        entry = r.vec3()
        target = r.vec3()
        r.done()
        return PlanUpdate(plan_id=plan_id, entry=entry, target=target)
    if msg_type == MsgType.GUIDANCE:
        plan_id, ts, status = r.unpack(struct.Struct("<IdB"))
        progress = r.f64()
        lateral = r.vec3()
        lat_mag = r.f64()
        magnified = r.vec3()
        angle = r.f64()
        triangle = (r.vec3(), r.vec3(), r.vec3())
        r.done()
        try:
            status_enum = GuidanceStatus(status)
        except ValueError:
            r.pos = 0
            r._fail(f"unknown guidance status {status}")
        state = GuidanceState(
            progress=progress, lateral_offset=lateral, lateral_magnitude=lat_mag,
            magnified_offset=magnified, angle_offset_deg=angle, triangle=triangle,
            status=status_enum, plan_id=plan_id, timestamp=ts,
        )
        return Guidance(state=state)
    if msg_type == MsgType.CALIBRATION_RESULT:
        kind_raw = r.u8()
        try:
            kind = CalibrationKind(kind_raw)
        except ValueError:
            r.pos = 0
            r._fail(f"unknown calibration kind {kind_raw}")
        if kind in (CalibrationKind.TIP, CalibrationKind.AXIS):
            vec = r.vec3()
            rms = r.f64()
            r.done()
            return CalibrationResult(kind=kind, vector=vec, rms=rms)
        pos = r.vec3()
        quat = r.quat()
        a = r.f64()
        b = r.f64()
        r.done()
        transform = Pose(pos, quat, 0.0)
        if kind == CalibrationKind.HAND_EYE:
            return CalibrationResult(
                kind=kind, transform=transform,
                rotation_residual=a, translation_residual=b,
            )
        return CalibrationResult(kind=kind, transform=transform, pixel_spacing=a, rms=b)
    if msg_type == MsgType.SIM_COMMAND:
        kind_raw = r.u8()
        try:
            kind = SimCommandKind(kind_raw)
        except ValueError:
            r.pos = 0
            r._fail(f"unknown sim command kind {kind_raw}")
        if kind in (SimCommandKind.NUDGE_TRANSLATE, SimCommandKind.NUDGE_ROTATE):
            delta = r.vec3()
            r.done()
            return SimCommand(kind=kind, delta=delta)
        if kind == SimCommandKind.SET_NOISE:
            ps = r.f64()
            os_ = r.f64()
            r.done()
            return SimCommand(kind=kind, position_sigma=ps, orientation_sigma=os_)
        name = r.string()
        r.done()
        return SimCommand(kind=kind, scenario=name)
    if msg_type == MsgType.ERROR:
        code = r.u16()
        text = r.string()
        r.done()
        return ErrorMessage(code=code, text=text)
    if msg_type == MsgType.HEARTBEAT:
        ts = r.f64()
        r.done()
        return Heartbeat(timestamp=ts)
    return UnknownMessage(msg_type=msg_type, payload=bytes(payload))


def decode_one(data, base_offset: int = 0) -> Optional[tuple[Message, int]]:
    """Decode the first message in ``data``.

    Returns ``(message, bytes_consumed)`` or None when more bytes are needed.
    Raises a ProtocolError (with stream offset) on framing or payload errors.
    """
    view = memoryview(data)
    if len(view) < HEADER.size:
        if len(view) >= 2 and bytes(view[:2]) != MAGIC:
            raise BadMagic("bad magic bytes", base_offset)
        if len(view) >= 1 and view[0] != MAGIC[0]:
            raise BadMagic("bad magic bytes", base_offset)
        return None
    magic, version, msg_type, length = HEADER.unpack(view[:HEADER.size])
    if magic != MAGIC:
        raise BadMagic("bad magic bytes", base_offset)
    if version != PROTOCOL_VERSION:
        raise UnsupportedVersion(f"protocol version {version} not supported", base_offset + 2)
    if length > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {length} bytes exceeds 16 MiB", base_offset + 4)
    total = HEADER.size + length
    if len(view) < total:
        return None
    msg = _decode_payload(msg_type, view[HEADER.size:total], base_offset + HEADER.size)
    return msg, total


class StreamDecoder:
    """Incremental decoder for one connection.

    Feed arbitrary chunks; iterate complete messages. Chunking-invariant:
    any partition of a valid stream yields the same message sequence. A
    framing error poisons the decoder (and should poison the connection).
    """

    def __init__(self):
        self._buf = bytearray()
        self.bytes_consumed = 0
        self.unknown_count = 0
        self._poisoned: Optional[ProtocolError] = None

    def feed(self, data: bytes) -> None:
        if self._poisoned is not None:
            raise self._poisoned
        self._buf.extend(data)

    def __iter__(self) -> Iterator[Message]:
        while True:
            if self._poisoned is not None:
                raise self._poisoned
            try:
                out = decode_one(self._buf, self.bytes_consumed)
            except ProtocolError as e:
                self._poisoned = e
                raise
            if out is None:
                return
            msg, used = out
            del self._buf[:used]
            self.bytes_consumed += used
            if isinstance(msg, UnknownMessage):
                self.unknown_count += 1
            yield msg
