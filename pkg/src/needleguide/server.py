"""Streaming middleware between a tracking source and guidance displays.

Consumes rigid-body frames from a simulator, a recording, or an upstream
TCP feed; converts handedness, maintains per-body pose history, applies
the active calibrations, computes guidance on every needle frame, and
broadcasts everything to subscribed clients over raw TCP and a WebSocket
bridge (same bytes, two transports).

Ordering contract: one sequencer (the event loop's source task) enqueues
every broadcast in arrival order, and each client connection drains its
queue FIFO, so every client sees per-body sequence numbers strictly
increasing with no duplication. Rigid-body and guidance messages are never
dropped, only delayed; video frames are freshest-wins per stream under
backpressure.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
import math
import time
from collections import deque
from typing import AsyncIterator, Optional, Protocol

from websockets.asyncio.server import serve as ws_serve
from websockets.exceptions import ConnectionClosed

from . import protocol as proto
from .calibration.results import CalibrationSet, NeedleCalibration, HandEyeFit, UsPlaneCalibration
from .config import ServerConfig
from .geometry import (
    Pose,
    Quat,
    Vec3,
    convert_handedness,
    convert_handedness_point,
    convert_handedness_quat,
    invert,
)
from .guidance import (
    GuidanceState,
    GuidanceStatus,
    InvalidPlan,
    TrajectoryPlan,
    apply_needle_calibration,
    compute_guidance,
)
from .history import PoseBuffer
from .recording import read_messages
from .simulator import (
    BODY_NEEDLE,
    CommandRejected,
    NoiseModel,
    Simulator,
    make_scenario,
)

log = logging.getLogger("needleguide.server")

HEARTBEAT_INTERVAL_S = 1.0
LATENCY_WINDOW = 4096
WRITE_BATCH_BYTES = 32768


class TrackingSource(Protocol):
    supports_commands: bool

    def messages(self) -> AsyncIterator[proto.Message]: ...

    def apply_command(self, cmd: proto.SimCommand) -> None: ...


class SimulatorSource:
    """Drives a Simulator, optionally paced against the wall clock.

    pace = 1.0 plays at the scenario's nominal rate, 2.0 at double speed;
    pace = 0 runs unpaced (still yielding to the event loop every frame).
    """

    supports_commands = True

    def __init__(self, simulator: Simulator, pace: float = 1.0):
        self.simulator = simulator
        self.pace = pace

    def apply_command(self, cmd: proto.SimCommand) -> None:
        self.simulator.apply_command(cmd)

    async def messages(self) -> AsyncIterator[proto.Message]:
        start = time.monotonic()
        for event in self.simulator.events():
            if isinstance(event, dict):
                continue
            ts = getattr(event, "timestamp", None)
            if self.pace > 0 and ts is not None:
                due = start + ts / self.pace
                delay = due - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    await asyncio.sleep(0)
            else:
                await asyncio.sleep(0)
            yield event


class RecordingSource:
    """Replays a recording; rate is a speed multiplier (0 = unpaced)."""

    supports_commands = False

    def __init__(self, path: str, rate: float = 1.0):
        self.path = path
        self.rate = rate

    def apply_command(self, cmd: proto.SimCommand) -> None:
        raise CommandRejected("a recording source does not accept commands")

    async def messages(self) -> AsyncIterator[proto.Message]:
        start = time.monotonic()
        first_ts: Optional[float] = None
        for msg in read_messages(self.path):
            ts = getattr(msg, "timestamp", None)
            if ts is not None and self.rate > 0:
                if first_ts is None:
                    first_ts = ts
                due = start + (ts - first_ts) / self.rate
                delay = due - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    await asyncio.sleep(0)
            else:
                await asyncio.sleep(0)
            yield msg


class ExternalTcpSource:
    """Relays the stream of an upstream server; commands are forwarded."""

    supports_commands = True

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._writer: Optional[asyncio.StreamWriter] = None

    def apply_command(self, cmd: proto.SimCommand) -> None:
        if self._writer is None:
            raise CommandRejected("upstream connection is not established")
        self._writer.write(proto.encode(cmd))

    async def messages(self) -> AsyncIterator[proto.Message]:
        reader, writer = await asyncio.open_connection(self.host, self.port)
        self._writer = writer
        writer.write(proto.encode(proto.Hello(client_name="needleguide-relay")))
        writer.write(proto.encode(proto.Subscribe(all_bodies=True)))
        await writer.drain()
        decoder = proto.StreamDecoder()
        try:
            while True:
                chunk = await reader.read(65536)
                if not chunk:
                    return
                decoder.feed(chunk)
                for msg in decoder:
                    if isinstance(msg, (proto.Heartbeat, proto.Hello, proto.UnknownMessage)):
                        continue
                    yield msg
        finally:
            self._writer = None
            writer.close()


def source_from_config(cfg: ServerConfig) -> TrackingSource:
    kind, _, rest = cfg.source.partition(":")
    if kind == "simulator":
        scenario = make_scenario(rest or "insertion", seed=cfg.seed)
        noise = NoiseModel(
            position_sigma=cfg.noise_sigma_mm * 1e-3,
            orientation_sigma=math.radians(cfg.noise_angle_deg),
            seed=cfg.seed,
        )
        sim = Simulator(scenario, noise=noise, rate_hz=cfg.rate_hz)
        return SimulatorSource(sim, pace=cfg.sim_pace)
    if kind == "recording":
        return RecordingSource(rest, rate=cfg.replay_rate)
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        return ExternalTcpSource(host, int(port))
    raise ValueError(f"unknown source {cfg.source!r}")


# --------------------------------------------------------------------------
# per-client connection state

class _Client:
    _ids = itertools.count(1)

    def __init__(self, kind: str):
        self.id = next(self._ids)
        self.kind = kind
        self.name = f"{kind}-{self.id}"
        self.subscription: Optional[object] = None   # None | "all" | frozenset[int]
        self.reliable: deque[bytes] = deque()
        self.video_latest: dict[int, bytes] = {}
        self.wake = asyncio.Event()
        self.closing = False

    def wants_body(self, body_id: int) -> bool:
        if self.subscription is None:
            return False
        return self.subscription == "all" or body_id in self.subscription

    def queue(self, data: bytes) -> None:
        self.reliable.append(data)
        self.wake.set()

    def queue_video(self, stream_id: int, data: bytes) -> None:
        self.video_latest[stream_id] = data
        self.wake.set()


class TrackingServer:
    def __init__(self, config: ServerConfig, source: Optional[TrackingSource] = None):
        self.config = config.validate()
        self.source = source if source is not None else source_from_config(config)
        self.buffers: dict[int, PoseBuffer] = {}
        self.calibration = CalibrationSet()
        self.active_plan: Optional[TrajectoryPlan] = None
        self.camera_pose_fixed: Optional[Pose] = None
        self.clients: set[_Client] = set()
        self.counters = {
            "frames_in": 0,
            "frames_out": 0,
            "video_in": 0,
            "video_dropped": 0,
            "sequence_rejects": 0,
            "guidance_sent": 0,
            "clients_disconnected_on_error": 0,
            "handedness_roundtrip_max_err": 0.0,
        }
        self.guidance_latency_s: deque[float] = deque(maxlen=LATENCY_WINDOW)
        self._last_seq: dict[int, int] = {}
        self._last_recv_monotonic = 0.0
        self._recv_monotone = True
        self._last_needle_wall: Optional[float] = None
        self._last_guidance: Optional[GuidanceState] = None
        self._lost_announced = False
        self._source_done = asyncio.Event()
        self._tasks: list[asyncio.Task] = []
        self._tcp_server: Optional[asyncio.AbstractServer] = None
        self._ws_server = None
        self.tcp_port: Optional[int] = None
        self.ws_port: Optional[int] = None
        self.debug_echo = False
        self.heartbeat_interval = HEARTBEAT_INTERVAL_S

    # ---- lifecycle

    async def start(self) -> None:
        cfg = self.config
        self._tcp_server = await asyncio.start_server(
            self._handle_tcp, cfg.tcp_host, cfg.tcp_port
        )
        self.tcp_port = self._tcp_server.sockets[0].getsockname()[1]
        self._ws_server = await ws_serve(self._handle_ws, cfg.ws_host, cfg.ws_port)
        ws_socks = self._ws_server.sockets or []
        self.ws_port = ws_socks[0].getsockname()[1] if ws_socks else cfg.ws_port
        self._tasks.append(asyncio.create_task(self._pump_source()))
        self._tasks.append(asyncio.create_task(self._heartbeat_loop()))
        log.info("serving tcp on %s:%s, ws on %s:%s",
                 cfg.tcp_host, self.tcp_port, cfg.ws_host, self.ws_port)

    async def stop(self) -> None:
        for t in self._tasks:
            t.cancel()
        for t in self._tasks:
            try:
                await t
            except (asyncio.CancelledError, Exception):
                pass
        self._tasks.clear()
        for client in list(self.clients):
            client.closing = True
            client.wake.set()
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._ws_server is not None:
            self._ws_server.close()
            await self._ws_server.wait_closed()

    async def wait_source_done(self) -> None:
        await self._source_done.wait()

    async def serve_forever(self) -> None:
        await self.start()
        try:
            await asyncio.Event().wait()
        finally:
            await self.stop()

    # ---- broadcasting

    def _broadcast(self, data: bytes, body_id: Optional[int] = None) -> None:
        for client in self.clients:
            if client.closing:
                continue
            if body_id is not None and not client.wants_body(body_id):
                continue
            client.queue(data)

    def _broadcast_video(self, stream_id: int, data: bytes) -> None:
        for client in self.clients:
            if client.closing or client.subscription is None:
                continue
            if stream_id in client.video_latest:
                self.counters["video_dropped"] += 1
            client.queue_video(stream_id, data)

    def _send(self, client: _Client, msg: proto.Message) -> None:
        client.queue(proto.encode(msg))

    # ---- source pipeline

    async def _pump_source(self) -> None:
        try:
            async for msg in self.source.messages():
                self._process_source_message(msg)
        except asyncio.CancelledError:
            raise
        except Exception:
            log.exception("source failed")
        finally:
            self._source_done.set()

    def _process_source_message(self, msg: proto.Message) -> None:
        if isinstance(msg, proto.RigidBodyFrame):
            self._ingest_frame(msg)
        elif isinstance(msg, proto.VideoFrame):
            self.counters["video_in"] += 1
            self._broadcast_video(msg.stream_id, proto.encode(msg))
        elif isinstance(msg, proto.PlanUpdate):
            converted = self._convert_plan(msg) if self.config.handedness_conversion else msg
            try:
                self._store_plan(converted)
            except InvalidPlan:
                log.warning("source emitted an invalid plan; ignored")
                return
            self._broadcast(proto.encode(converted))
        elif isinstance(msg, proto.CalibrationResult):
            converted = (
                self._convert_calibration(msg)
                if self.config.handedness_conversion
                else msg
            )
            self._store_calibration(converted)
            self._broadcast(proto.encode(converted))
        # source heartbeats and unknown types are not relayed

    def _ingest_frame(self, frame: proto.RigidBodyFrame) -> None:
        ingest_t = time.perf_counter()
        now = time.monotonic()
        if now < self._last_recv_monotonic:
            self._recv_monotone = False
        self._last_recv_monotonic = now

        last = self._last_seq.get(frame.body_id)
        if last is not None and frame.sequence <= last:
            self.counters["sequence_rejects"] += 1
            return
        self._last_seq[frame.body_id] = frame.sequence

        if self.config.handedness_conversion:
            if self.debug_echo:
                twice = convert_handedness(convert_handedness(frame.pose()))
                err = max(
                    (twice.position - frame.position).norm(),
                    float(abs(twice.orientation.as_array()
                              - frame.orientation.as_array()).max()),
                )
                self.counters["handedness_roundtrip_max_err"] = max(
                    self.counters["handedness_roundtrip_max_err"], err
                )
            frame = proto.RigidBodyFrame(
                body_id=frame.body_id,
                sequence=frame.sequence,
                timestamp=frame.timestamp,
                position=convert_handedness_point(frame.position),
                orientation=convert_handedness_quat(frame.orientation),
                valid=frame.valid,
            )

        self.counters["frames_in"] += 1
        buffer = self.buffers.get(frame.body_id)
        if buffer is None:
            buffer = self.buffers[frame.body_id] = PoseBuffer(frame.body_id)
        buffer.push(frame.pose())

        self._broadcast(proto.encode(frame), body_id=frame.body_id)
        self.counters["frames_out"] += 1

        if frame.body_id == BODY_NEEDLE:
            self._last_needle_wall = time.monotonic()
            self._lost_announced = False
            if self.active_plan is not None and self.calibration.needle is not None:
                state = compute_guidance(
                    self.active_plan,
                    apply_needle_calibration(frame.pose(), self.calibration.needle),
                    magnification=self.config.magnification,
                    on_track_radius=self.config.on_track_radius_mm * 1e-3,
                    on_track_angle_deg=self.config.on_track_angle_deg,
                )
                self._last_guidance = state
                self._broadcast(proto.encode(proto.Guidance(state=state)))
                self.counters["guidance_sent"] += 1
                self.guidance_latency_s.append(time.perf_counter() - ingest_t)

    # ---- handedness conversion of non-frame payloads

    @staticmethod
    def _convert_plan(msg: proto.PlanUpdate) -> proto.PlanUpdate:
        return proto.PlanUpdate(
            plan_id=msg.plan_id,
            entry=convert_handedness_point(msg.entry),
            target=convert_handedness_point(msg.target),
        )

    @staticmethod
    def _convert_calibration(msg: proto.CalibrationResult) -> proto.CalibrationResult:
        if msg.kind in (proto.CalibrationKind.TIP, proto.CalibrationKind.AXIS):
            return proto.CalibrationResult(
                kind=msg.kind,
                vector=convert_handedness_point(msg.vector),
                rms=msg.rms,
            )
        converted = convert_handedness(msg.transform)
        if msg.kind == proto.CalibrationKind.HAND_EYE:
            return proto.CalibrationResult(
                kind=msg.kind,
                transform=converted,
                rotation_residual=msg.rotation_residual,
                translation_residual=msg.translation_residual,
            )
        return proto.CalibrationResult(
            kind=msg.kind,
            transform=converted,
            pixel_spacing=msg.pixel_spacing,
            rms=msg.rms,
        )

    @staticmethod
    def _convert_command(cmd: proto.SimCommand) -> proto.SimCommand:
        if cmd.kind == proto.SimCommandKind.NUDGE_TRANSLATE:
            return proto.SimCommand(kind=cmd.kind, delta=convert_handedness_point(cmd.delta))
        if cmd.kind == proto.SimCommandKind.NUDGE_ROTATE:
            # rotation vectors are axial: mirror flips the in-plane components
            return proto.SimCommand(
                kind=cmd.kind, delta=Vec3(-cmd.delta.x, -cmd.delta.y, cmd.delta.z)
            )
        return cmd

    # ---- session state updates

    def _store_plan(self, msg: proto.PlanUpdate) -> None:
        self.active_plan = msg.to_plan()   # raises InvalidPlan on degenerate input

    def run_calibration_routine(self, kind: str, recording_path: str) -> proto.Message:
        """Solve a calibration from recorded samples, store and broadcast it.

        Solver failures leave the calibration set untouched and go out as an
        Error broadcast instead. Returns whichever message was broadcast.
        """
        from .calibration import (
            DegenerateInput, DegenerateMotion, PoorConditioning, ScaleUnobservable,
        )
        from .routines import routine_result_message

        codes = {
            DegenerateInput: proto.ErrorCode.DEGENERATE_INPUT,
            PoorConditioning: proto.ErrorCode.POOR_CONDITIONING,
            DegenerateMotion: proto.ErrorCode.DEGENERATE_MOTION,
            ScaleUnobservable: proto.ErrorCode.SCALE_UNOBSERVABLE,
        }
        try:
            result = routine_result_message(kind, recording_path)
        except tuple(codes) as e:
            msg = proto.ErrorMessage(code=codes[type(e)], text=str(e))
            self._broadcast(proto.encode(msg))
            return msg
        except ValueError as e:
            msg = proto.ErrorMessage(code=proto.ErrorCode.INTERNAL, text=str(e))
            self._broadcast(proto.encode(msg))
            return msg
        self._store_calibration(result)
        self._broadcast(proto.encode(result))
        return result

    def _store_calibration(self, msg: proto.CalibrationResult) -> None:
        calib = self.calibration
        if msg.kind == proto.CalibrationKind.TIP:
            prev = calib.needle
            calib.needle = NeedleCalibration(
                tip_offset=msg.vector,
                axis_dir=prev.axis_dir if prev else Vec3(0.0, 0.0, 1.0),
                tip_rms=msg.rms,
                axis_rms=prev.axis_rms if prev else 0.0,
            )
        elif msg.kind == proto.CalibrationKind.AXIS:
            prev = calib.needle
            calib.needle = NeedleCalibration(
                tip_offset=prev.tip_offset if prev else Vec3.zero(),
                axis_dir=msg.vector,
                tip_rms=prev.tip_rms if prev else 0.0,
                axis_rms=msg.rms,
            )
        elif msg.kind == proto.CalibrationKind.HAND_EYE:
            calib.hand_eye = HandEyeFit(
                x=msg.transform,
                rotation_residual=msg.rotation_residual,
                translation_residual=msg.translation_residual,
            )
            # a successful hand-eye starts a new calibration cycle and pins
            # the tracker origin (the cameras) in the display frame
            self.camera_pose_fixed = invert(msg.transform)
        else:
            calib.us_plane = UsPlaneCalibration(
                image_to_probe=msg.transform,
                pixel_spacing=msg.pixel_spacing,
                rms_residual=msg.rms,
            )

    # ---- client message handling

    def _handle_client_message(self, client: _Client, msg: proto.Message) -> None:
        if isinstance(msg, proto.Hello):
            client.name = msg.client_name or client.name
            self._send(client, proto.Hello(client_name="needleguide-server"))
        elif isinstance(msg, proto.Subscribe):
            client.subscription = "all" if msg.all_bodies else frozenset(msg.body_ids)
            self._sync_session_state(client)
        elif isinstance(msg, proto.PlanUpdate):
            try:
                self._store_plan(msg)
            except InvalidPlan as e:
                self._send(client, proto.ErrorMessage(
                    code=proto.ErrorCode.INVALID_PLAN, text=str(e)
                ))
                return
            self._broadcast(proto.encode(msg))
        elif isinstance(msg, proto.SimCommand):
            cmd = (
                self._convert_command(msg)
                if self.config.handedness_conversion
                else msg
            )
            try:
                if not self.source.supports_commands:
                    raise CommandRejected("the active source does not accept commands")
                self.source.apply_command(cmd)
            except CommandRejected as e:
                self._send(client, proto.ErrorMessage(
                    code=proto.ErrorCode.COMMAND_REJECTED, text=str(e)
                ))
        elif isinstance(msg, proto.CalibrationResult):
            # operator-supplied calibration, already in the display frame
            self._store_calibration(msg)
            self._broadcast(proto.encode(msg))
        # client heartbeats and unknown types need no reply

    def _sync_session_state(self, client: _Client) -> None:
        """Late joiners get the active plan and calibrations immediately."""
        if self.active_plan is not None:
            self._send(client, proto.PlanUpdate.from_plan(self.active_plan))
        calib = self.calibration
        if calib.needle is not None:
            self._send(client, proto.CalibrationResult(
                kind=proto.CalibrationKind.TIP,
                vector=calib.needle.tip_offset,
                rms=calib.needle.tip_rms,
            ))
            self._send(client, proto.CalibrationResult(
                kind=proto.CalibrationKind.AXIS,
                vector=calib.needle.axis_dir,
                rms=calib.needle.axis_rms,
            ))
        if calib.hand_eye is not None:
            self._send(client, proto.CalibrationResult(
                kind=proto.CalibrationKind.HAND_EYE,
                transform=calib.hand_eye.x,
                rotation_residual=calib.hand_eye.rotation_residual,
                translation_residual=calib.hand_eye.translation_residual,
            ))
        if calib.us_plane is not None:
            self._send(client, proto.CalibrationResult(
                kind=proto.CalibrationKind.US_PLANE,
                transform=calib.us_plane.image_to_probe,
                pixel_spacing=calib.us_plane.pixel_spacing,
                rms=calib.us_plane.rms_residual,
            ))

    # ---- heartbeat and staleness

    async def _heartbeat_loop(self) -> None:
        while True:
            await asyncio.sleep(self.heartbeat_interval)
            self._broadcast(proto.encode(proto.Heartbeat(timestamp=time.time())))
            self._check_staleness()

    def _check_staleness(self) -> None:
        if (
            self._last_guidance is None
            or self._last_needle_wall is None
            or self._lost_announced
        ):
            return
        if time.monotonic() - self._last_needle_wall > self.config.staleness_lost_s:
            lost = GuidanceState(
                progress=self._last_guidance.progress,
                lateral_offset=self._last_guidance.lateral_offset,
                lateral_magnitude=self._last_guidance.lateral_magnitude,
                magnified_offset=self._last_guidance.magnified_offset,
                angle_offset_deg=self._last_guidance.angle_offset_deg,
                triangle=self._last_guidance.triangle,
                status=GuidanceStatus.LOST,
                plan_id=self._last_guidance.plan_id,
                timestamp=self._last_guidance.timestamp,
            )
            self._broadcast(proto.encode(proto.Guidance(state=lost)))
            self._lost_announced = True

    # ---- TCP transport

    async def _handle_tcp(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        client = _Client("tcp")
        self.clients.add(client)
        writer_task = asyncio.create_task(self._tcp_writer(client, writer))
        decoder = proto.StreamDecoder()
        try:
            while not client.closing:
                chunk = await reader.read(65536)
                if not chunk:
                    break
                try:
                    decoder.feed(chunk)
                    for msg in decoder:
                        self._handle_client_message(client, msg)
                except proto.ProtocolError as e:
                    self.counters["clients_disconnected_on_error"] += 1
                    self._send(client, proto.ErrorMessage(
                        code=proto.ErrorCode.MALFORMED_MESSAGE, text=str(e)
                    ))
                    break
        except (ConnectionResetError, BrokenPipeError):
            pass
        finally:
            client.closing = True
            client.wake.set()
            await writer_task
            self.clients.discard(client)
            writer.close()
            try:
                await writer.wait_closed()
            except Exception:
                pass

    async def _tcp_writer(self, client: _Client, writer: asyncio.StreamWriter) -> None:
        # flush in bounded batches and yield between them: dumping an
        # unbounded burst into the socket can zero the peer's receive window
        # faster than it can drain, which collapses throughput
        try:
            while True:
                await client.wake.wait()
                client.wake.clear()
                while client.reliable or client.video_latest:
                    batched = 0
                    while client.reliable and batched < WRITE_BATCH_BYTES:
                        data = client.reliable.popleft()
                        writer.write(data)
                        batched += len(data)
                    for stream_id in list(client.video_latest):
                        writer.write(client.video_latest.pop(stream_id))
                    await writer.drain()
                    await asyncio.sleep(0)
                if client.closing:
                    return
        except (ConnectionResetError, BrokenPipeError, ConnectionAbortedError):
            client.closing = True

    # ---- WebSocket transport

    async def _handle_ws(self, ws) -> None:
        client = _Client("ws")
        self.clients.add(client)
        writer_task = asyncio.create_task(self._ws_writer(client, ws))
        decoder = proto.StreamDecoder()
        try:
            async for raw in ws:
                if client.closing:
                    break
                if isinstance(raw, str):
                    raw = raw.encode("utf-8")   # text frames are not protocol data
                try:
                    decoder.feed(raw)
                    for msg in decoder:
                        self._handle_client_message(client, msg)
                except proto.ProtocolError as e:
                    self.counters["clients_disconnected_on_error"] += 1
                    self._send(client, proto.ErrorMessage(
                        code=proto.ErrorCode.MALFORMED_MESSAGE, text=str(e)
                    ))
                    break
        except ConnectionClosed:
            pass
        finally:
            client.closing = True
            client.wake.set()
            await writer_task
            self.clients.discard(client)

    async def _ws_writer(self, client: _Client, ws) -> None:
        try:
            while True:
                await client.wake.wait()
                client.wake.clear()
                while client.reliable:
                    await ws.send(client.reliable.popleft())
                for stream_id in list(client.video_latest):
                    await ws.send(client.video_latest.pop(stream_id))
                if client.closing:
                    await ws.close()
                    return
        except ConnectionClosed:
            client.closing = True

    # ---- diagnostics

    def stats(self) -> dict:
        lat = sorted(self.guidance_latency_s)

        def pct(p: float) -> float:
            if not lat:
                return 0.0
            return lat[min(len(lat) - 1, int(p * len(lat)))] * 1e3

        return {
            **self.counters,
            "clients": len(self.clients),
            "receive_time_monotone": self._recv_monotone,
            "guidance_latency_ms": {
                "p50": pct(0.50), "p90": pct(0.90), "p99": pct(0.99),
                "count": len(lat),
            },
            "plan_active": self.active_plan is not None,
            "camera_pose_fixed": self.camera_pose_fixed is not None,
        }


def run(config: ServerConfig) -> None:
    """Serve until interrupted."""

    async def _main():
        server = TrackingServer(config)
        await server.start()
        try:
            await server.wait_source_done()
            # keep serving live clients after a finite source drains
            await asyncio.Event().wait()
        except asyncio.CancelledError:
            pass
        finally:
            await server.stop()

    try:
        asyncio.run(_main())
    except KeyboardInterrupt:
        pass
