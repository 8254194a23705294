/**
 * Binary wire codec, mirroring PROTOCOL.md byte for byte.
 *
 * Little-endian throughout; strings are u16-length-prefixed UTF-8;
 * quaternions are scalar-first [w, x, y, z]. One encoded message travels
 * per binary WebSocket frame. The golden corpus in
 * golden/protocol_vectors.jsonl pins this codec against the server's.
 */

export const MAGIC0 = 0x4e; // 'N'
export const MAGIC1 = 0x54; // 'T'
export const PROTOCOL_VERSION = 1;
export const HEADER_SIZE = 8;
export const MAX_PAYLOAD = 16 * 1024 * 1024;

export const MsgType = {
  HELLO: 0x01,
  SUBSCRIBE: 0x02,
  RIGID_BODY_FRAME: 0x03,
  VIDEO_FRAME: 0x04,
  PLAN_UPDATE: 0x05,
  GUIDANCE: 0x06,
  CALIBRATION_RESULT: 0x07,
  SIM_COMMAND: 0x08,
  ERROR: 0x09,
  HEARTBEAT: 0x0a,
} as const;

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // w, x, y, z

export interface Hello {
  type: "hello";
  protocol_version: number;
  client_name: string;
}

export interface Subscribe {
  type: "subscribe";
  all: boolean;
  body_ids: number[];
}

export interface RigidBodyFrame {
  type: "rigid_body_frame";
  body_id: number;
  sequence: number;
  timestamp: number;
  position: Vec3;
  quaternion: Quat;
  valid: boolean;
}

export interface VideoFrame {
  type: "video_frame";
  stream_id: number;
  sequence: number;
  timestamp: number;
  width: number;
  height: number;
  format: "gray8" | number;
  data: Uint8Array;
}

export interface PlanUpdate {
  type: "plan_update";
  plan_id: number;
  entry: Vec3;
  target: Vec3;
}

export type GuidanceStatus = "on_track" | "deviating" | "lost";

export interface Guidance {
  type: "guidance";
  plan_id: number;
  timestamp: number;
  status: GuidanceStatus;
  progress: number;
  lateral_offset: Vec3;
  lateral_magnitude: number;
  magnified_offset: Vec3;
  angle_offset_deg: number;
  triangle: [Vec3, Vec3, Vec3];
}

export type CalibrationResult =
  | { type: "calibration_result"; kind: "tip"; tip_offset: Vec3; rms: number }
  | { type: "calibration_result"; kind: "axis"; axis_dir: Vec3; rms: number }
  | {
      type: "calibration_result";
      kind: "hand_eye";
      position: Vec3;
      quaternion: Quat;
      rotation_residual: number;
      translation_residual: number;
    }
  | {
      type: "calibration_result";
      kind: "us_plane";
      position: Vec3;
      quaternion: Quat;
      pixel_spacing: number;
      rms: number;
    };

export type SimCommand =
  | { type: "sim_command"; kind: "nudge_translate"; delta: Vec3 }
  | { type: "sim_command"; kind: "nudge_rotate"; delta: Vec3 }
  | {
      type: "sim_command";
      kind: "set_noise";
      position_sigma: number;
      orientation_sigma: number;
    }
  | { type: "sim_command"; kind: "select_scenario"; scenario: string };

export interface ErrorMessage {
  type: "error";
  code: number;
  text: string;
}

export interface Heartbeat {
  type: "heartbeat";
  timestamp: number;
}

export interface UnknownMessage {
  type: "unknown";
  msg_type: number;
  payload: Uint8Array;
}

export type Message =
  | Hello
  | Subscribe
  | RigidBodyFrame
  | VideoFrame
  | PlanUpdate
  | Guidance
  | CalibrationResult
  | SimCommand
  | ErrorMessage
  | Heartbeat
  | UnknownMessage;

export class ProtocolError extends Error {
  constructor(message: string, public readonly offset: number) {
    super(`${message} (at byte offset ${offset})`);
  }
}

const STATUS_NAMES: GuidanceStatus[] = ["on_track", "deviating", "lost"];
const CALIB_NAMES = { 1: "tip", 2: "axis", 3: "hand_eye", 4: "us_plane" } as const;
const COMMAND_NAMES = {
  1: "nudge_translate",
  2: "nudge_rotate",
  3: "set_noise",
  4: "select_scenario",
} as const;

const textDecoder = new TextDecoder("utf-8", { fatal: true });
const textEncoder = new TextEncoder();

class Reader {
  private pos = 0;
  private view: DataView;

  constructor(private buf: Uint8Array, private base: number) {
    this.view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  }

  private need(n: number): void {
    if (this.pos + n > this.buf.length) {
      throw new ProtocolError("payload truncated", this.base + this.pos);
    }
  }

  u8(): number {
    this.need(1);
    return this.view.getUint8(this.pos++);
  }

  u16(): number {
    this.need(2);
    const v = this.view.getUint16(this.pos, true);
    this.pos += 2;
    return v;
  }

  u32(): number {
    this.need(4);
    const v = this.view.getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }

  f64(): number {
    this.need(8);
    const v = this.view.getFloat64(this.pos, true);
    this.pos += 8;
    return v;
  }

  vec3(): Vec3 {
    return [this.f64(), this.f64(), this.f64()];
  }

  quat(): Quat {
    return [this.f64(), this.f64(), this.f64(), this.f64()];
  }

  bytes(n: number): Uint8Array {
    this.need(n);
    const out = this.buf.slice(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  str(): string {
    const n = this.u16();
    try {
      return textDecoder.decode(this.bytes(n));
    } catch {
      throw new ProtocolError("invalid utf-8 in string", this.base + this.pos);
    }
  }

  done(): void {
    if (this.pos !== this.buf.length) {
      throw new ProtocolError(
        `${this.buf.length - this.pos} trailing payload bytes`,
        this.base + this.pos,
      );
    }
  }
}

function decodePayload(msgType: number, payload: Uint8Array, base: number): Message {
  const r = new Reader(payload, base);
  switch (msgType) {
    case MsgType.HELLO: {
      const version = r.u8();
      const name = r.str();
      r.done();
      return { type: "hello", protocol_version: version, client_name: name };
    }
    case MsgType.SUBSCRIBE: {
      const all = r.u8();
      const count = r.u16();
      const ids: number[] = [];
      for (let i = 0; i < count; i++) ids.push(r.u16());
      r.done();
      if (all !== 0 && all !== 1) {
        throw new ProtocolError(`subscribe flag must be 0 or 1, got ${all}`, base);
      }
      if (all === 1 && ids.length > 0) {
        throw new ProtocolError("subscribe-to-all must not list body ids", base);
      }
      return { type: "subscribe", all: all === 1, body_ids: ids };
    }
    case MsgType.RIGID_BODY_FRAME: {
      const body_id = r.u16();
      const sequence = r.u32();
      const timestamp = r.f64();
      const position = r.vec3();
      const quaternion = r.quat();
      const valid = r.u8() !== 0;
      r.done();
      return { type: "rigid_body_frame", body_id, sequence, timestamp, position, quaternion, valid };
    }
    case MsgType.VIDEO_FRAME: {
      const stream_id = r.u16();
      const sequence = r.u32();
      const timestamp = r.f64();
      const width = r.u16();
      const height = r.u16();
      const fmt = r.u8();
      const n = r.u32();
      const data = r.bytes(n);
      r.done();
      if (fmt === 1 && n !== width * height) {
        throw new ProtocolError(`gray8 frame ${width}x${height} carries ${n} bytes`, base);
      }
      return {
        type: "video_frame", stream_id, sequence, timestamp, width, height,
        format: fmt === 1 ? "gray8" : fmt, data,
      };
    }
    case MsgType.PLAN_UPDATE: {
      const plan_id = r.u32();
      const entry = r.vec3();
      const target = r.vec3();
      r.done();
      return { type: "plan_update", plan_id, entry, target };
    }
    case MsgType.GUIDANCE: {
      const plan_id = r.u32();
      const timestamp = r.f64();
      const statusCode = r.u8();
      const progress = r.f64();
      const lateral_offset = r.vec3();
      const lateral_magnitude = r.f64();
      const magnified_offset = r.vec3();
      const angle_offset_deg = r.f64();
      const triangle: [Vec3, Vec3, Vec3] = [r.vec3(), r.vec3(), r.vec3()];
      r.done();
      const status = STATUS_NAMES[statusCode];
      if (status === undefined) {
        throw new ProtocolError(`unknown guidance status ${statusCode}`, base);
      }
      return {
        type: "guidance", plan_id, timestamp, status, progress, lateral_offset,
        lateral_magnitude, magnified_offset, angle_offset_deg, triangle,
      };
    }
    case MsgType.CALIBRATION_RESULT: {
      const kindCode = r.u8();
      const kind = (CALIB_NAMES as Record<number, string>)[kindCode];
      if (kind === undefined) {
        throw new ProtocolError(`unknown calibration kind ${kindCode}`, base);
      }
      if (kind === "tip" || kind === "axis") {
        const vec = r.vec3();
        const rms = r.f64();
        r.done();
        return kind === "tip"
          ? { type: "calibration_result", kind, tip_offset: vec, rms }
          : { type: "calibration_result", kind, axis_dir: vec, rms };
      }
      const position = r.vec3();
      const quaternion = r.quat();
      const a = r.f64();
      const b = r.f64();
      r.done();
      if (kind === "hand_eye") {
        return {
          type: "calibration_result", kind, position, quaternion,
          rotation_residual: a, translation_residual: b,
        };
      }
      return {
        type: "calibration_result", kind: "us_plane", position, quaternion,
        pixel_spacing: a, rms: b,
      };
    }
    case MsgType.SIM_COMMAND: {
      const kindCode = r.u8();
      const kind = (COMMAND_NAMES as Record<number, string>)[kindCode];
      if (kind === undefined) {
        throw new ProtocolError(`unknown sim command kind ${kindCode}`, base);
      }
      if (kind === "nudge_translate" || kind === "nudge_rotate") {
        const delta = r.vec3();
        r.done();
        return { type: "sim_command", kind, delta } as SimCommand;
      }
      if (kind === "set_noise") {
        const position_sigma = r.f64();
        const orientation_sigma = r.f64();
        r.done();
        return { type: "sim_command", kind, position_sigma, orientation_sigma };
      }
      const scenario = r.str();
      r.done();
      return { type: "sim_command", kind: "select_scenario", scenario };
    }
    case MsgType.ERROR: {
      const code = r.u16();
      const text = r.str();
      r.done();
      return { type: "error", code, text };
    }
    case MsgType.HEARTBEAT: {
      const timestamp = r.f64();
      r.done();
      return { type: "heartbeat", timestamp };
    }
    default:
      return { type: "unknown", msg_type: msgType, payload };
  }
}

/** Decode the first message; null when more bytes are needed. */
export function decodeOne(
  data: Uint8Array,
  baseOffset = 0,
): { message: Message; consumed: number } | null {
  if (data.length >= 1 && data[0] !== MAGIC0) {
    throw new ProtocolError("bad magic bytes", baseOffset);
  }
  if (data.length >= 2 && data[1] !== MAGIC1) {
    throw new ProtocolError("bad magic bytes", baseOffset);
  }
  if (data.length < HEADER_SIZE) return null;
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const version = view.getUint8(2);
  if (version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`protocol version ${version} not supported`, baseOffset + 2);
  }
  const msgType = view.getUint8(3);
  const length = view.getUint32(4, true);
  if (length > MAX_PAYLOAD) {
    throw new ProtocolError(`payload of ${length} bytes exceeds 16 MiB`, baseOffset + 4);
  }
  const total = HEADER_SIZE + length;
  if (data.length < total) return null;
  const message = decodePayload(
    msgType, data.subarray(HEADER_SIZE, total), baseOffset + HEADER_SIZE,
  );
  return { message, consumed: total };
}

/** Incremental decoder for one connection; a framing error poisons it. */
export class StreamDecoder {
  private buf = new Uint8Array(0);
  bytesConsumed = 0;

  feed(chunk: Uint8Array): Message[] {
    const joined = new Uint8Array(this.buf.length + chunk.length);
    joined.set(this.buf);
    joined.set(chunk, this.buf.length);
    this.buf = joined;
    const out: Message[] = [];
    for (;;) {
      const res = decodeOne(this.buf, this.bytesConsumed);
      if (res === null) return out;
      out.push(res.message);
      this.buf = this.buf.subarray(res.consumed);
      this.bytesConsumed += res.consumed;
    }
  }
}

// ---------------------------------------------------------------------------
// encoding

class Writer {
  private parts: number[] = [];

  u8(v: number): this {
    this.parts.push(v & 0xff);
    return this;
  }

  u16(v: number): this {
    this.parts.push(v & 0xff, (v >>> 8) & 0xff);
    return this;
  }

  u32(v: number): this {
    this.parts.push(v & 0xff, (v >>> 8) & 0xff, (v >>> 16) & 0xff, (v >>> 24) & 0xff);
    return this;
  }

  f64(v: number): this {
    if (!Number.isFinite(v)) throw new Error(`non-finite float ${v} cannot be encoded`);
    const scratch = new DataView(new ArrayBuffer(8));
    scratch.setFloat64(0, v, true);
    for (let i = 0; i < 8; i++) this.parts.push(scratch.getUint8(i));
    return this;
  }

  vec3(v: Vec3): this {
    return this.f64(v[0]).f64(v[1]).f64(v[2]);
  }

  quat(q: Quat): this {
    return this.f64(q[0]).f64(q[1]).f64(q[2]).f64(q[3]);
  }

  bytes(data: Uint8Array): this {
    for (const b of data) this.parts.push(b);
    return this;
  }

  str(s: string): this {
    const raw = textEncoder.encode(s);
    if (raw.length > 0xffff) throw new Error("string longer than 65535 bytes");
    return this.u16(raw.length).bytes(raw);
  }

  finish(): Uint8Array {
    return Uint8Array.from(this.parts);
  }
}

const CALIB_CODES = { tip: 1, axis: 2, hand_eye: 3, us_plane: 4 } as const;
const COMMAND_CODES = {
  nudge_translate: 1,
  nudge_rotate: 2,
  set_noise: 3,
  select_scenario: 4,
} as const;

function encodePayload(m: Message): { msgType: number; payload: Uint8Array } {
  const w = new Writer();
  switch (m.type) {
    case "hello":
      return {
        msgType: MsgType.HELLO,
        payload: w.u8(m.protocol_version).str(m.client_name).finish(),
      };
    case "subscribe": {
      if (m.all && m.body_ids.length > 0) {
        throw new Error("subscribe-to-all must not list body ids");
      }
      w.u8(m.all ? 1 : 0).u16(m.body_ids.length);
      for (const id of m.body_ids) w.u16(id);
      return { msgType: MsgType.SUBSCRIBE, payload: w.finish() };
    }
    case "rigid_body_frame":
      return {
        msgType: MsgType.RIGID_BODY_FRAME,
        payload: w
          .u16(m.body_id).u32(m.sequence).f64(m.timestamp)
          .vec3(m.position).quat(m.quaternion).u8(m.valid ? 1 : 0)
          .finish(),
      };
    case "video_frame": {
      const fmt = m.format === "gray8" ? 1 : (m.format as number);
      if (fmt === 1 && m.data.length !== m.width * m.height) {
        throw new Error("gray8 frame size mismatch");
      }
      return {
        msgType: MsgType.VIDEO_FRAME,
        payload: w
          .u16(m.stream_id).u32(m.sequence).f64(m.timestamp)
          .u16(m.width).u16(m.height).u8(fmt).u32(m.data.length).bytes(m.data)
          .finish(),
      };
    }
    case "plan_update":
      return {
        msgType: MsgType.PLAN_UPDATE,
        payload: w.u32(m.plan_id).vec3(m.entry).vec3(m.target).finish(),
      };
    case "guidance": {
      const status = STATUS_NAMES.indexOf(m.status);
      if (status < 0) throw new Error(`unknown guidance status ${m.status}`);
      w.u32(m.plan_id).f64(m.timestamp).u8(status).f64(m.progress);
      w.vec3(m.lateral_offset).f64(m.lateral_magnitude).vec3(m.magnified_offset);
      w.f64(m.angle_offset_deg);
      for (const v of m.triangle) w.vec3(v);
      return { msgType: MsgType.GUIDANCE, payload: w.finish() };
    }
    case "calibration_result": {
      w.u8(CALIB_CODES[m.kind]);
      if (m.kind === "tip") w.vec3(m.tip_offset).f64(m.rms);
      else if (m.kind === "axis") w.vec3(m.axis_dir).f64(m.rms);
      else if (m.kind === "hand_eye") {
        w.vec3(m.position).quat(m.quaternion)
          .f64(m.rotation_residual).f64(m.translation_residual);
      } else {
        w.vec3(m.position).quat(m.quaternion).f64(m.pixel_spacing).f64(m.rms);
      }
      return { msgType: MsgType.CALIBRATION_RESULT, payload: w.finish() };
    }
    case "sim_command": {
      w.u8(COMMAND_CODES[m.kind]);
      if (m.kind === "nudge_translate" || m.kind === "nudge_rotate") w.vec3(m.delta);
      else if (m.kind === "set_noise") w.f64(m.position_sigma).f64(m.orientation_sigma);
      else w.str(m.scenario);
      return { msgType: MsgType.SIM_COMMAND, payload: w.finish() };
    }
    case "error":
      return { msgType: MsgType.ERROR, payload: w.u16(m.code).str(m.text).finish() };
    case "heartbeat":
      return { msgType: MsgType.HEARTBEAT, payload: w.f64(m.timestamp).finish() };
    case "unknown":
      return { msgType: m.msg_type, payload: m.payload };
  }
}

export function encode(m: Message): Uint8Array {
  const { msgType, payload } = encodePayload(m);
  if (payload.length > MAX_PAYLOAD) throw new Error("payload exceeds 16 MiB");
  const out = new Uint8Array(HEADER_SIZE + payload.length);
  const view = new DataView(out.buffer);
  view.setUint8(0, MAGIC0);
  view.setUint8(1, MAGIC1);
  view.setUint8(2, PROTOCOL_VERSION);
  view.setUint8(3, msgType);
  view.setUint32(4, payload.length, true);
  out.set(payload, HEADER_SIZE);
  return out;
}

// ---------------------------------------------------------------------------
// base64 (browser- and node-agnostic) and recording-record conversion

const B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

export function toBase64(data: Uint8Array): string {
  let out = "";
  for (let i = 0; i < data.length; i += 3) {
    const a = data[i];
    const b = i + 1 < data.length ? data[i + 1] : 0;
    const c = i + 2 < data.length ? data[i + 2] : 0;
    out += B64[a >> 2] + B64[((a & 3) << 4) | (b >> 4)];
    out += i + 1 < data.length ? B64[((b & 15) << 2) | (c >> 6)] : "=";
    out += i + 2 < data.length ? B64[c & 63] : "=";
  }
  return out;
}

export function fromBase64(s: string): Uint8Array {
  const clean = s.replace(/=+$/, "");
  const out = new Uint8Array(Math.floor((clean.length * 3) / 4));
  let acc = 0;
  let bits = 0;
  let j = 0;
  for (const ch of clean) {
    acc = (acc << 6) | B64.indexOf(ch);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out[j++] = (acc >> bits) & 0xff;
    }
  }
  return out;
}

/** The JSON-recording form of a message (video data as base64). */
export function messageToRecord(m: Message): Record<string, unknown> {
  if (m.type === "video_frame") {
    const { data, ...rest } = m;
    return { ...rest, data_b64: toBase64(data) };
  }
  if (m.type === "unknown") throw new Error("unknown messages have no record form");
  return { ...m };
}

/** Rebuild a wire message from its JSON-recording form. */
export function recordToMessage(rec: Record<string, unknown>): Message {
  if (rec.type === "video_frame") {
    const { data_b64, ...rest } = rec as Record<string, unknown> & { data_b64: string };
    return { ...(rest as Omit<VideoFrame, "data">), data: fromBase64(data_b64) };
  }
  return rec as unknown as Message;
}
