/**
 * Golden-vector parity: this codec must decode every shipped vector to
 * exactly the fields the server recorded, and re-encode to identical bytes.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  StreamDecoder,
  decodeOne,
  encode,
  messageToRecord,
  recordToMessage,
  type Message,
} from "./protocol";

const here = dirname(fileURLToPath(import.meta.url));
const VECTORS = join(here, "..", "..", "golden", "protocol_vectors.jsonl");

interface Vector {
  hex: string;
  decoded: Record<string, unknown>;
}

function loadVectors(): Vector[] {
  return readFileSync(VECTORS, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line));
}

function hexToBytes(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

function bytesToHex(data: Uint8Array): string {
  return Array.from(data, (b) => b.toString(16).padStart(2, "0")).join("");
}

describe("golden vector corpus", () => {
  const vectors = loadVectors();

  it("is present and covers every message type", () => {
    expect(vectors.length).toBeGreaterThanOrEqual(30);
    const types = new Set(vectors.map((v) => v.decoded.type));
    expect(types).toEqual(
      new Set([
        "heartbeat", "hello", "subscribe", "error", "plan_update",
        "sim_command", "calibration_result", "video_frame",
        "rigid_body_frame", "guidance",
      ]),
    );
  });

  it("decodes every vector field-identically to the server codec", () => {
    for (const v of vectors) {
      const raw = hexToBytes(v.hex);
      const res = decodeOne(raw);
      expect(res).not.toBeNull();
      expect(res!.consumed).toBe(raw.length);
      expect(messageToRecord(res!.message)).toEqual(v.decoded);
    }
  });

  it("re-encodes every vector to identical bytes", () => {
    for (const v of vectors) {
      const msg = recordToMessage(v.decoded);
      expect(bytesToHex(encode(msg))).toBe(v.hex);
    }
  });

  it("round-trips its own encoding", () => {
    for (const v of vectors) {
      const msg = decodeOne(hexToBytes(v.hex))!.message;
      const again = decodeOne(encode(msg))!.message;
      expect(again).toEqual(msg);
    }
  });

  it("is chunking-invariant over the concatenated stream", () => {
    const stream = vectors.map((v) => hexToBytes(v.hex));
    const joined = new Uint8Array(stream.reduce((n, b) => n + b.length, 0));
    let off = 0;
    for (const part of stream) {
      joined.set(part, off);
      off += part.length;
    }
    const expected: Message[] = vectors.map((v) => decodeOne(hexToBytes(v.hex))!.message);
    for (let cut = 0; cut <= joined.length; cut += 97) {
      const dec = new StreamDecoder();
      const got = [...dec.feed(joined.subarray(0, cut)), ...dec.feed(joined.subarray(cut))];
      expect(got).toEqual(expected);
    }
  });

  it("rejects bad magic at offset zero", () => {
    expect(() => decodeOne(new Uint8Array([0, 1, 2, 3, 4, 5, 6, 7]))).toThrowError(
      /bad magic/,
    );
  });
});
