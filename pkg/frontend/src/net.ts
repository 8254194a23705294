/**
 * WebSocket session: handshake, decode loop into the scene model, and
 * auto-reconnect with exponential backoff. Connection trouble is surfaced
 * through the model's status fields, never thrown at the page.
 */

import { SceneModel } from "./scene";
import { StreamDecoder, encode, type Message } from "./protocol";

const BACKOFF_BASE_MS = 500;
const BACKOFF_CAP_MS = 5000;

export class Session {
  private ws: WebSocket | null = null;
  private decoder = new StreamDecoder();
  private closed = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    readonly url: string,
    readonly model: SceneModel,
    readonly clientName = "browser-ui",
  ) {}

  connect(): void {
    this.model.connection =
      this.model.reconnectAttempts > 0 ? "reconnecting" : "connecting";
    let ws: WebSocket;
    try {
      ws = new WebSocket(this.url);
    } catch (err) {
      this.model.lastError = String(err);
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    this.decoder = new StreamDecoder();

    ws.onopen = () => {
      this.model.connection = "connected";
      this.model.reconnectAttempts = 0;
      this.model.lastError = "";
      this.sendRaw({ type: "subscribe", all: true, body_ids: [] });
      this.sendRaw({ type: "hello", protocol_version: 1, client_name: this.clientName });
    };
    ws.onmessage = (event) => {
      if (!(event.data instanceof ArrayBuffer)) return;
      const now = performance.now() / 1000;
      try {
        for (const msg of this.decoder.feed(new Uint8Array(event.data))) {
          this.model.apply(msg, now);
        }
      } catch (err) {
        this.model.lastError = `protocol error: ${err}`;
        ws.close();
      }
    };
    ws.onclose = () => {
      if (this.ws === ws) this.ws = null;
      if (!this.closed) this.scheduleReconnect();
    };
    ws.onerror = () => {
      this.model.lastError = "connection failed";
    };
  }

  private scheduleReconnect(): void {
    if (this.closed || this.reconnectTimer !== null) return;
    this.model.connection = "reconnecting";
    this.model.reconnectAttempts += 1;
    const delay = Math.min(
      BACKOFF_CAP_MS,
      BACKOFF_BASE_MS * 2 ** Math.min(6, this.model.reconnectAttempts - 1),
    );
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }

  get connected(): boolean {
    return this.ws !== null && this.ws.readyState === WebSocket.OPEN;
  }

  /** Send a message; false (and no throw) when disconnected. */
  send(msg: Message): boolean {
    if (!this.connected) return false;
    this.sendRaw(msg);
    return true;
  }

  private sendRaw(msg: Message): void {
    this.ws?.send(encode(msg));
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.ws?.close();
  }
}
