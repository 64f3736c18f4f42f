/**
 * GestureClient — the protocol half of the app.
 *
 * Owns the WebSocket, speaks wire v1 (hello once per connection, then
 * start / frame* / stop), and writes everything it learns into the
 * SessionStore. The socket constructor is injected so tests can drive
 * the client with a scripted fake.
 *
 * Invariant enforced here: a frame message is sent only while the
 * capture state is "recording" — landmark callbacks that arrive while
 * idle are dropped, never queued.
 */

import * as wire from "./protocol";
import type { SchemaBlock, ServerMessage } from "./protocol";
import type { SessionStore } from "./session";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  /** reconnect delay in ms; 0 disables automatic reconnect */
  reconnectMs?: number;
  /** stop a recording after this many ms without landmarks; 0 = off */
  autoStopMs?: number;
}

export class GestureClient {
  private socket: SocketLike | null = null;
  private url = "";
  private schema: SchemaBlock | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private autoStopTimer: ReturnType<typeof setTimeout> | null = null;
  private closedByUs = false;

  constructor(
    private store: SessionStore,
    private makeSocket: SocketFactory,
    private options: ClientOptions = {},
  ) {}

  /** Open (or re-open) the connection and negotiate the given schema. */
  connect(url: string, schema: SchemaBlock): void {
    this.socket?.close(); // stale-socket events are ignored via identity checks
    this.socket = null;
    this.url = url;
    this.schema = schema;
    this.closedByUs = false;
    this.clearReconnect();
    this.openSocket();
  }

  /** The joint schema sent in the most recent hello, if any. */
  get negotiatedSchema(): SchemaBlock | null {
    return this.schema;
  }

  disconnect(): void {
    this.closedByUs = true;
    this.clearReconnect();
    this.cancelAutoStop();
    this.socket?.close();
    this.socket = null;
    this.store.update({ connection: "disconnected", capture: "idle" });
  }

  startCapture(): void {
    if (this.store.getState().connection !== "ready") return;
    if (this.store.getState().capture === "recording") return;
    this.sendRaw(wire.start());
    this.store.update({ capture: "recording", framesSent: 0 });
    this.armAutoStop();
  }

  stopCapture(): void {
    if (this.store.getState().capture !== "recording") return;
    this.cancelAutoStop();
    this.sendRaw(wire.stop());
    this.store.update({ capture: "idle" });
  }

  /**
   * Feed one landmark frame from the capture loop. Drops it unless a
   * recording is in progress; re-arms the auto-stop timer either way.
   */
  sendLandmarks(tMs: number, xyz: number[]): void {
    if (this.store.getState().capture !== "recording") return;
    this.sendRaw(wire.frame(tMs, xyz));
    this.store.update({ framesSent: this.store.getState().framesSent + 1 });
    this.armAutoStop();
  }

  // -- internals ------------------------------------------------------------

  private openSocket(): void {
    this.store.update({ connection: "connecting" });
    let socket: SocketLike;
    try {
      socket = this.makeSocket(this.url);
    } catch {
      this.onLost();
      return;
    }
    this.socket = socket;
    const current = () => this.socket === socket;
    socket.onopen = () => {
      if (current() && this.schema) this.sendRaw(wire.hello(this.schema));
    };
    socket.onmessage = (ev) => {
      if (!current()) return;
      const msg = wire.parseServerMessage(ev.data);
      if (msg === null) {
        this.store.update({ toast: "unreadable server message ignored" });
        return;
      }
      this.handleServer(msg);
    };
    socket.onclose = () => {
      if (current()) this.onLost();
    };
    socket.onerror = () => {
      /* the close event follows and handles recovery */
    };
  }

  private handleServer(msg: ServerMessage): void {
    switch (msg.type) {
      case "ready":
        this.store.update({ connection: "ready", serverInfo: msg, banner: null });
        break;
      case "prediction":
        this.store.recordPrediction(msg);
        break;
      case "error":
        this.store.pushLog("error", `${msg.code}: ${msg.detail}`);
        if (msg.code === "EMPTY_GESTURE" || msg.code === "OVERFLOW") {
          // gesture rejected, session continues
          this.cancelAutoStop();
          this.store.update({ capture: "idle" });
        } else if (msg.code === "VERSION" || msg.code === "UNAVAILABLE") {
          this.store.update({ banner: `server refused session (${msg.code})` });
        }
        break;
    }
  }

  private onLost(): void {
    this.socket = null;
    this.cancelAutoStop();
    this.store.update({ connection: "disconnected", capture: "idle" });
    if (this.closedByUs) return;
    const delay = this.options.reconnectMs ?? 2000;
    if (delay <= 0) return;
    this.store.update({ banner: "connection lost — retrying…" });
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.openSocket(); // hello is renegotiated in onopen
    }, delay);
  }

  private sendRaw(msg: wire.ClientMessage): void {
    this.socket?.send(JSON.stringify(msg));
  }

  private armAutoStop(): void {
    this.cancelAutoStop();
    const ms = this.options.autoStopMs ?? 0;
    if (ms > 0 && this.store.getState().autoStop) {
      this.autoStopTimer = setTimeout(() => this.stopCapture(), ms);
    }
  }

  private cancelAutoStop(): void {
    if (this.autoStopTimer !== null) {
      clearTimeout(this.autoStopTimer);
      this.autoStopTimer = null;
    }
  }

  private clearReconnect(): void {
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
  }
}
