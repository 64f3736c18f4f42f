/**
 * UiSession — the single shared state of the app.
 *
 * Capture, protocol I/O and rendering all run as independent event
 * handlers; this store is the only thing they share. All writes go
 * through update() (single writer), reads through getState(), and the
 * renderer reacts via subscribe().
 */

import type { PredictionMessage, ReadyMessage } from "./protocol";

export type ConnectionState = "disconnected" | "connecting" | "ready";
export type CaptureState = "idle" | "recording";

export interface LogEntry {
  kind: "prediction" | "error" | "info";
  text: string;
  at: number;
}

export interface SessionState {
  connection: ConnectionState;
  capture: CaptureState;
  handVisible: boolean;
  serverInfo: ReadyMessage | null;
  lastPrediction: PredictionMessage | null;
  latencyTotals: number[]; // rolling window of latency_ms.total
  framesSent: number; // frames in the current capture
  banner: string | null; // reconnect / fatal error banner
  toast: string | null;
  log: LogEntry[]; // survives reconnects, client-side only
  replayMode: boolean;
  autoStop: boolean;
}

const LATENCY_WINDOW = 20;
const LOG_LIMIT = 50;

export function initialState(): SessionState {
  return {
    connection: "disconnected",
    capture: "idle",
    handVisible: false,
    serverInfo: null,
    lastPrediction: null,
    latencyTotals: [],
    framesSent: 0,
    banner: null,
    toast: null,
    log: [],
    replayMode: false,
    autoStop: false,
  };
}

export class SessionStore {
  private state: SessionState = initialState();
  private listeners = new Set<(s: SessionState) => void>();

  getState(): SessionState {
    return this.state;
  }

  subscribe(fn: (s: SessionState) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  pushLog(kind: LogEntry["kind"], text: string): void {
    const log = [...this.state.log, { kind, text, at: Date.now() }];
    this.update({ log: log.slice(-LOG_LIMIT) });
  }

  recordPrediction(msg: PredictionMessage): void {
    const latencyTotals = [...this.state.latencyTotals, msg.latency_ms.total]
      .slice(-LATENCY_WINDOW);
    this.update({ lastPrediction: msg, latencyTotals });
    this.pushLog(
      "prediction",
      `#${msg.gesture_id} ${msg.label} ` +
        `(${msg.frames} frames, ${msg.duration_ms.toFixed(0)} ms, ` +
        `${msg.latency_ms.total.toFixed(0)} ms latency)`,
    );
  }

  meanLatency(): number | null {
    const t = this.state.latencyTotals;
    if (t.length === 0) return null;
    return t.reduce((a, b) => a + b, 0) / t.length;
  }
}
