/**
 * Wire protocol v1 — TypeScript mirror of ../protocol/wire-v1.schema.json.
 *
 * The JSON schema file is the source of truth; the test suite validates
 * every message these builders produce against it. Keep the two in sync.
 */

export const PROTOCOL_VERSION = 1;

export interface SchemaBlock {
  joints: 21 | 22 | 46;
  fingertips?: number[];
}

export interface HelloMessage {
  type: "hello";
  version: 1;
  schema: SchemaBlock;
}

export interface StartMessage {
  type: "start";
}

export interface StopMessage {
  type: "stop";
}

export interface FrameMessage {
  type: "frame";
  t_ms: number;
  xyz: number[];
}

export interface ReadyMessage {
  type: "ready";
  version: 1;
  schema: SchemaBlock;
  dataset_id?: string | null;
  vos: string[];
  class_names: string[];
}

export interface PredictionMessage {
  type: "prediction";
  gesture_id: number;
  streams: number[][];
  tuner: number[];
  class: number;
  label: string;
  latency_ms: { condense: number; infer: number; total: number };
  frames: number;
  duration_ms: number;
}

export type ErrorCode =
  | "VERSION"
  | "ORDER"
  | "EMPTY_GESTURE"
  | "OVERFLOW"
  | "UNAVAILABLE";

export interface ErrorMessage {
  type: "error";
  code: ErrorCode;
  detail: string;
}

export type ClientMessage = HelloMessage | StartMessage | StopMessage | FrameMessage;
export type ServerMessage = ReadyMessage | PredictionMessage | ErrorMessage;

export function hello(schema: SchemaBlock): HelloMessage {
  return { type: "hello", version: PROTOCOL_VERSION, schema };
}

export function start(): StartMessage {
  return { type: "start" };
}

export function stop(): StopMessage {
  return { type: "stop" };
}

/** Build a frame message; t_ms is clamped to a non-negative integer. */
export function frame(tMs: number, xyz: number[]): FrameMessage {
  return { type: "frame", t_ms: Math.max(0, Math.round(tMs)), xyz };
}

export function parseServerMessage(text: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const type = (msg as { type?: unknown }).type;
  if (type === "ready" || type === "prediction" || type === "error") {
    return msg as ServerMessage;
  }
  return null;
}
