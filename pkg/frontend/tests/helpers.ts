/**
 * Test plumbing: the shared wire-schema validator and a scriptable
 * in-memory WebSocket stand-in.
 *
 * FakeSocket.send validates every client-emitted message against
 * ../protocol/wire-v1.schema.json before recording it, so protocol
 * conformance is asserted continuously in every behavioural test, not
 * just in the dedicated schema suite.
 */

import Ajv2020 from "ajv/dist/2020";
import schema from "../../protocol/wire-v1.schema.json";
import type { SocketLike } from "../src/client";

const ajv = new Ajv2020({ strict: false });
export const validateWire = ajv.compile(schema as object);

export function assertWire(msg: unknown): void {
  if (!validateWire(msg)) {
    throw new Error(
      `message violates wire schema: ${JSON.stringify(msg)} — ` +
        ajv.errorsText(validateWire.errors),
    );
  }
}

export type ServerScript = (msg: any, sock: FakeSocket) => void;

export class FakeSocket implements SocketLike {
  sent: any[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  constructor(
    public url: string,
    private script: ServerScript = () => {},
  ) {}

  /** Simulate the TCP/WS handshake completing. */
  open(): void {
    this.onopen?.();
  }

  send(data: string): void {
    const msg = JSON.parse(data);
    assertWire(msg);
    this.sent.push(msg);
    this.script(msg, this);
  }

  /** Server -> client delivery; canned messages are schema-checked too. */
  receive(msg: unknown): void {
    assertWire(msg);
    this.onmessage?.({ data: JSON.stringify(msg) });
  }

  receiveRaw(text: string): void {
    this.onmessage?.({ data: text });
  }

  close(): void {
    if (this.closed) return;
    this.closed = true;
    this.onclose?.();
  }

  /** The server dropping the connection looks identical to close(). */
  serverClose(): void {
    this.close();
  }

  framesSent(): any[] {
    return this.sent.filter((m) => m.type === "frame");
  }
}

export const SWIPE_NAMES = [
  "Swipe Up",
  "Swipe Down",
  "Swipe Right",
  "Swipe Left",
  "Swipe +",
  "Swipe V",
  "Swipe X",
];

export interface ScriptOptions {
  vos?: string[];
  classNames?: string[];
  /** override the canned prediction for a finished gesture */
  prediction?: (frames: any[], gestureId: number) => any;
}

/** A near-peaked probability vector over `n` classes, argmax at `peak`. */
export function peakedVector(n: number, peak: number): number[] {
  const rest = 0.02;
  return Array.from({ length: n }, (_, i) =>
    i === peak ? 1 - rest * (n - 1) : rest,
  );
}

export function cannedPrediction(
  frames: any[],
  gestureId: number,
  opts: ScriptOptions = {},
): any {
  const names = opts.classNames ?? SWIPE_NAMES;
  const vos = opts.vos ?? ["custom", "top-down", "front-away"];
  const peak = 3; // "Swipe Left"
  return {
    type: "prediction",
    gesture_id: gestureId,
    streams: vos.map((_, k) => peakedVector(names.length, k === 1 ? 0 : peak)),
    tuner: peakedVector(names.length, peak),
    class: peak + 1,
    label: names[peak],
    latency_ms: { condense: 120.5, infer: 60.2, total: 190.9 },
    frames: frames.length,
    duration_ms:
      frames.length > 0 ? frames[frames.length - 1].t_ms - frames[0].t_ms : 0,
  };
}

/**
 * A well-behaved fake server: answers hello with ready, buffers frames
 * between start/stop, and replies to stop with a prediction (or
 * EMPTY_GESTURE when fewer than two frames arrived).
 */
export function scriptedServer(opts: ScriptOptions = {}): ServerScript {
  const vos = opts.vos ?? ["custom", "top-down", "front-away"];
  const classNames = opts.classNames ?? SWIPE_NAMES;
  let frames: any[] = [];
  let gestureId = 0;
  return (msg, sock) => {
    switch (msg.type) {
      case "hello":
        sock.receive({
          type: "ready",
          version: 1,
          schema: msg.schema,
          dataset_id: "DHG1428_14G",
          vos,
          class_names: classNames,
        });
        break;
      case "start":
        frames = [];
        break;
      case "frame":
        frames.push(msg);
        break;
      case "stop":
        if (frames.length < 2) {
          sock.receive({
            type: "error",
            code: "EMPTY_GESTURE",
            detail: "a gesture needs at least 2 frames",
          });
          return;
        }
        gestureId += 1;
        sock.receive(
          opts.prediction?.(frames, gestureId) ??
            cannedPrediction(frames, gestureId, opts),
        );
        break;
    }
  };
}

/** A flat 63-float landmark frame with all joints at one normalized point. */
export function flatHand(x = 0.5, y = 0.5, z = 0): number[] {
  const xyz: number[] = [];
  for (let i = 0; i < 21; i++) xyz.push(x, y, z);
  return xyz;
}
