/**
 * Landmark sources for the capture loop.
 *
 * A LandmarkSource produces hand-skeleton frames at some cadence and
 * is otherwise opaque to the rest of the app: the webcam pipeline and
 * the bundled-replay player implement the same interface. A null frame
 * means "tick happened, no hand detected" — the app shows the no-hand
 * indicator and sends nothing.
 */

import type { SchemaBlock } from "./protocol";

export interface LandmarkFrame {
  tMs: number;
  xyz: number[]; // joints * 3, flat
}

export type FrameCallback = (frame: LandmarkFrame | null) => void;

export interface LandmarkSource {
  readonly schema: SchemaBlock;
  start(onFrame: FrameCallback): Promise<void>;
  stop(): void;
}

/** Replay file shape written by the server tooling. */
export interface ReplayDoc {
  version: number;
  joints: number;
  fingertips?: number[];
  label?: number | null;
  frames: { t_ms: number; xyz: number[] }[];
}

/**
 * Plays a recorded gesture at a fixed cadence, once through. Used for
 * the bundled demo fixture ("replay mode") and for tests.
 */
export class ReplaySource implements LandmarkSource {
  readonly schema: SchemaBlock;
  private timer: ReturnType<typeof setInterval> | null = null;
  private index = 0;

  constructor(private doc: ReplayDoc, private fps = 15) {
    this.schema = {
      joints: doc.joints as SchemaBlock["joints"],
      fingertips: doc.fingertips,
    };
  }

  start(onFrame: FrameCallback): Promise<void> {
    this.index = 0;
    this.timer = setInterval(() => {
      if (this.index >= this.doc.frames.length) {
        this.stop();
        onFrame(null); // trailing tick so auto-stop logic can fire
        return;
      }
      const f = this.doc.frames[this.index++];
      onFrame({ tMs: f.t_ms, xyz: f.xyz });
    }, 1000 / this.fps);
    return Promise.resolve();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  get finished(): boolean {
    return this.index >= this.doc.frames.length;
  }
}

/**
 * 21-landmark detector contract for the webcam pipeline. A concrete
 * implementation (e.g. a WASM hand-landmark model) is loaded by the
 * hosting page and registered on window.gestigoDetector; this module
 * does not bundle one.
 */
export interface HandDetector {
  /** Flat 63 floats (21 joints × xyz, camera-normalized) or null. */
  detect(video: HTMLVideoElement, tMs: number): number[] | null;
}

declare global {
  interface Window {
    gestigoDetector?: HandDetector;
  }
}

export class WebcamSource implements LandmarkSource {
  readonly schema: SchemaBlock = { joints: 21, fingertips: [4, 8, 12, 16, 20] };
  private stream: MediaStream | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private video: HTMLVideoElement, private fps = 15) {}

  async start(onFrame: FrameCallback): Promise<void> {
    const detector = window.gestigoDetector;
    if (!detector) {
      throw new Error("no hand-landmark model registered (window.gestigoDetector)");
    }
    this.stream = await navigator.mediaDevices.getUserMedia({ video: true });
    this.video.srcObject = this.stream;
    await this.video.play();
    const t0 = performance.now();
    this.timer = setInterval(() => {
      const tMs = performance.now() - t0;
      const xyz = detector.detect(this.video, tMs);
      onFrame(xyz === null ? null : { tMs, xyz });
    }, 1000 / this.fps);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.stream?.getTracks().forEach((t) => t.stop());
    this.stream = null;
    this.video.srcObject = null;
  }
}
