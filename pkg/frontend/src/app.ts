/**
 * App wiring: store + client + capture source + renderer.
 *
 * setupApp() is exported for tests (inject a DOM root, a socket
 * factory and a fixture); the bottom of the file bootstraps the real
 * page when one is present.
 *
 * Schema negotiation follows the capture mode: the webcam pipeline
 * speaks 21 landmarks, a bundled replay brings its own joint count, so
 * toggling replay mode while connected renegotiates the session.
 */

import { GestureClient, type SocketFactory, type SocketLike } from "./client";
import {
  ReplaySource,
  WebcamSource,
  type LandmarkSource,
  type ReplayDoc,
} from "./capture";
import type { SchemaBlock } from "./protocol";
import { buildLayout, render, renderOverlay } from "./render";
import { SessionStore } from "./session";

const AUTO_STOP_MS = 800;
const WEBCAM_SCHEMA: SchemaBlock = { joints: 21, fingertips: [4, 8, 12, 16, 20] };

export interface AppOptions {
  makeSocket: SocketFactory;
  /** loads the bundled replay gesture for camera-free demo mode */
  loadFixture: () => Promise<ReplayDoc>;
  /** capture override for tests; defaults to webcam / replay fixture */
  makeSource?: () => Promise<LandmarkSource> | LandmarkSource;
  defaultUrl?: string;
  reconnectMs?: number;
  replayFps?: number;
}

export interface App {
  store: SessionStore;
  client: GestureClient;
  connect(): Promise<void>;
  /** resolves when the capture source has delivered its last frame */
  startGesture(): Promise<void>;
  stopGesture(): void;
}

export function setupApp(root: HTMLElement, options: AppOptions): App {
  const store = new SessionStore();
  const client = new GestureClient(store, options.makeSocket, {
    reconnectMs: options.reconnectMs ?? 2000,
    autoStopMs: AUTO_STOP_MS,
  });

  buildLayout(root);
  store.subscribe((state) => render(root, state));
  render(root, store.getState());

  const urlInput = root.querySelector<HTMLInputElement>("#server-url")!;
  urlInput.value =
    options.defaultUrl ??
    (typeof location !== "undefined" && location.host
      ? `ws://${location.host}`
      : "ws://127.0.0.1:8765");

  const video = root.querySelector<HTMLVideoElement>("#video")!;
  const overlay = root.querySelector<HTMLCanvasElement>("#overlay")!;
  let fixture: ReplayDoc | null = null;
  let source: LandmarkSource | null = null;
  let sourceDone: (() => void) | null = null;

  async function fixtureDoc(): Promise<ReplayDoc> {
    fixture ??= await options.loadFixture();
    return fixture;
  }

  async function makeSource(): Promise<LandmarkSource> {
    if (options.makeSource) return options.makeSource();
    if (store.getState().replayMode) {
      return new ReplaySource(await fixtureDoc(), options.replayFps ?? 15);
    }
    return new WebcamSource(video);
  }

  async function activeSchema(): Promise<SchemaBlock> {
    if (options.makeSource) return (await options.makeSource()).schema;
    if (store.getState().replayMode) {
      const doc = await fixtureDoc();
      return {
        joints: doc.joints as SchemaBlock["joints"],
        fingertips: doc.fingertips,
      };
    }
    return WEBCAM_SCHEMA;
  }

  async function connect(): Promise<void> {
    let schema: SchemaBlock;
    try {
      schema = await activeSchema();
    } catch (err) {
      store.update({ banner: `capture unavailable: ${(err as Error).message}` });
      return;
    }
    client.connect(urlInput.value, schema);
  }

  async function startGesture(): Promise<void> {
    const state = store.getState();
    if (state.capture === "recording") return;
    if (state.connection !== "ready") {
      store.update({ toast: "connect to a server first" });
      return;
    }
    try {
      source = await makeSource();
    } catch (err) {
      store.update({ banner: `capture unavailable: ${(err as Error).message}` });
      return;
    }
    const active = source;
    const done = new Promise<void>((resolve) => {
      sourceDone = resolve;
    });
    client.startCapture();
    await active.start((frame) => {
      if (frame === null) {
        // tick without a hand: indicator on, frame suppressed
        store.update({ handVisible: false });
        if (active instanceof ReplaySource && active.finished) {
          client.stopCapture();
          sourceDone?.();
        }
        return;
      }
      store.update({ handVisible: true });
      renderOverlay(overlay, frame.xyz);
      client.sendLandmarks(frame.tMs, frame.xyz);
    });
    return done;
  }

  function stopGesture(): void {
    source?.stop();
    client.stopCapture();
    sourceDone?.();
  }

  root.querySelector("#connect")!.addEventListener("click", () => {
    void connect();
  });
  root.querySelector("#start")!.addEventListener("click", () => {
    void startGesture();
  });
  root.querySelector("#stop")!.addEventListener("click", stopGesture);
  root
    .querySelector<HTMLInputElement>("#auto-stop")!
    .addEventListener("change", (ev) => {
      store.update({ autoStop: (ev.target as HTMLInputElement).checked });
    });
  root
    .querySelector<HTMLInputElement>("#replay-mode")!
    .addEventListener("change", (ev) => {
      store.update({ replayMode: (ev.target as HTMLInputElement).checked });
      if (store.getState().capture === "recording") stopGesture();
      // a different capture source means a different joint schema
      if (store.getState().connection !== "disconnected") void connect();
    });

  return { store, client, connect, startGesture, stopGesture };
}

// Bootstrap the real page (skipped under tests, which call setupApp).
const rootEl = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootEl) {
  setupApp(rootEl, {
    makeSocket: (url) => new WebSocket(url) as unknown as SocketLike,
    loadFixture: async () => {
      const res = await fetch("fixtures/swipe-left.replay.json");
      if (!res.ok) throw new Error(`fixture fetch failed (${res.status})`);
      return (await res.json()) as ReplayDoc;
    },
  });
}
