/**
 * DOM rendering. buildLayout() creates the static skeleton once;
 * render(state) is a cheap idempotent refresh driven by store
 * subscription. Nothing here talks to the network or the camera.
 */

import { FINGER_COLORS, TOPOLOGY } from "./bones";
import type { PredictionMessage, ReadyMessage } from "./protocol";
import type { SessionState } from "./session";

export function buildLayout(root: HTMLElement): void {
  root.innerHTML = `
    <div id="banner" class="banner hidden"></div>
    <header>
      <h1>gestigo live</h1>
      <span id="conn-state" class="pill">disconnected</span>
    </header>
    <main>
      <section class="panel" id="capture-panel">
        <div class="video-wrap">
          <video id="video" autoplay playsinline muted></video>
          <canvas id="overlay" width="480" height="360"></canvas>
          <div id="no-hand" class="indicator hidden">no hand detected</div>
        </div>
        <div class="controls">
          <label>server <input id="server-url" type="text" /></label>
          <button id="connect">connect</button>
          <button id="start" disabled>start gesture</button>
          <button id="stop" disabled>stop</button>
          <label><input id="auto-stop" type="checkbox" /> auto-stop</label>
          <label><input id="replay-mode" type="checkbox" /> replay bundled gesture</label>
        </div>
        <div id="capture-state" class="pill">idle</div>
        <div id="vo-readout" class="muted"></div>
      </section>
      <section class="panel" id="result-panel">
        <div id="prediction"><p class="muted">no prediction yet</p></div>
        <div id="stats" class="muted"></div>
        <div id="latency" class="muted"></div>
      </section>
      <section class="panel">
        <h2>session log</h2>
        <ul id="log"></ul>
      </section>
    </main>
    <div id="toast" class="toast hidden"></div>
  `;
}

function el<T extends HTMLElement>(root: HTMLElement, sel: string): T {
  const node = root.querySelector<T>(sel);
  if (!node) throw new Error(`layout is missing ${sel}`);
  return node;
}

/**
 * Render one prediction: a bar chart per probability vector — one per
 * stream plus the tuner — with the tuner highlighted as the decision.
 */
export function renderPrediction(
  container: HTMLElement,
  msg: PredictionMessage,
  info: ReadyMessage | null,
): void {
  const names = info?.class_names ?? [];
  const vos = info?.vos ?? [];
  const className = (i: number) => names[i] ?? `class ${i + 1}`;
  container.innerHTML = "";

  const decision = document.createElement("div");
  decision.className = "decision";
  decision.textContent = msg.label;
  container.appendChild(decision);

  const vectors: { title: string; probs: number[]; tuner: boolean }[] =
    msg.streams.map((probs, i) => ({
      title: vos[i] ?? `stream ${i + 1}`,
      probs,
      tuner: false,
    }));
  vectors.push({ title: "ensemble tuner", probs: msg.tuner, tuner: true });

  for (const v of vectors) {
    const block = document.createElement("div");
    block.className = v.tuner ? "vector tuner highlight" : "vector";
    const title = document.createElement("div");
    title.className = "vector-title";
    title.textContent = v.title;
    block.appendChild(title);

    const top = v.probs.indexOf(Math.max(...v.probs));
    v.probs.forEach((p, i) => {
      const row = document.createElement("div");
      row.className = i === top ? "bar-row top" : "bar-row";
      const label = document.createElement("span");
      label.className = "bar-label";
      label.textContent = className(i);
      const bar = document.createElement("span");
      bar.className = "bar";
      bar.style.width = `${(p * 100).toFixed(1)}%`;
      const value = document.createElement("span");
      value.className = "bar-value";
      value.textContent = `${(p * 100).toFixed(1)}%`;
      row.append(label, bar, value);
      block.appendChild(row);
    });
    container.appendChild(block);
  }
}

/** Draw the latest landmark frame over the video preview. */
export function renderOverlay(canvas: HTMLCanvasElement, xyz: number[] | null): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!xyz) return;
  const joints = Math.floor(xyz.length / 3);
  const topo = TOPOLOGY[joints];
  if (!topo) return;
  const px = (i: number): [number, number] => [
    xyz[3 * i] * canvas.width,
    xyz[3 * i + 1] * canvas.height,
  ];
  ctx.strokeStyle = "#ddd";
  ctx.lineWidth = 2;
  for (const [a, b] of topo.bones) {
    ctx.beginPath();
    ctx.moveTo(...px(a));
    ctx.lineTo(...px(b));
    ctx.stroke();
  }
  topo.fingertips.forEach((tip, k) => {
    const [x, y] = px(tip);
    ctx.fillStyle = FINGER_COLORS[k % FINGER_COLORS.length];
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, Math.PI * 2);
    ctx.fill();
  });
}

export function render(root: HTMLElement, state: SessionState): void {
  el(root, "#conn-state").textContent = state.connection;
  el(root, "#capture-state").textContent =
    state.capture === "recording"
      ? `recording — ${state.framesSent} frames`
      : "idle";

  el<HTMLButtonElement>(root, "#start").disabled =
    state.connection !== "ready" || state.capture === "recording";
  el<HTMLButtonElement>(root, "#stop").disabled = state.capture !== "recording";

  el(root, "#banner").classList.toggle("hidden", state.banner === null);
  el(root, "#banner").textContent = state.banner ?? "";
  el(root, "#toast").classList.toggle("hidden", state.toast === null);
  el(root, "#toast").textContent = state.toast ?? "";
  el(root, "#no-hand").classList.toggle(
    "hidden",
    state.handVisible || state.capture !== "recording",
  );

  const info = state.serverInfo;
  el(root, "#vo-readout").textContent = info
    ? `views: ${info.vos.join(", ")} — ${info.class_names.length} classes` +
      (info.dataset_id ? ` (${info.dataset_id})` : "")
    : "";

  if (state.lastPrediction) {
    renderPrediction(el(root, "#prediction"), state.lastPrediction, info);
    const p = state.lastPrediction;
    el(root, "#stats").textContent =
      `${p.frames} frames over ${p.duration_ms.toFixed(0)} ms`;
    el(root, "#latency").textContent =
      `latency ${p.latency_ms.total.toFixed(0)} ms ` +
      `(condense ${p.latency_ms.condense.toFixed(0)} + ` +
      `infer ${p.latency_ms.infer.toFixed(0)})`;
  }

  const logEl = el(root, "#log");
  logEl.innerHTML = "";
  for (const entry of [...state.log].reverse()) {
    const li = document.createElement("li");
    li.className = entry.kind;
    li.textContent = entry.text;
    logEl.appendChild(li);
  }
}
