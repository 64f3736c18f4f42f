"""Real-time gesture service over a WebSocket JSON protocol.

A session negotiates a joint schema in a hello handshake, then streams
timestamped skeleton frames between explicit start/stop markers. Each
captured gesture is condensed into the model's view images and classified;
the reply carries all four probability vectors (per stream + tuner), the
decided class, and per-stage latency. Sessions are isolated: one task per
connection, with condensation/inference offloaded to a shared worker pool
so the event loop keeps serving other sessions.

`replay_client` plays a recorded gesture file against a server at a fixed
frame rate and returns the prediction — the loopback path used to check
online results against offline `predict`.
"""

from __future__ import annotations

import asyncio
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from websockets.asyncio.client import connect
from websockets.asyncio.server import serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response

from .datasets import SCHEMAS_BY_JOINT_COUNT, JointSchema, SkeletonSequence
from .errors import ArgumentError, GestigoError, TransportError
from .model import GestureNet, condense_for_model, predict_from_images

PROTOCOL_VERSION = 1
DEFAULT_BUFFER_FRAMES = 1024
DEFAULT_REPLAY_FPS = 15.0
DEFAULT_AUTO_STOP_MS = 800

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript",
    ".mjs": "text/javascript",
    ".css": "text/css",
    ".json": "application/json",
    ".map": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".wasm": "application/wasm",
    ".txt": "text/plain; charset=utf-8",
}


def worker_count(default: int = 2) -> int:
    """Worker-pool size, capped by the GESTIGO_THREADS environment variable."""
    raw = os.environ.get("GESTIGO_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ArgumentError(f"GESTIGO_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ArgumentError(f"GESTIGO_THREADS must be >= 1, got {n}")
        return n
    return max(1, min(default, os.cpu_count() or 1))


def parse_bind(bind: str):
    """'host:port' -> (host, port); host may be empty for all interfaces."""
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ArgumentError(f"bind address must be host:port, got {bind!r}")
    return host or "0.0.0.0", int(port)


@dataclass
class SessionState:
    """Mutable per-connection state: negotiated schema, buffer, capture mode."""

    session_id: int
    schema: JointSchema = None
    frames: list = field(default_factory=list)      # (t_ms, (J, 3) float64)
    capture: str = "idle"                           # idle | recording
    gesture_id: int = 1


def _message(**fields) -> str:
    return json.dumps(fields)


def _error(code: str, detail: str) -> str:
    return _message(type="error", code=code, detail=detail)


class ProtocolError(GestigoError):
    """Wire-protocol violation; ``code`` names the error sent to the client."""

    def __init__(self, code: str, detail: str, fatal: bool = False):
        self.code = code
        self.detail = detail
        self.fatal = fatal
        super().__init__(f"{code}: {detail}")


class GestureService:
    """Shared server state: the frozen model, worker pool, session budget."""

    def __init__(self, model: GestureNet = None, buffer_frames: int = DEFAULT_BUFFER_FRAMES,
                 auto_stop_ms: float = None, max_sessions: int = 64,
                 workers: int = None, ui_dir=None, log=None):
        self.model = model
        self.buffer_frames = int(buffer_frames)
        self.auto_stop_ms = auto_stop_ms
        self.max_sessions = int(max_sessions)
        self.ui_dir = Path(ui_dir).resolve() if ui_dir is not None else None
        self._pool = ThreadPoolExecutor(max_workers=workers or worker_count())
        self._sessions = 0
        self._next_session = 1
        self._log = log if log is not None else (lambda line: None)

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- classification (runs on the worker pool) -----------------------------

    def classify(self, state: SessionState) -> dict:
        """Condense + classify the buffered frames; returns the reply fields."""
        if self.model is None:
            raise ProtocolError("UNAVAILABLE", "no model loaded")
        t0 = time.perf_counter()
        stacked = np.stack([xyz for _, xyz in state.frames])
        seq = SkeletonSequence(frames=stacked, schema=state.schema)
        t1 = time.perf_counter()
        masters = condense_for_model(self.model, seq)
        t2 = time.perf_counter()
        pred = predict_from_images(self.model, masters)
        t3 = time.perf_counter()
        build_ms, condense_ms, infer_ms = (
            (t1 - t0) * 1e3, (t2 - t1) * 1e3, (t3 - t2) * 1e3)
        t_first, t_last = state.frames[0][0], state.frames[-1][0]
        return {
            "type": "prediction",
            "gesture_id": state.gesture_id,
            "streams": [[float(v) for v in row] for row in pred.stream_probs],
            "tuner": [float(v) for v in pred.tuner_probs],
            "class": pred.class_index,
            "label": pred.class_label,
            "latency_ms": {
                "condense": condense_ms,
                "infer": infer_ms,
                "total": build_ms + condense_ms + infer_ms,
            },
            "frames": len(state.frames),
            "duration_ms": max(0, int(t_last) - int(t_first)),
        }

    # -- message handlers -----------------------------------------------------

    def _on_hello(self, state: SessionState, msg: dict) -> str:
        if state.schema is not None:
            raise ProtocolError("ORDER", "hello already negotiated")
        if msg.get("version") != PROTOCOL_VERSION:
            raise ProtocolError("VERSION", f"unsupported protocol version "
                                f"{msg.get('version')!r}, need {PROTOCOL_VERSION}", fatal=True)
        schema_req = msg.get("schema")
        if not isinstance(schema_req, dict) or "joints" not in schema_req:
            raise ProtocolError("VERSION", "hello.schema.joints is required", fatal=True)
        joints = schema_req["joints"]
        schema = SCHEMAS_BY_JOINT_COUNT.get(joints)
        if schema is None:
            known = sorted(SCHEMAS_BY_JOINT_COUNT)
            raise ProtocolError("VERSION", f"unsupported joint count {joints!r}, "
                                f"known: {known}", fatal=True)
        tips = schema_req.get("fingertips")
        if tips is not None and tuple(tips) != schema.fingertip_indices:
            raise ProtocolError("VERSION", f"fingertip indices {tips} do not match "
                                f"the {joints}-joint schema "
                                f"{list(schema.fingertip_indices)}", fatal=True)
        state.schema = schema
        ready = {
            "type": "ready",
            "version": PROTOCOL_VERSION,
            "schema": {"joints": schema.joint_count,
                       "fingertips": list(schema.fingertip_indices)},
        }
        if self.model is not None:
            cfg = self.model.config
            ready.update(dataset_id=cfg.dataset_id, vos=list(cfg.vo_names),
                         class_names=list(cfg.class_names))
        else:
            ready.update(dataset_id=None, vos=[], class_names=[])
        return json.dumps(ready)

    def _on_start(self, state: SessionState) -> None:
        if state.capture != "idle":
            raise ProtocolError("ORDER", "already recording")
        state.capture = "recording"
        state.frames.clear()

    def _on_frame(self, state: SessionState, msg: dict) -> None:
        if state.capture != "recording":
            raise ProtocolError("ORDER", "frame outside start/stop")
        xyz = msg.get("xyz")
        want = 3 * state.schema.joint_count
        if not isinstance(xyz, list) or len(xyz) != want:
            got = len(xyz) if isinstance(xyz, list) else type(xyz).__name__
            raise ProtocolError("ORDER", f"frame.xyz must hold {want} numbers, got {got}")
        arr = np.asarray(xyz, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ProtocolError("ORDER", "frame.xyz holds non-finite values")
        t_ms = msg.get("t_ms")
        if not isinstance(t_ms, (int, float)):
            raise ProtocolError("ORDER", "frame.t_ms must be a number")
        if len(state.frames) >= self.buffer_frames:
            state.frames.clear()
            state.capture = "idle"
            raise ProtocolError("OVERFLOW", f"gesture exceeds the "
                                f"{self.buffer_frames}-frame buffer; capture reset")
        state.frames.append((int(t_ms), arr.reshape(state.schema.joint_count, 3)))

    async def _on_stop(self, state: SessionState, ws) -> None:
        if state.capture != "recording":
            raise ProtocolError("ORDER", "stop while idle")
        state.capture = "idle"
        try:
            if len(state.frames) < 2:
                raise ProtocolError("EMPTY_GESTURE",
                                    f"need at least 2 frames, got {len(state.frames)}")
            loop = asyncio.get_running_loop()
            try:
                reply = await loop.run_in_executor(self._pool, self.classify, state)
            except ProtocolError:
                raise
            except Exception as exc:
                raise ProtocolError("UNAVAILABLE", f"classification failed: {exc}") from exc
            await ws.send(json.dumps(reply))
            state.gesture_id += 1
        finally:
            state.frames.clear()

    # -- session loop ---------------------------------------------------------

    async def handle_session(self, ws) -> None:
        if self._sessions >= self.max_sessions:
            await ws.send(_error("UNAVAILABLE", f"server is at its "
                                 f"{self.max_sessions}-session limit"))
            await ws.close()
            return
        self._sessions += 1
        state = SessionState(session_id=self._next_session)
        self._next_session += 1
        self._log(f"session {state.session_id}: open")
        try:
            await self._session_loop(state, ws)
        except ConnectionClosed:
            pass
        finally:
            self._sessions -= 1
            self._log(f"session {state.session_id}: closed "
                      f"({state.gesture_id - 1} gestures)")

    async def _session_loop(self, state: SessionState, ws) -> None:
        while True:
            if state.capture == "recording" and self.auto_stop_ms:
                try:
                    raw = await asyncio.wait_for(ws.recv(), self.auto_stop_ms / 1e3)
                except asyncio.TimeoutError:
                    try:
                        await self._on_stop(state, ws)
                    except ProtocolError as exc:
                        await ws.send(_error(exc.code, exc.detail))
                    continue
            else:
                raw = await ws.recv()
            try:
                kind, msg = self._parse(raw)
                if state.schema is None and kind != "hello":
                    raise ProtocolError("ORDER", "hello must come first", fatal=True)
                if kind == "hello":
                    await ws.send(self._on_hello(state, msg))
                elif kind == "start":
                    self._on_start(state)
                elif kind == "frame":
                    self._on_frame(state, msg)
                elif kind == "stop":
                    await self._on_stop(state, ws)
                else:
                    raise ProtocolError("ORDER", f"unknown message type {kind!r}")
            except ProtocolError as exc:
                await ws.send(_error(exc.code, exc.detail))
                if exc.fatal:
                    await ws.close()
                    return

    @staticmethod
    def _parse(raw):
        try:
            msg = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ProtocolError("ORDER", f"message is not valid JSON: {exc}",
                                fatal=True) from exc
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            raise ProtocolError("ORDER", "message must be an object with a "
                                "string 'type'", fatal=True)
        return msg["type"], msg

    # -- plain-HTTP side: health check + optional static UI -------------------

    def process_request(self, connection, request):
        if "websocket" in request.headers.get("Upgrade", "").lower():
            return None
        path = request.path.split("?", 1)[0]
        if path == "/healthz":
            return connection.respond(200, "ok\n")
        if self.ui_dir is None:
            return connection.respond(404, "gestigo gesture service: "
                                      "connect over WebSocket, or start with --ui\n")
        return self._serve_static(connection, path)

    def _serve_static(self, connection, path: str):
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not target.is_relative_to(self.ui_dir):
            return connection.respond(403, "forbidden\n")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return connection.respond(404, "not found\n")
        body = target.read_bytes()
        headers = Headers()
        headers["Content-Type"] = _CONTENT_TYPES.get(target.suffix.lower(),
                                                     "application/octet-stream")
        headers["Content-Length"] = str(len(body))
        return Response(200, "OK", headers, body)


def open_server(service: GestureService, host: str = "127.0.0.1", port: int = 0):
    """Async context manager for a live server; port 0 picks a free port."""
    return serve(service.handle_session, host, port,
                 process_request=service.process_request)


def run_server(service: GestureService, bind: str = "127.0.0.1:8765") -> None:
    """Serve until interrupted (the CLI `serve` entry point)."""
    host, port = parse_bind(bind)

    async def _main():
        async with open_server(service, host, port) as server:
            actual = server.sockets[0].getsockname()
            service._log(f"listening on ws://{actual[0]}:{actual[1]}")
            await asyncio.get_running_loop().create_future()

    try:
        asyncio.run(_main())
    except KeyboardInterrupt:
        pass
    finally:
        service.close()


# -- recorded gestures + replay client ----------------------------------------

def write_replay_file(seq: SkeletonSequence, path, fps: float = DEFAULT_REPLAY_FPS) -> None:
    """Save a sequence as a wire-format recording (frame timestamps at fps)."""
    if fps <= 0:
        raise ArgumentError(f"fps must be positive, got {fps}")
    frames = [{"t_ms": round(i * 1000.0 / fps),
               "xyz": [float(v) for v in frame.reshape(-1)]}
              for i, frame in enumerate(seq.frames)]
    doc = {
        "version": PROTOCOL_VERSION,
        "joints": seq.schema.joint_count,
        "fingertips": list(seq.schema.fingertip_indices),
        "label": seq.label,
        "source": seq.source_path,
        "frames": frames,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def read_replay_file(path) -> dict:
    """Load + sanity-check a recorded gesture; returns the raw document."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f"cannot read replay file {path}: {exc}") from exc
    for key in ("version", "joints", "frames"):
        if key not in doc:
            raise ArgumentError(f"replay file {path} lacks {key!r}")
    if doc["version"] != PROTOCOL_VERSION:
        raise ArgumentError(f"replay file version {doc['version']}, "
                            f"expected {PROTOCOL_VERSION}")
    if doc["joints"] not in SCHEMAS_BY_JOINT_COUNT:
        raise ArgumentError(f"replay file joint count {doc['joints']} has no schema")
    want = 3 * doc["joints"]
    for i, fr in enumerate(doc["frames"]):
        if "t_ms" not in fr or len(fr.get("xyz", ())) != want:
            raise ArgumentError(f"replay frame {i} malformed (need t_ms + {want} floats)")
    return doc


def replay_sequence(doc: dict) -> SkeletonSequence:
    """The offline view of a recording: its frames as a SkeletonSequence."""
    schema = SCHEMAS_BY_JOINT_COUNT[doc["joints"]]
    stacked = np.array([fr["xyz"] for fr in doc["frames"]],
                       dtype=np.float64).reshape(-1, schema.joint_count, 3)
    return SkeletonSequence(frames=stacked, schema=schema,
                            label=doc.get("label"),
                            source_path=str(doc.get("source", "")))


async def replay(uri: str, doc: dict, fps: float = DEFAULT_REPLAY_FPS,
                 timeout: float = 60.0) -> dict:
    """Stream a recorded gesture to a server; returns the prediction message.

    ``fps`` paces the frame messages (0 disables pacing for tests). Any
    server-side error message or transport failure raises TransportError.
    """
    schema = SCHEMAS_BY_JOINT_COUNT[doc["joints"]]
    try:
        ws = await connect(uri, open_timeout=timeout)
    except GestigoError:
        raise
    except Exception as exc:
        raise TransportError(f"cannot connect to {uri}: {exc}") from exc

    async def expect(kind: str) -> dict:
        raw = await asyncio.wait_for(ws.recv(), timeout)
        msg = json.loads(raw)
        if msg.get("type") == "error":
            raise TransportError(f"server error {msg.get('code')}: {msg.get('detail')}")
        if msg.get("type") != kind:
            raise TransportError(f"expected {kind!r} from server, got {msg.get('type')!r}")
        return msg

    try:
        await ws.send(_message(type="hello", version=PROTOCOL_VERSION,
                               schema={"joints": schema.joint_count,
                                       "fingertips": list(schema.fingertip_indices)}))
        await expect("ready")
        await ws.send(_message(type="start"))
        for fr in doc["frames"]:
            await ws.send(_message(type="frame", t_ms=fr["t_ms"], xyz=fr["xyz"]))
            if fps:
                await asyncio.sleep(1.0 / fps)
        await ws.send(_message(type="stop"))
        return await expect("prediction")
    except (ConnectionClosed, asyncio.TimeoutError) as exc:
        raise TransportError(f"connection to {uri} failed mid-replay: {exc}") from exc
    finally:
        await ws.close()


def replay_client(path, uri: str, fps: float = DEFAULT_REPLAY_FPS,
                  timeout: float = 60.0) -> dict:
    """Synchronous wrapper: read a recording, replay it, return the prediction."""
    doc = read_replay_file(path)
    return asyncio.run(replay(uri, doc, fps=fps, timeout=timeout))
