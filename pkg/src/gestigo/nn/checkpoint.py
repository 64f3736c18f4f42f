"""Versioned binary checkpoint container.

Layout (all integers little-endian uint32):

    magic b"GSTG" | version | config-JSON (length-prefixed UTF-8)
    | spec count | per spec: length-prefixed JSON record
    | tensor count | per tensor: ndim, dims..., raw float32 data

Tensors are stored in declaration order — parameters followed by
persistent buffers per layer — and round-trip bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import NotFoundError, ParseError

MAGIC = b"GSTG"
VERSION = 1


def write_checkpoint(path, config: dict, specs: list, tensors: list) -> None:
    path = Path(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    _put_json(blob, config)
    blob += struct.pack("<I", len(specs))
    for spec in specs:
        _put_json(blob, spec)
    blob += struct.pack("<I", len(tensors))
    for arr in tensors:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        blob += struct.pack("<I", arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<I", d)
        blob += arr.astype("<f4", copy=False).tobytes()
    path.write_bytes(bytes(blob))


def read_checkpoint(path):
    """Returns (config, specs, tensors); tensors are float32 arrays."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise NotFoundError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise ParseError("bad checkpoint magic", path)
    version = r.u32()
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", path)
    config = r.json()
    specs = [r.json() for _ in range(r.u32())]
    tensors = []
    for _ in range(r.u32()):
        ndim = r.u32()
        shape = tuple(r.u32() for _ in range(ndim))
        n = int(np.prod(shape)) if shape else 1
        raw = r.take(4 * n)
        tensors.append(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
    if r.pos != len(data):
        raise ParseError(f"{len(data) - r.pos} trailing bytes in checkpoint", path)
    return config, specs, tensors


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError("truncated checkpoint", self.path)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def json(self):
        n = self.u32()
        try:
            return json.loads(self.take(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad JSON record in checkpoint: {exc}", self.path) from None


def _put_json(blob: bytearray, obj) -> None:
    raw = json.dumps(obj, separators=(",", ":"), sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(raw))
    blob += raw
