"""DIMDL: a named-tensor container for model parameters.

Layout (all integers little-endian)::

    b"DIMDL" | u16 version | u32 header length | JSON header | f32 payloads

The JSON header is ``{"tensors": [{"name", "dtype": "f32", "shape"}, ...],
"meta": {...}}``; payloads are row-major and concatenated in header order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"DIMDL"
VERSION = 1


def save_tensors(path, tensors: dict, meta: dict | None = None) -> None:
    entries = [{"name": k, "dtype": "f32", "shape": list(v.shape)} for k, v in tensors.items()]
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header)))
        fh.write(header)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_tensors(path) -> tuple[dict, dict]:
    """Return (ordered name -> float32 array, meta)."""
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise FormatError(f"{path}: not a DIMDL file")
    version, hlen = struct.unpack_from("<HI", raw, 5)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported DIMDL version {version}")
    off = 11
    try:
        header = json.loads(raw[off:off + hlen])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None
    off += hlen
    tensors = {}
    for entry in header["tensors"]:
        if entry["dtype"] != "f32":
            raise FormatError(f"{path}: unsupported dtype {entry['dtype']!r} for {entry['name']}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        if off + 4 * count > len(raw):
            raise FormatError(f"{path}: truncated payload for {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)
        off += 4 * count
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return tensors, header.get("meta", {})
