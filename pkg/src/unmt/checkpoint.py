"""Binary checkpoint files.

Layout (all integers little-endian)::

    b"UNMT"  u32 version  u32 n_records
    n_records x { u32 name_len, name (UTF-8),
                  u8 tag_len, dtype tag (ASCII, "f32"),
                  u32 rank, rank x u64 dims,
                  row-major payload }
    u64 len, config snapshot (UTF-8 ``key = value`` lines)
    u64 len, state (UTF-8 JSON: counters, RNG state, history)
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"UNMT"
VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "i64": np.dtype("<i8")}
_TAGS = {v: k for k, v in _DTYPES.items()}


def write_checkpoint(path, records, config_text, state):
    """Write ``records`` (name -> array) plus the two trailers atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, arr in records.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f4")
        else:
            arr = arr.astype("<i8")
        tag = _TAGS[arr.dtype].encode("ascii")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack("<B", len(tag)) + tag)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes(order="C"))
    for text in (config_text, json.dumps(state, sort_keys=True)):
        b = text.encode("utf-8")
        chunks.append(struct.pack("<Q", len(b)) + b)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)
    return path


def read_checkpoint(path):
    """Return ``(records, config_text, state)``."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)", path)
    pos = 4

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        version, n = take("<II")
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", path)
        records = {}
        for _ in range(n):
            (ln,) = take("<I")
            name = buf[pos:pos + ln].decode("utf-8")
            pos += ln
            (lt,) = take("<B")
            tag = buf[pos:pos + lt].decode("ascii")
            pos += lt
            if tag not in _DTYPES:
                raise FormatError(f"unknown dtype tag {tag!r}", path)
            (rank,) = take("<I")
            shape = take(f"<{rank}Q") if rank else ()
            dt = _DTYPES[tag]
            count = int(np.prod(shape)) if shape else 1
            records[name] = np.frombuffer(buf, dtype=dt, count=count, offset=pos).reshape(shape).copy()
            pos += count * dt.itemsize
        texts = []
        for _ in range(2):
            (ln,) = take("<Q")
            texts.append(buf[pos:pos + ln].decode("utf-8"))
            pos += ln
    except struct.error:
        raise FormatError("truncated checkpoint", path) from None
    return records, texts[0], json.loads(texts[1])
