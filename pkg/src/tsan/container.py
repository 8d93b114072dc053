"""Single-file tensor container used for checkpoints and encoded datasets.

Layout: one JSON header line, ``\\n``, then the concatenated little-endian
float32 blobs::

    {"version": 1, "params": [{"path": ..., "shape": [...], "offset": 0, "len": 6}, ...], ...}

``offset`` is the byte offset of a blob measured from the first byte after
the header newline and ``len`` is its element count. Extra top-level header
keys (``config``, ``kind`` ...) are carried through untouched.
"""

from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

from .errors import DataFormatError

VERSION = 1
_LE_F32 = np.dtype("<f4")


def encode(entries: Mapping[str, np.ndarray], extra: Mapping | None = None) -> bytes:
    index = []
    blobs = []
    offset = 0
    for path, arr in entries.items():
        arr = np.asarray(arr)
        blob = np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()
        index.append({"path": path, "shape": list(arr.shape), "offset": offset, "len": int(arr.size)})
        blobs.append(blob)
        offset += len(blob)
    header = {"version": VERSION, "params": index}
    if extra:
        for key, value in extra.items():
            if key in header:
                raise ValueError(f"reserved header key {key!r}")
            header[key] = value
    head = json.dumps(header, separators=(",", ":")).encode("utf-8")
    if b"\n" in head:
        raise ValueError("header must serialize to a single line")
    return head + b"\n" + b"".join(blobs)


def decode(raw: bytes) -> tuple[dict[str, np.ndarray], dict]:
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataFormatError("container has no header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"bad container header: {exc}") from exc
    if header.get("version") != VERSION:
        raise DataFormatError(f"unsupported container version {header.get('version')!r}")
    body = memoryview(raw)[newline + 1:]
    entries = {}
    for item in header["params"]:
        start, count = item["offset"], item["len"]
        end = start + 4 * count
        if end > len(body):
            raise DataFormatError(f"blob for {item['path']!r} runs past end of file")
        arr = np.frombuffer(body[start:end], dtype=_LE_F32).astype(np.float32)
        entries[item["path"]] = arr.reshape(item["shape"])
    return entries, header


def save(path: str | os.PathLike, entries: Mapping[str, np.ndarray], extra: Mapping | None = None) -> int:
    """Write a container; returns the file size in bytes."""
    data = encode(entries, extra)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        return decode(fh.read())
