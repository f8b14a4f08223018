"""Named-parameter checkpoint archive.

Layout: 5-byte magic ``CFCK1``, little-endian u32 manifest length, JSON
manifest (parameter names/shapes in order plus free-form metadata), then the
raw float64 row-major payloads concatenated in manifest order. Writing the
same parameters twice produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

CHECKPOINT_MAGIC = b"CFCK1"


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    manifest = {
        "format": CHECKPOINT_MAGIC.decode(),
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in params.items()],
        "meta": meta or {},
    }
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:5] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {raw[:5]!r}")
    (length,) = struct.unpack_from("<I", raw, 5)
    manifest = json.loads(raw[9:9 + length].decode("utf-8"))
    offset = 9 + length
    params: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(raw):
            raise DataError(f"{path}: truncated payload for parameter {entry['name']}")
        params[entry["name"]] = (
            np.frombuffer(raw, dtype=np.float64, count=count, offset=offset).reshape(shape).copy()
        )
        offset = end
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes after parameters")
    return params, manifest.get("meta", {})
