"""Flat binary checkpoint: magic, JSON header length, JSON header, raw tensors.

The header lists every tensor as ``{"name", "dims", "offset"}`` (offset in
bytes from the start of the data section) plus free-form metadata.  Values
are little-endian float64 in row-major order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DNMCKPT1"


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    index, offset, blobs = [], 0, []
    for name in tensors:
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        index.append({"name": name, "dims": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "tensors": index}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["dims"])) if entry["dims"] else 1
        start = base + entry["offset"]
        arr = np.frombuffer(raw[start:start + 8 * n], dtype="<f8").reshape(entry["dims"])
        tensors[entry["name"]] = arr.astype(np.float64)
    return tensors, header["meta"]
