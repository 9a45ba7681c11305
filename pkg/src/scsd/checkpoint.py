"""Binary model checkpoints.

Layout: 8-byte magic, u32 format version, u32 JSON metadata length, metadata
(model dimensions, config snapshot, fusion state), u32 tensor count, then per
tensor: u32 name length, UTF-8 name, u32 rank, u32 dims, little-endian
float64 data. Everything little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataLoadError

MAGIC = b"SCSDCKPT"
VERSION = 1


def _write_tensor(fh, name: str, values: np.ndarray):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", values.ndim))
    fh.write(struct.pack(f"<{values.ndim}I", *values.shape))
    fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def _read_tensor(fh):
    (name_len,) = struct.unpack("<I", fh.read(4))
    name = fh.read(name_len).decode("utf-8")
    (rank,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(dims)
    return name, data.astype(np.float64)


def save_checkpoint(path, meta: dict, tensors: dict) -> None:
    payload = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            _write_tensor(fh, name, np.asarray(tensors[name], dtype=np.float64))


def load_checkpoint(path):
    """Returns (meta dict, {name: float64 array})."""
    path = Path(path)
    if not path.exists():
        raise DataLoadError(f"missing checkpoint: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise DataLoadError(f"{path.name}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise DataLoadError(f"{path.name}: unsupported version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            name, values = _read_tensor(fh)
            tensors[name] = values
    return meta, tensors
