"""Shared binary checkpoint format for all learned modules.

Layout (all integers little-endian):

    magic "SNTN" | u32 version | u32 entry count
    per entry: u32 name length | name (UTF-8) | u32 rows | u32 cols
               | rows*cols little-endian float64, row-major

Round-trips are bit-exact; entry order is preserved.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SNTN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, entries: dict[str, np.ndarray]):
    """Write named 2-D float64 matrices. 1-D arrays are stored as one row."""
    path = Path(path)
    blobs = []
    for name, arr in entries.items():
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2:
            raise CheckpointError(f"entry {name!r} must be 1-D or 2-D, got shape {arr.shape}")
        nb = name.encode("utf-8")
        blobs.append(struct.pack("<I", len(nb)) + nb
                     + struct.pack("<II", a.shape[0], a.shape[1])
                     + a.astype("<f8").tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blobs)))
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        rows, cols = struct.unpack_from("<II", raw, off)
        off += 8
        n = rows * cols
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(rows, cols)
        off += 8 * n
        out[name] = arr.astype(np.float64)
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return out
