"""Binary checkpoint container for named parameter sets.

Layout (all little-endian):

    magic   4 bytes  "THGR"
    version u32
    records until EOF, each:
        name_len u16, name UTF-8, rank u8, dims u32 * rank, data f32 * prod(dims)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict

import numpy as np

from .tensor import Tensor

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError", "MAGIC", "VERSION"]

MAGIC = b"THGR"
VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or truncated."""


def save_checkpoint(path, params: Dict[str, Tensor]) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, p in params.items():
            data = np.ascontiguousarray(p.data, dtype="<f4")
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", data.ndim))
            for d in data.shape:
                f.write(struct.pack("<I", d))
            f.write(data.tobytes())


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    """Read a checkpoint back as name -> float32 array (insertion order kept)."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    out: Dict[str, np.ndarray] = {}
    off = 8
    n = len(blob)
    while off < n:
        if off + 2 > n:
            raise CheckpointError(f"{path}: truncated record header at byte {off}")
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        if off + name_len + 1 > n:
            raise CheckpointError(f"{path}: truncated name at byte {off}")
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        rank = blob[off]
        off += 1
        if off + 4 * rank > n:
            raise CheckpointError(f"{path}: truncated dims at byte {off}")
        dims = struct.unpack_from(f"<{rank}I", blob, off) if rank else ()
        off += 4 * rank
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = 4 * count
        if off + nbytes > n:
            raise CheckpointError(f"{path}: truncated data for {name!r} at byte {off}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(dims)
        out[name] = arr.copy()
        off += nbytes
    return out
