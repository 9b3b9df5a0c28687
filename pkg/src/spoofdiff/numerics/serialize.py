"""Binary tensor blob format used inside checkpoints.

Layout (little-endian): magic "DSPT", format version (u32), rank (u32),
shape entries (u64 each), then raw float32 data.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

TENSOR_MAGIC = b"DSPT"
TENSOR_VERSION = 1


def write_tensor(fh: BinaryIO, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4")
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<I", TENSOR_VERSION))
    fh.write(struct.pack("<I", data.ndim))
    for n in data.shape:
        fh.write(struct.pack("<Q", n))
    fh.write(data.tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != TENSOR_MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}, expected {TENSOR_MAGIC!r}")
    version, = struct.unpack("<I", fh.read(4))
    if version != TENSOR_VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    rank, = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise ValueError("truncated tensor data")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
