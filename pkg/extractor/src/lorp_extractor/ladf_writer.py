"""Minimal writer for the LADF v1 activation-dump wire format.

Layout: 20-byte header (magic b"LADF", version u32=1, n_layers u32,
d_model u32, dtype_tag u8=0 for little-endian float32, 3 zero bytes), then
repeated chunks of a token_count u32 followed by token_count records of
n_layers * d_model float32 values in layer-major order.

Implemented against the published byte layout on purpose: the format is the
contract between this bridge and the planner, so an independent writer keeps
the two sides honest.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"LADF"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIIIB3s")
_CHUNK_HEADER = struct.Struct("<I")


def write_header(sink: BinaryIO, n_layers: int, d_model: int) -> int:
    if n_layers < 3:
        raise ValueError(f"LADF requires n_layers >= 3, got {n_layers}")
    if d_model < 1:
        raise ValueError(f"LADF requires d_model >= 1, got {d_model}")
    return sink.write(_HEADER.pack(MAGIC, VERSION, n_layers, d_model, DTYPE_F32, b"\x00" * 3))


def write_chunk(sink: BinaryIO, records: np.ndarray) -> int:
    """Write one sample chunk from a (token_count, n_layers, d_model) array."""
    arr = np.ascontiguousarray(records, dtype="<f4")
    if arr.ndim != 3 or arr.shape[0] < 1:
        raise ValueError(f"chunk must be a non-empty (T, n_layers, d_model) array, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("chunk contains non-finite values")
    written = sink.write(_CHUNK_HEADER.pack(arr.shape[0]))
    return written + sink.write(arr.tobytes())
