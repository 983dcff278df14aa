"""LADF v1: a streamable binary store for per-token, per-layer hidden states.

Byte layout (all integers little-endian):

    header   : magic b"LADF" | version u32 | n_layers u32 | d_model u32
               | dtype_tag u8 | 3 reserved zero bytes            (20 bytes)
    chunk    : token_count u32 | payload                         (repeated)
    payload  : token_count records, one record per token position,
               each record = n_layers * d_model float32 values in
               layer-major order (layer 1's vector first).

dtype_tag 0 is the only value defined in v1 (IEEE float32, little-endian).
The record for token t, layer l holds the hidden state entering block l at
position t. Readers reject non-finite values instead of skipping tokens:
a silently dropped token would bias every similarity statistic computed
downstream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatchError, DumpFormatError

MAGIC = b"LADF"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIIIB3s")
_CHUNK_HEADER = struct.Struct("<I")

HEADER_SIZE = _HEADER.size  # 20
CHUNK_HEADER_SIZE = _CHUNK_HEADER.size  # 4

_PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class DumpHeader:
    """Fixed-size file header naming the tensor geometry of every chunk."""

    n_layers: int
    d_model: int
    dtype_tag: int = DTYPE_F32
    version: int = VERSION

    def __post_init__(self) -> None:
        if self.version != VERSION:
            raise DumpFormatError(f"unsupported LADF version {self.version}")
        if self.dtype_tag != DTYPE_F32:
            raise DumpFormatError(f"unsupported dtype tag {self.dtype_tag} (v1 defines only 0)")
        if self.n_layers < 3:
            raise ValueError(
                f"n_layers must be >= 3 so boundary exclusion leaves an eligible layer, got {self.n_layers}"
            )
        if self.d_model < 1:
            raise ValueError(f"d_model must be >= 1, got {self.d_model}")

    @property
    def record_values(self) -> int:
        return self.n_layers * self.d_model

    @property
    def record_bytes(self) -> int:
        return self.record_values * _PAYLOAD_DTYPE.itemsize

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.n_layers, self.d_model, self.dtype_tag, b"\x00" * 3)

    @classmethod
    def unpack(cls, raw: bytes) -> "DumpHeader":
        if len(raw) < HEADER_SIZE:
            raise DumpFormatError(f"truncated header: {len(raw)} bytes, expected {HEADER_SIZE}")
        magic, version, n_layers, d_model, dtype_tag, _reserved = _HEADER.unpack(raw[:HEADER_SIZE])
        if magic != MAGIC:
            raise DumpFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise DumpFormatError(f"unsupported LADF version {version}")
        if dtype_tag != DTYPE_F32:
            raise DumpFormatError(f"unsupported dtype tag {dtype_tag}")
        try:
            return cls(n_layers=n_layers, d_model=d_model, dtype_tag=dtype_tag, version=version)
        except ValueError as exc:
            raise DumpFormatError(str(exc)) from exc


@dataclass(frozen=True)
class ActivationDump:
    """In-memory dump: header plus one (T, N, d) float32 array per sample."""

    header: DumpHeader
    chunks: tuple = field(default_factory=tuple)

    @property
    def total_tokens(self) -> int:
        return sum(chunk.shape[0] for chunk in self.chunks)

    def write(self, sink: BinaryIO) -> int:
        return write_dump(self.header, self.chunks, sink)


def _check_chunk(chunk: np.ndarray, header: DumpHeader) -> np.ndarray:
    arr = np.asarray(chunk)
    if arr.ndim != 3 or arr.shape[1] != header.n_layers or arr.shape[2] != header.d_model:
        raise DimensionMismatchError(
            f"chunk shape {arr.shape} does not match header (T, {header.n_layers}, {header.d_model})"
        )
    if arr.shape[0] < 1:
        raise ValueError("chunk must contain at least one token")
    return np.ascontiguousarray(arr, dtype=_PAYLOAD_DTYPE)


def write_dump(header: DumpHeader, samples: Iterable[np.ndarray], sink: BinaryIO) -> int:
    """Write a LADF v1 stream; returns the number of bytes written.

    Each element of ``samples`` is a (T_m, n_layers, d_model) array; values
    are stored as little-endian float32 exactly as given (after cast).
    """
    written = sink.write(header.pack())
    for chunk in samples:
        arr = _check_chunk(chunk, header)
        written += sink.write(_CHUNK_HEADER.pack(arr.shape[0]))
        written += sink.write(arr.tobytes())
    return written


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    raw = source.read(n)
    if len(raw) != n:
        raise DumpFormatError(f"truncated dump: expected {n} bytes for {what}, got {len(raw)}")
    return raw


def _parse_record(raw: bytes, header: DumpHeader, token_index: int) -> np.ndarray:
    vec = np.frombuffer(raw, dtype=_PAYLOAD_DTYPE).reshape(header.n_layers, header.d_model)
    if not np.isfinite(vec).all():
        raise DumpFormatError(f"non-finite value in record for token {token_index}")
    return vec


def read_dump(source: BinaryIO) -> tuple[DumpHeader, Iterator[np.ndarray]]:
    """Open a LADF stream: returns the header and a lazy token-slice iterator.

    Each yielded slice is an (n_layers, d_model) float32 array for one token
    position, in file order. Only one record is materialized at a time; the
    iterator holds no reference to previously yielded slices.
    """
    header = DumpHeader.unpack(_read_exact(source, HEADER_SIZE, "header"))

    def slices() -> Iterator[np.ndarray]:
        token_index = 0
        while True:
            raw = source.read(CHUNK_HEADER_SIZE)
            if len(raw) == 0:
                return
            if len(raw) != CHUNK_HEADER_SIZE:
                raise DumpFormatError("truncated dump: partial chunk header")
            (token_count,) = _CHUNK_HEADER.unpack(raw)
            if token_count < 1:
                raise DumpFormatError("chunk with zero tokens")
            for _ in range(token_count):
                record = _read_exact(source, header.record_bytes, f"token {token_index}")
                yield _parse_record(record, header, token_index)
                token_index += 1

    return header, slices()


def read_dump_chunks(source: BinaryIO) -> tuple[DumpHeader, Iterator[np.ndarray]]:
    """Like read_dump but yields whole (T, n_layers, d_model) sample chunks.

    Faster path for bulk consumers; peak memory is one chunk instead of one
    token slice. Applies the same finiteness and truncation checks.
    """
    header = DumpHeader.unpack(_read_exact(source, HEADER_SIZE, "header"))

    def chunks() -> Iterator[np.ndarray]:
        while True:
            raw = source.read(CHUNK_HEADER_SIZE)
            if len(raw) == 0:
                return
            if len(raw) != CHUNK_HEADER_SIZE:
                raise DumpFormatError("truncated dump: partial chunk header")
            (token_count,) = _CHUNK_HEADER.unpack(raw)
            if token_count < 1:
                raise DumpFormatError("chunk with zero tokens")
            payload = _read_exact(source, token_count * header.record_bytes, "chunk payload")
            arr = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(
                token_count, header.n_layers, header.d_model
            )
            if not np.isfinite(arr).all():
                raise DumpFormatError("non-finite value in chunk payload")
            yield arr

    return header, chunks()


def stream_dump_chunks(paths: Sequence[str]) -> tuple[DumpHeader, Iterator[np.ndarray]]:
    """Logically concatenate several dump files; headers must agree on geometry."""
    if not paths:
        raise ValueError("at least one dump path is required")
    headers = []
    for path in paths:
        with open(path, "rb") as fh:
            headers.append(DumpHeader.unpack(_read_exact(fh, HEADER_SIZE, "header")))
    first = headers[0]
    for path, header in zip(paths[1:], headers[1:]):
        if (header.n_layers, header.d_model) != (first.n_layers, first.d_model):
            raise DumpFormatError(
                f"dump {path} has geometry ({header.n_layers}, {header.d_model}), "
                f"expected ({first.n_layers}, {first.d_model})"
            )

    def chunks() -> Iterator[np.ndarray]:
        for path in paths:
            with open(path, "rb") as fh:
                _, it = read_dump_chunks(fh)
                yield from it

    return first, chunks()
