"""Token-averaged cosine similarity between layer representations.

Every token contributes the full N x N matrix of inner products between its
normalized per-layer hidden states; the similarity matrix is the mean of
those contributions over the whole calibration stream. Accumulation happens
in float64 (storage is float32, but sums over ~10^5 tokens of values near 1
lose digits in single precision) and is an associative reduction: shards may
be accumulated independently and merged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, DumpFormatError, EmptyAccumulatorError

DEFAULT_EPSILON = 1e-8


def normalize_tokens(vectors: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Scale each row (last axis) to v / (||v|| + epsilon); zero rows stay zero.

    Accepts a single token slice (N, d) or a batch (T, N, d).
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    arr = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    denom = norms + epsilon
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, arr / np.where(denom > 0, denom, 1.0), 0.0)
    return out


def _mirror_upper(matrix: np.ndarray) -> np.ndarray:
    # Copy the i <= j triangle onto the lower one: exact symmetry by construction.
    upper = np.triu(matrix)
    return upper + np.triu(matrix, 1).T


@dataclass(frozen=True)
class SimilarityMatrix:
    """Finalized N x N mean cosine similarity with its provenance metadata."""

    n_layers: int
    entries: np.ndarray
    token_total: int
    epsilon: float

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.shape != (self.n_layers, self.n_layers):
            raise DimensionMismatchError(
                f"entries shape {entries.shape} does not match n_layers {self.n_layers}"
            )
        if not np.isfinite(entries).all():
            raise ValueError("similarity entries must be finite")
        entries = entries.copy()
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"S:{self.n_layers}:{self.token_total}:{self.epsilon!r}:".encode())
        h.update(np.ascontiguousarray(self.entries, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_json_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "epsilon": self.epsilon,
            "token_total": self.token_total,
            "rows": [list(row) for row in self.entries.tolist()],
        }

    def save(self, json_path: str | Path, bin_path: str | Path | None = None) -> None:
        """Write the JSON form and (optionally) the raw float64 sidecar."""
        Path(json_path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")
        if bin_path is not None:
            Path(bin_path).write_bytes(np.ascontiguousarray(self.entries, dtype="<f8").tobytes())

    @classmethod
    def load(cls, json_path: str | Path, bin_path: str | Path | None = None) -> "SimilarityMatrix":
        """Reload from JSON; if the binary sidecar is given it supplies the entries bit-exactly."""
        try:
            doc = json.loads(Path(json_path).read_text())
            n = int(doc["n_layers"])
            epsilon = float(doc["epsilon"])
            token_total = int(doc["token_total"])
            rows = np.asarray(doc["rows"], dtype=np.float64)
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise DumpFormatError(f"malformed similarity JSON {json_path}: {exc}") from exc
        if rows.shape != (n, n):
            raise DumpFormatError(f"similarity JSON rows have shape {rows.shape}, expected ({n}, {n})")
        if bin_path is not None and Path(bin_path).exists():
            raw = np.frombuffer(Path(bin_path).read_bytes(), dtype="<f8")
            if raw.size != n * n:
                raise DumpFormatError(f"similarity sidecar holds {raw.size} values, expected {n * n}")
            rows = raw.reshape(n, n)
        return cls(n_layers=n, entries=rows, token_total=token_total, epsilon=epsilon)


class SimilarityAccumulator:
    """Streaming accumulator for the similarity matrix.

    Holds the running float64 sum of per-token normalized inner products plus
    the token count. ``merge`` of two accumulators over disjoint shards equals
    accumulation over the concatenated stream (up to float reduction order).
    """

    def __init__(self, n_layers: int, epsilon: float = DEFAULT_EPSILON):
        if n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {n_layers}")
        if epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        self.n_layers = n_layers
        self.epsilon = epsilon
        self.partial = np.zeros((n_layers, n_layers), dtype=np.float64)
        self.token_count = 0

    def add(self, token_slice: np.ndarray) -> "SimilarityAccumulator":
        """Accumulate one (n_layers, d) token slice."""
        arr = np.asarray(token_slice)
        if arr.ndim != 2 or arr.shape[0] != self.n_layers:
            raise DimensionMismatchError(
                f"token slice shape {arr.shape} does not match n_layers {self.n_layers}"
            )
        normalized = normalize_tokens(arr, self.epsilon)
        self.partial += _mirror_upper(normalized @ normalized.T)
        self.token_count += 1
        return self

    def add_batch(self, tokens: np.ndarray) -> "SimilarityAccumulator":
        """Accumulate a (T, n_layers, d) batch in one vectorized step."""
        arr = np.asarray(tokens)
        if arr.ndim != 3 or arr.shape[1] != self.n_layers:
            raise DimensionMismatchError(
                f"token batch shape {arr.shape} does not match n_layers {self.n_layers}"
            )
        if arr.shape[0] == 0:
            return self
        normalized = normalize_tokens(arr, self.epsilon)
        summed = np.tensordot(normalized, normalized, axes=([0, 2], [0, 2]))
        self.partial += _mirror_upper(summed)
        self.token_count += arr.shape[0]
        return self

    def merge(self, other: "SimilarityAccumulator") -> "SimilarityAccumulator":
        """Fold another shard into this accumulator (elementwise sum)."""
        if other.n_layers != self.n_layers:
            raise DimensionMismatchError(
                f"cannot merge accumulators with n_layers {self.n_layers} and {other.n_layers}"
            )
        if other.epsilon != self.epsilon:
            raise ValueError(
                f"cannot merge accumulators with different epsilon ({self.epsilon} vs {other.epsilon})"
            )
        self.partial += other.partial
        self.token_count += other.token_count
        return self

    def finalize(self) -> SimilarityMatrix:
        if self.token_count < 1:
            raise EmptyAccumulatorError("cannot finalize an accumulator with zero tokens")
        entries = _mirror_upper(self.partial / self.token_count)
        return SimilarityMatrix(
            n_layers=self.n_layers,
            entries=entries,
            token_total=self.token_count,
            epsilon=self.epsilon,
        )
