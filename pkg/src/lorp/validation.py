"""Input validation helpers shared by the estimators, the CLI, and `lorp check`."""

from __future__ import annotations

import numpy as np

from .similarity import SimilarityMatrix

SYMMETRY_ATOL = 1e-9
VALUE_SLACK = 1e-9


def as_similarity_entries(s) -> np.ndarray:
    """Accept a SimilarityMatrix or a raw array; return the float64 entries."""
    if isinstance(s, SimilarityMatrix):
        return np.asarray(s.entries, dtype=np.float64)
    return np.asarray(s, dtype=np.float64)


def check_similarity_matrix(X, *, min_layers: int = 2) -> np.ndarray:
    """Validate an N x N cosine-similarity matrix and return it as float64.

    Checks: square 2-D, at least ``min_layers`` rows, finite, symmetric within
    1e-9, and entries within [-1, 1] up to a small numeric slack.
    """
    arr = as_similarity_entries(X)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"similarity matrix must be square, got shape {arr.shape}")
    if arr.shape[0] < min_layers:
        raise ValueError(f"similarity matrix needs at least {min_layers} layers, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValueError("similarity matrix contains non-finite entries")
    if np.max(np.abs(arr - arr.T)) > SYMMETRY_ATOL:
        raise ValueError("similarity matrix is not symmetric within 1e-9")
    if np.max(np.abs(arr)) > 1.0 + VALUE_SLACK:
        raise ValueError("similarity entries exceed [-1, 1] beyond numeric slack")
    return arr


def check_affinity_matrix(X, *, min_layers: int = 2) -> np.ndarray:
    """Validate a symmetric non-negative affinity matrix, return float64."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"affinity matrix must be square, got shape {arr.shape}")
    if arr.shape[0] < min_layers:
        raise ValueError(f"affinity matrix needs at least {min_layers} layers, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValueError("affinity matrix contains non-finite entries")
    if np.max(np.abs(arr - arr.T)) > SYMMETRY_ATOL:
        raise ValueError("affinity matrix is not symmetric within 1e-9")
    if arr.min() < -VALUE_SLACK:
        raise ValueError("affinity entries must be non-negative")
    return np.clip(arr, 0.0, None)


def invariant_battery(s) -> list[tuple[str, bool, str]]:
    """Run the full similarity-matrix invariant battery.

    Returns (name, passed, detail) triples; diagonal depression is reported as a
    soft check because it is only guaranteed when epsilon is small relative to
    the stored vector norms.
    """
    arr = as_similarity_entries(s)
    results: list[tuple[str, bool, str]] = []

    def record(name: str, passed: bool, detail: str) -> None:
        results.append((name, bool(passed), detail))

    square = arr.ndim == 2 and arr.shape[0] == arr.shape[1] and arr.shape[0] >= 2
    record("square", square, f"shape {arr.shape}")
    if not square:
        return results
    finite = bool(np.isfinite(arr).all())
    record("finite", finite, "all entries finite" if finite else "non-finite entries present")
    if not finite:
        return results
    asym = float(np.max(np.abs(arr - arr.T)))
    record("symmetric", asym <= SYMMETRY_ATOL, f"max |S_ij - S_ji| = {asym:.3e}")
    peak = float(np.max(np.abs(arr)))
    record("bounded", peak <= 1.0 + VALUE_SLACK, f"max |S_ij| = {peak:.12f}")
    diag_min = float(np.min(np.diag(arr)))
    record("diagonal", diag_min >= 1.0 - 1e-3, f"min S_ii = {diag_min:.6f} (soft: assumes small epsilon)")
    return results
