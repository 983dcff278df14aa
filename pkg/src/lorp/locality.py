"""Global locality statistics of a similarity matrix.

The off-diagonal mean aggregates all layer pairs (not just near-diagonal
ones); its negative log2 is the locality score. High scores mean similarity
decays quickly with depth, low scores mean redundancy is spread across the
whole stack. The score picks the clustering granularity.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LocalityUndefinedError
from .validation import check_similarity_matrix

# Granularity policy: score >= 1.0 -> 2 clusters, [0.7, 1.0) -> 3, below 0.7 -> 4.
K_COARSE_THRESHOLD = 1.0
K_MEDIUM_THRESHOLD = 0.7
FALLBACK_K = 2


def off_diagonal_mean(s) -> float:
    """Mean of S_ij over all i < j pairs."""
    arr = check_similarity_matrix(s)
    n = arr.shape[0]
    idx = np.triu_indices(n, k=1)
    return float(np.sum(arr[idx]) * 2.0 / (n * (n - 1)))


def rls(off_diag_mean: float) -> float:
    """Locality score: -log2 of the off-diagonal mean (must be positive)."""
    if not math.isfinite(off_diag_mean):
        raise ValueError(f"off-diagonal mean must be finite, got {off_diag_mean}")
    if off_diag_mean <= 0:
        raise LocalityUndefinedError(
            f"off-diagonal mean {off_diag_mean} is not positive; locality score undefined"
        )
    return -math.log2(off_diag_mean)


def recommend_k(rls_value: float) -> int:
    if not math.isfinite(rls_value):
        raise ValueError(f"locality score must be finite, got {rls_value}")
    if rls_value >= K_COARSE_THRESHOLD:
        return 2
    if rls_value >= K_MEDIUM_THRESHOLD:
        return 3
    return 4


def distance_profile(s) -> list[tuple[float, float]]:
    """Mean similarity at each layer distance, x normalized to (0, 1].

    Point delta has x = delta / (N - 1) and y = mean of S_ij over all pairs
    with |i - j| = delta.
    """
    arr = check_similarity_matrix(s)
    n = arr.shape[0]
    profile = []
    for delta in range(1, n):
        diag = np.diagonal(arr, offset=delta)
        profile.append((delta / (n - 1), float(np.mean(diag))))
    return profile


@dataclass(frozen=True)
class LocalityReport:
    off_diag_mean: float
    rls: float | None
    recommended_k: int
    distance_profile: list = field(default_factory=list)
    warnings: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "off_diag_mean": self.off_diag_mean,
            "rls": self.rls,
            "recommended_k": self.recommended_k,
            "distance_profile": [[x, y] for x, y in self.distance_profile],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def build_report(s) -> LocalityReport:
    """Compute the full locality report for a similarity matrix.

    When the off-diagonal mean is not positive the score is undefined; the
    report falls back to the coarsest granularity (K=2) with a warning, since
    a conservative partition is the safest default.
    """
    mean = off_diagonal_mean(s)
    notes: list[str] = []
    try:
        score: float | None = rls(mean)
        k = recommend_k(score)
    except LocalityUndefinedError:
        score = None
        k = FALLBACK_K
        msg = f"off-diagonal mean {mean:.6g} is not positive; locality score undefined, falling back to K={FALLBACK_K}"
        notes.append(msg)
        warnings.warn(msg)
    return LocalityReport(
        off_diag_mean=mean,
        rls=score,
        recommended_k=k,
        distance_profile=distance_profile(s),
        warnings=tuple(notes),
    )
