"""Spectral clustering of layers on the rescaled similarity affinity.

Pipeline: A = (S + 1) / 2, normalized symmetric Laplacian, embedding from the
k smallest eigenvectors with unit-normalized rows, then a fully deterministic
k-means (seeded furthest-first initialization, fixed restart schedule, ties
always broken toward the lower index). Cluster labels are re-indexed by
first-occurrence depth so cluster 1 always starts shallowest. Determinism is
a hard requirement: the same (affinity, k, seed) must reproduce the same
partition byte for byte, because pruning plans are derived from it.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ComputationError
from .similarity import SimilarityMatrix
from .validation import check_affinity_matrix

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
KMEANS_SHIFT_TOL = 1e-10
DEGENERATE_DEGREE = 1e-12


@dataclass(frozen=True)
class AffinityMatrix:
    """Non-negative affinity (S + 1) / 2 plus a hash of the source matrix."""

    entries: np.ndarray
    source_digest: str = ""

    def __post_init__(self) -> None:
        entries = check_affinity_matrix(self.entries)
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @property
    def n_layers(self) -> int:
        return self.entries.shape[0]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"A:{self.n_layers}:{self.source_digest}:".encode())
        h.update(np.ascontiguousarray(self.entries, dtype="<f8").tobytes())
        return h.hexdigest()


def to_affinity(s) -> AffinityMatrix:
    """Entrywise (S + 1) / 2: maps cosine range [-1, 1] onto [0, 1]."""
    if isinstance(s, SimilarityMatrix):
        entries = (np.asarray(s.entries, dtype=np.float64) + 1.0) / 2.0
        return AffinityMatrix(entries=np.clip(entries, 0.0, None), source_digest=s.digest())
    arr = np.asarray(s, dtype=np.float64)
    digest = hashlib.sha256(np.ascontiguousarray(arr, dtype="<f8").tobytes()).hexdigest()
    return AffinityMatrix(entries=np.clip((arr + 1.0) / 2.0, 0.0, None), source_digest=digest)


@dataclass(frozen=True)
class ClusterPartition:
    """Depth-ordered partition of layers 1..N into K non-empty clusters.

    ``assignment[i]`` is the 1-based cluster index of layer i+1; ``clusters``
    lists each cluster's 1-based layer indices in ascending order, with
    min(C_1) < min(C_2) < ... < min(C_K).
    """

    k: int
    assignment: tuple
    clusters: tuple

    def __post_init__(self) -> None:
        n = len(self.assignment)
        if self.k < 1 or self.k > n:
            raise ValueError(f"cluster count {self.k} invalid for {n} layers")
        seen: set[int] = set()
        for ci, members in enumerate(self.clusters, start=1):
            if not members:
                raise ValueError(f"cluster {ci} is empty")
            for layer in members:
                if layer < 1 or layer > n or layer in seen:
                    raise ValueError(f"clusters are not a disjoint cover of 1..{n}")
                seen.add(layer)
                if self.assignment[layer - 1] != ci:
                    raise ValueError(f"assignment and clusters disagree on layer {layer}")
        if len(seen) != n or len(self.clusters) != self.k:
            raise ValueError(f"clusters are not a disjoint cover of 1..{n}")
        mins = [min(members) for members in self.clusters]
        if any(a >= b for a, b in zip(mins, mins[1:])):
            raise ValueError("clusters are not indexed by first-occurrence depth")

    @property
    def n_layers(self) -> int:
        return len(self.assignment)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"P:{self.k}:".encode())
        h.update(",".join(str(a) for a in self.assignment).encode())
        return h.hexdigest()

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "assignment": list(self.assignment),
            "clusters": [list(members) for members in self.clusters],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def reindex_by_depth(raw_labels: Sequence) -> ClusterPartition:
    """Relabel clusters by first occurrence: the shallowest layer's cluster is 1.

    Accepts any label values; only their grouping matters, so the output is
    invariant under relabeling of the input.
    """
    labels = list(raw_labels)
    if not labels:
        raise ValueError("labels must be non-empty")
    order: dict = {}
    for lab in labels:
        if lab not in order:
            order[lab] = len(order) + 1
    assignment = tuple(order[lab] for lab in labels)
    clusters = tuple(
        tuple(i + 1 for i, a in enumerate(assignment) if a == ci)
        for ci in range(1, len(order) + 1)
    )
    return ClusterPartition(k=len(order), assignment=assignment, clusters=clusters)


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    # Eigenvector signs are solver-arbitrary; flip each column so its largest
    # magnitude component is positive, for reproducibility across runs.
    out = vectors.copy()
    for col in range(out.shape[1]):
        pivot = int(np.argmax(np.abs(out[:, col])))
        if out[pivot, col] < 0:
            out[:, col] = -out[:, col]
    return out


def spectral_embedding(affinity: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows of the k smallest eigenvectors of the normalized Laplacian.

    Returns (embedding, eigenvalues, degenerate_mask). Rows are normalized to
    unit length; rows belonging to near-zero-degree layers stay zero and are
    flagged in the mask.
    """
    arr = check_affinity_matrix(affinity)
    n = arr.shape[0]
    degrees = arr.sum(axis=1)
    degenerate = degrees <= DEGENERATE_DEGREE
    inv_sqrt = np.zeros(n)
    inv_sqrt[~degenerate] = 1.0 / np.sqrt(degrees[~degenerate])
    lap = np.eye(n) - (inv_sqrt[:, None] * arr) * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    try:
        eigvals, eigvecs = scipy.linalg.eigh(lap)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - dense eigh on sym matrices
        raise ComputationError(f"eigendecomposition failed: {exc}") from exc
    embedding = _canonical_signs(eigvecs[:, :k])
    row_norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    keep = row_norms[:, 0] > 0
    embedding[keep] = embedding[keep] / row_norms[keep]
    embedding[degenerate] = 0.0
    return embedding, eigvals, degenerate


def _furthest_first_centers(points: np.ndarray, k: int, first: int) -> np.ndarray:
    chosen = [first]
    dist = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))  # argmax takes the lowest index on ties
        chosen.append(nxt)
        dist = np.minimum(dist, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)  # ties -> lower center index
    # Revive any empty cluster with the point currently worst-served.
    for c in range(centers.shape[0]):
        if not np.any(labels == c):
            current = d2[np.arange(len(labels)), labels]
            worst = int(np.argmax(current))
            labels[worst] = c
            d2[worst, :] = np.inf
            d2[worst, c] = 0.0
    return labels


def _lloyd(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, float]:
    k = centers.shape[0]
    labels = _assign(points, centers)
    for _ in range(KMEANS_MAX_ITER):
        new_centers = np.vstack([points[labels == c].mean(axis=0) for c in range(k)])
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        labels = _assign(points, centers)
        if shift < KMEANS_SHIFT_TOL:
            break
    inertia = float(np.sum((points - centers[labels]) ** 2))
    return labels, inertia


def deterministic_kmeans(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means with a reproducible restart schedule; returns raw 0-based labels.

    Restart 0 starts furthest-first from row 0 (the shallowest layer); each
    later restart r draws its starting row from default_rng([seed, r]). The
    best restart wins by inertia, with the lowest restart index on exact ties.
    """
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    best_labels: np.ndarray | None = None
    best_inertia = np.inf
    for restart in range(KMEANS_RESTARTS):
        if restart == 0:
            first = 0
        else:
            first = int(np.random.default_rng([seed, restart]).integers(n))
        centers = _furthest_first_centers(points, k, first)
        labels, inertia = _lloyd(points, centers)
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    assert best_labels is not None
    return best_labels


def spectral_cluster(affinity, k: int, seed: int = 0) -> ClusterPartition:
    """Partition layers into k clusters; deterministic for fixed (affinity, k, seed).

    Near-zero-degree layers have a zero embedding row; they are attached to
    the cluster of the nearest normal layer by depth (with a warning) rather
    than left to k-means on a meaningless point.
    """
    arr = affinity.entries if isinstance(affinity, AffinityMatrix) else check_affinity_matrix(affinity)
    n = arr.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must satisfy 2 <= k <= {n}, got {k}")
    embedding, _, degenerate = spectral_embedding(arr, k)
    labels = deterministic_kmeans(embedding, k, seed)
    if degenerate.any():
        normal = np.flatnonzero(~degenerate)
        if normal.size == 0:
            raise ComputationError("every layer has near-zero affinity degree")
        for i in np.flatnonzero(degenerate):
            nearest = normal[np.argmin(np.abs(normal - i))]  # ties -> lower index
            labels[i] = labels[nearest]
            warnings.warn(
                f"layer {i + 1} has near-zero affinity degree; assigned to the cluster of layer {nearest + 1}"
            )
        # Re-attachment can empty a cluster that only held degenerate layers.
        if len(set(labels.tolist())) < k:
            warnings.warn("degenerate layers collapsed a cluster; partition has fewer groups")
    return reindex_by_depth(labels.tolist())
