"""Synthetic activation dumps and similarity matrices with planted structure.

Used as the oracle substrate: a PlantedSpec fixes a ground-truth cluster
layout and target within/cross cosine similarities, and the generators emit
either the idealized block-structured matrix directly or a token stream whose
empirical similarity converges to those targets.

Construction for dumps: one latent unit vector per cluster, with the
cluster-level Gram matrix chosen so that after adding per-layer Gaussian
perturbation the *expected* cosines hit the targets. The perturbation
variance is sigma^2 = 1/within - 1 (same-cluster cosine 1/(1+sigma^2)) and
the latent Gram off-diagonal is cross/within, realized through a Cholesky
factor; an indefinite Gram means the targets are jointly infeasible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleTargetError
from .ladf import ActivationDump, DumpHeader
from .similarity import SimilarityMatrix


@dataclass(frozen=True)
class PlantedSpec:
    n_layers: int
    d_model: int
    cluster_layout: tuple  # tuple of tuples of 1-based layer indices
    within_similarity: float
    cross_similarity: float
    noise_scale: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        layout = tuple(tuple(sorted(int(l) for l in c)) for c in self.cluster_layout)
        object.__setattr__(self, "cluster_layout", layout)
        covered = [l for c in layout for l in c]
        if sorted(covered) != list(range(1, self.n_layers + 1)):
            raise ValueError(f"cluster layout must cover 1..{self.n_layers} exactly once")
        if any(len(c) == 0 for c in layout):
            raise ValueError("cluster layout contains an empty cluster")
        if not 0 < self.within_similarity <= 1:
            raise ValueError(f"within similarity must lie in (0, 1], got {self.within_similarity}")
        if not -1 < self.cross_similarity < 1:
            raise ValueError(f"cross similarity must lie in (-1, 1), got {self.cross_similarity}")
        if self.within_similarity <= self.cross_similarity:
            raise ValueError("within similarity must exceed cross similarity")
        if self.noise_scale < 0:
            raise ValueError(f"noise scale must be >= 0, got {self.noise_scale}")
        if self.d_model < 1:
            raise ValueError(f"d_model must be >= 1, got {self.d_model}")

    @property
    def k(self) -> int:
        return len(self.cluster_layout)

    def layer_to_cluster(self) -> np.ndarray:
        """0-based cluster index per 0-based layer."""
        mapping = np.empty(self.n_layers, dtype=np.int64)
        for ci, members in enumerate(self.cluster_layout):
            for l in members:
                mapping[l - 1] = ci
        return mapping

    @classmethod
    def from_json(cls, path: str | Path) -> "PlantedSpec":
        doc = json.loads(Path(path).read_text())
        return cls(
            n_layers=int(doc["n_layers"]),
            d_model=int(doc["d_model"]),
            cluster_layout=tuple(tuple(c) for c in doc["cluster_layout"]),
            within_similarity=float(doc["within_similarity"]),
            cross_similarity=float(doc["cross_similarity"]),
            noise_scale=float(doc.get("noise_scale", 0.0)),
            seed=int(doc.get("seed", 0)),
        )


def _latent_cholesky(spec: PlantedSpec) -> np.ndarray:
    k = spec.k
    c = spec.cross_similarity / spec.within_similarity
    gram = np.full((k, k), c)
    np.fill_diagonal(gram, 1.0)
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleTargetError(
            f"latent Gram for within={spec.within_similarity}, cross={spec.cross_similarity} "
            f"with {k} clusters is not positive semidefinite"
        ) from exc


def generate_dump(spec: PlantedSpec, n_samples: int, tokens_per_sample: int) -> ActivationDump:
    """Sample an activation dump whose expected cosines match the planted targets."""
    if n_samples < 1 or tokens_per_sample < 1:
        raise ValueError("need at least one sample and one token per sample")
    chol = _latent_cholesky(spec)
    mapping = spec.layer_to_cluster()
    sigma = float(np.sqrt(max(1.0 / spec.within_similarity - 1.0, 0.0) + spec.noise_scale**2))
    d = spec.d_model
    chunks = []
    for m in range(n_samples):
        rng = np.random.default_rng([spec.seed, m])
        z = rng.normal(size=(tokens_per_sample, spec.k, d)) / np.sqrt(d)
        latents = np.einsum("kj,tjd->tkd", chol, z)
        per_layer = latents[:, mapping, :]
        if sigma > 0:
            per_layer = per_layer + sigma * rng.normal(size=per_layer.shape) / np.sqrt(d)
        chunks.append(per_layer.astype("<f4"))
    header = DumpHeader(n_layers=spec.n_layers, d_model=d)
    return ActivationDump(header=header, chunks=tuple(chunks))


def generate_similarity(spec: PlantedSpec) -> SimilarityMatrix:
    """Emit the idealized block-structured matrix directly (no token sampling).

    Off-diagonal entries are the within/cross targets plus symmetric Gaussian
    jitter of scale noise_scale, clipped to [-1, 1]; the diagonal is exactly 1.
    """
    n = spec.n_layers
    mapping = spec.layer_to_cluster()
    same = mapping[:, None] == mapping[None, :]
    entries = np.where(same, spec.within_similarity, spec.cross_similarity)
    if spec.noise_scale > 0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.normal(scale=spec.noise_scale, size=(n, n))
        entries = entries + (noise + noise.T) / 2.0
    entries = np.clip(entries, -1.0, 1.0)
    np.fill_diagonal(entries, 1.0)
    return SimilarityMatrix(n_layers=n, entries=entries, token_total=0, epsilon=0.0)
