"""Two-stage redundancy-aware pruning allocation.

Stage 1 spreads removals across representational clusters: each cluster
contributes its most redundant eligible layer, and when the budget is smaller
than the cluster count only the top-ranked candidates survive. Stage 2 then
spends the remaining budget greedily, always taking the most redundant layer
from the cluster whose surviving members are still most similar to each
other. Boundary layers (the first and last block) are never eligible.

Every argmax tie breaks toward the lower index (layer or cluster); the whole
procedure is deterministic given the similarity matrix, the partition, and
the budget, and the resulting plan records each decision with the scores that
drove it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import ClusterPartition
from .errors import BudgetUnreachableError, LocalityUndefinedError
from .locality import off_diagonal_mean, rls
from .similarity import SimilarityMatrix
from .validation import check_similarity_matrix

NEG_INF = float("-inf")


@dataclass(frozen=True)
class PruneBudget:
    """Exact number of layers to remove; bounds against N are checked at plan time."""

    k_prune: int

    def __post_init__(self) -> None:
        if self.k_prune < 1:
            raise ValueError(f"pruning budget must be >= 1, got {self.k_prune}")

    def check_against(self, n_layers: int) -> None:
        if self.k_prune > n_layers - 2:
            raise ValueError(
                f"budget {self.k_prune} exceeds the {n_layers - 2} non-boundary layers of an "
                f"{n_layers}-layer model"
            )


@dataclass(frozen=True)
class RedundancyTable:
    """Per-layer redundancy r(l) within its cluster; None for singleton clusters."""

    values: dict
    warnings: tuple = ()

    def score(self, layer: int) -> float:
        """r(l) with undefined entries mapped to -inf for selection purposes."""
        v = self.values[layer]
        return NEG_INF if v is None else v


@dataclass(frozen=True)
class PlanStep:
    stage: int | None
    layer: int
    cluster: int | None
    r_value: float | None
    mu_values: tuple | None

    def to_json_dict(self) -> dict:
        def clean(x):
            if x is None or (isinstance(x, float) and not math.isfinite(x)):
                return None
            return x

        return {
            "stage": self.stage,
            "layer": self.layer,
            "cluster": self.cluster,
            "r_value": clean(self.r_value),
            "mu_values": None if self.mu_values is None else [clean(m) for m in self.mu_values],
        }


@dataclass(frozen=True)
class PruningPlan:
    """Ordered pruning decision record, serializable byte-stably."""

    method: str
    n_layers: int
    k_clusters: int | None
    budget: int
    rls: float | None
    pruned_layers: tuple
    steps: tuple
    inputs_digest: dict = field(default_factory=dict)
    warnings: tuple = ()

    def __post_init__(self) -> None:
        p = self.pruned_layers
        if len(set(p)) != len(p):
            raise ValueError("pruned layers contain duplicates")
        if 1 in p or self.n_layers in p:
            raise ValueError("boundary layers can never be pruned")
        if len(p) != self.budget:
            raise ValueError(f"plan removes {len(p)} layers but budget is {self.budget}")
        stage1_clusters = [s.cluster for s in self.steps if s.stage == 1]
        if len(set(stage1_clusters)) != len(stage1_clusters):
            raise ValueError("stage-1 steps must touch distinct clusters")

    @property
    def pruned_layers_0based(self) -> tuple:
        return tuple(l - 1 for l in self.pruned_layers)

    def pattern_strip(self, pruned_char: str = "#", kept_char: str = "-") -> str:
        """One character per layer, pruned layers marked."""
        pruned = set(self.pruned_layers)
        return "".join(pruned_char if l in pruned else kept_char for l in range(1, self.n_layers + 1))

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "n_layers": self.n_layers,
            "k_clusters": self.k_clusters,
            "budget": self.budget,
            "rls": self.rls,
            "pruned_layers_1based": list(self.pruned_layers),
            "pruned_layers_0based": list(self.pruned_layers_0based),
            "steps": [s.to_json_dict() for s in self.steps],
            "warnings": list(self.warnings),
            "inputs_digest": dict(self.inputs_digest),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def _entries_and_digest(s) -> tuple[np.ndarray, str]:
    if isinstance(s, SimilarityMatrix):
        return check_similarity_matrix(s), s.digest()
    arr = check_similarity_matrix(s)
    return arr, hashlib.sha256(np.ascontiguousarray(arr, dtype="<f8").tobytes()).hexdigest()


def intra_cluster_redundancy(s, part: ClusterPartition) -> RedundancyTable:
    """r(l): mean similarity of layer l to the other members of its cluster.

    Undefined (None) for members of singleton clusters, which have no partners
    to be redundant with; those entries trigger a warning.
    """
    arr, _ = _entries_and_digest(s)
    if part.n_layers != arr.shape[0]:
        raise ValueError(
            f"partition covers {part.n_layers} layers but matrix has {arr.shape[0]}"
        )
    values: dict = {}
    warns: list[str] = []
    for ci, members in enumerate(part.clusters, start=1):
        if len(members) == 1:
            values[members[0]] = None
            warns.append(f"cluster {ci} is a singleton; redundancy undefined for layer {members[0]}")
            continue
        idx = np.array(members) - 1
        sub = arr[np.ix_(idx, idx)]
        # Row sums minus the diagonal, averaged over the |C_k| - 1 partners.
        r_vals = (sub.sum(axis=1) - np.diag(sub)) / (len(members) - 1)
        for layer, r_val in zip(members, r_vals):
            values[layer] = float(r_val)
    return RedundancyTable(values=values, warnings=tuple(warns))


def _eligible(members: Sequence[int], n_layers: int, pruned: set) -> list[int]:
    return [l for l in members if l not in pruned and l != 1 and l != n_layers]


def _residual_redundancy(arr: np.ndarray, eligible: Sequence[int]) -> float:
    if len(eligible) < 2:
        return NEG_INF
    idx = np.array(eligible) - 1
    sub = arr[np.ix_(idx, idx)]
    m = len(eligible)
    return float((sub.sum() - np.trace(sub)) / (m * (m - 1)))


def stage1_coverage(
    s, part: ClusterPartition, budget: PruneBudget, table: RedundancyTable
) -> tuple[list[PlanStep], list[str]]:
    """One removal per cluster (its top-redundancy eligible layer), trimmed to budget."""
    arr, _ = _entries_and_digest(s)
    n = arr.shape[0]
    warns: list[str] = []
    candidates: list[tuple[int, int, float]] = []  # (cluster, layer, r)
    for ci, members in enumerate(part.clusters, start=1):
        eligible = _eligible(members, n, set())
        if not eligible:
            warns.append(f"cluster {ci} has no eligible (non-boundary) layer; skipped in stage 1")
            continue
        best = max(eligible, key=lambda l: (table.score(l), -l))
        candidates.append((ci, best, table.score(best)))
    if not candidates:
        raise BudgetUnreachableError("no eligible layer exists in any cluster")
    if budget.k_prune < len(candidates):
        candidates = sorted(candidates, key=lambda c: (-c[2], c[1]))[: budget.k_prune]
        candidates = sorted(candidates, key=lambda c: c[0])
    steps = [
        PlanStep(stage=1, layer=layer, cluster=ci, r_value=table.values[layer], mu_values=None)
        for ci, layer, _ in candidates
    ]
    return steps, warns


def stage2_residual(
    s,
    part: ClusterPartition,
    budget: PruneBudget,
    table: RedundancyTable,
    steps: list[PlanStep],
) -> tuple[list[PlanStep], list[str]]:
    """Greedy residual allocation until the budget is met.

    Each round recomputes every cluster's residual redundancy (mean pairwise
    similarity over its surviving eligible members, -inf below two members),
    removes the top-r layer of the winning cluster, and records the scores.
    When every cluster is exhausted but budget remains, falls back to the most
    redundant eligible layer globally, one warning per fallback removal.
    """
    arr, _ = _entries_and_digest(s)
    n = arr.shape[0]
    pruned = {step.layer for step in steps}
    warns: list[str] = []
    layer_cluster = {l: ci for ci, members in enumerate(part.clusters, start=1) for l in members}
    while len(pruned) < budget.k_prune:
        eligible_sets = [_eligible(members, n, pruned) for members in part.clusters]
        mu = [_residual_redundancy(arr, elig) for elig in eligible_sets]
        if any(m > NEG_INF for m in mu):
            k_star = max(range(len(mu)), key=lambda i: (mu[i], -i))
            choices = eligible_sets[k_star]
            l_star = max(choices, key=lambda l: (table.score(l), -l))
            steps.append(
                PlanStep(
                    stage=2,
                    layer=l_star,
                    cluster=k_star + 1,
                    r_value=table.values[l_star],
                    mu_values=tuple(mu),
                )
            )
        else:
            remaining = [l for elig in eligible_sets for l in elig]
            if not remaining:
                raise BudgetUnreachableError(
                    f"only {len(pruned)} eligible layers exist but budget is {budget.k_prune}"
                )
            l_star = max(remaining, key=lambda l: (table.score(l), -l))
            warns.append(
                f"all clusters exhausted below two members; fallback removal of layer {l_star}"
            )
            steps.append(
                PlanStep(
                    stage=2,
                    layer=l_star,
                    cluster=layer_cluster[l_star],
                    r_value=table.values[l_star],
                    mu_values=tuple(mu),
                )
            )
        pruned.add(steps[-1].layer)
    return steps, warns


def plan(s, part: ClusterPartition, budget: PruneBudget) -> PruningPlan:
    """Full two-stage allocation; deterministic, with per-step provenance."""
    arr, s_digest = _entries_and_digest(s)
    n = arr.shape[0]
    if part.n_layers != n:
        raise ValueError(f"partition covers {part.n_layers} layers but matrix has {n}")
    budget.check_against(n)
    table = intra_cluster_redundancy(arr, part)
    warns = list(table.warnings)
    steps, w1 = stage1_coverage(arr, part, budget, table)
    warns.extend(w1)
    steps, w2 = stage2_residual(arr, part, budget, table, steps)
    warns.extend(w2)
    try:
        score = rls(off_diagonal_mean(arr))
    except LocalityUndefinedError:
        score = None
    return PruningPlan(
        method="lorp",
        n_layers=n,
        k_clusters=part.k,
        budget=budget.k_prune,
        rls=score,
        pruned_layers=tuple(step.layer for step in steps),
        steps=tuple(steps),
        inputs_digest={
            "similarity": s_digest,
            "partition": part.digest(),
            "budget": budget.k_prune,
        },
        warnings=tuple(warns),
    )


def contiguous_window_plan(s, budget: PruneBudget) -> PruningPlan:
    """Comparator: remove the contiguous non-boundary window [a, a+b-1] whose
    surrounding representations (entering layers a-1 and a+b) are most similar.

    Ties go to the shallowest window. Not a reimplementation of any published
    baseline; a simple contiguity-assuming reference point.
    """
    arr, s_digest = _entries_and_digest(s)
    n = arr.shape[0]
    budget.check_against(n)
    b = budget.k_prune
    best_a = None
    best_score = NEG_INF
    for a in range(2, n - b + 1):  # window [a, a+b-1], 1-based, keeps layers 1 and n
        boundary_score = float(arr[a - 2, a + b - 1])  # S[a-1, a+b] in 1-based indexing
        if boundary_score > best_score:
            best_score = boundary_score
            best_a = a
    assert best_a is not None
    window = tuple(range(best_a, best_a + b))
    try:
        score = rls(off_diagonal_mean(arr))
    except LocalityUndefinedError:
        score = None
    steps = tuple(
        PlanStep(stage=None, layer=l, cluster=None, r_value=best_score, mu_values=None)
        for l in window
    )
    return PruningPlan(
        method="contiguous",
        n_layers=n,
        k_clusters=None,
        budget=b,
        rls=score,
        pruned_layers=window,
        steps=steps,
        inputs_digest={"similarity": s_digest, "partition": None, "budget": b},
        warnings=(),
    )
