"""scikit-learn style estimators wrapping the clustering and planning pipeline.

Both estimators consume a precomputed N x N layer-similarity matrix, the same
way sklearn's SpectralClustering consumes a precomputed affinity, so they
compose with Pipelines, grid search, and clone()/get_params() tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError

from .allocation import PruneBudget, contiguous_window_plan, plan
from .clustering import spectral_cluster, to_affinity
from .locality import build_report
from .similarity import SimilarityMatrix
from .validation import check_similarity_matrix


class SpectralLayerClustering(BaseEstimator, ClusterMixin):
    """Cluster transformer layers by representational similarity.

    Parameters
    ----------
    n_clusters : int, default=2
        Number of representational clusters.
    random_state : int, default=0
        Seed for the deterministic k-means restart schedule.

    Attributes
    ----------
    labels_ : ndarray of shape (n_layers,)
        0-based cluster labels, re-indexed by first-occurrence depth.
    partition_ : ClusterPartition
        The 1-based depth-ordered partition.
    """

    def __init__(self, n_clusters: int = 2, random_state: int = 0):
        self.n_clusters = n_clusters
        self.random_state = random_state

    def fit(self, X, y=None):
        S = check_similarity_matrix(X)
        affinity = to_affinity(X if isinstance(X, SimilarityMatrix) else S)
        self.partition_ = spectral_cluster(affinity, self.n_clusters, self.random_state)
        self.labels_ = np.asarray(self.partition_.assignment, dtype=np.int64) - 1
        return self


class LorpPlanner(BaseEstimator):
    """Fit a deterministic depth-pruning plan from a layer-similarity matrix.

    ``fit(S)`` computes the locality report, resolves the cluster count
    (explicit or via the locality-score policy when ``n_clusters="auto"``),
    clusters the layers, and runs the two-stage budget allocation. After
    fitting, ``transform`` drops the pruned layer columns from any array whose
    axis 1 indexes layers (e.g. a (tokens, n_layers, d) activation stack).

    Parameters
    ----------
    budget : int
        Number of layers to remove (1 <= budget <= n_layers - 2).
    n_clusters : int or "auto", default="auto"
        Cluster count; "auto" applies the locality-score policy.
    method : {"lorp", "contiguous"}, default="lorp"
        Two-stage cluster allocation, or the contiguous-window comparator.
    random_state : int, default=0
        Clustering seed.

    Attributes
    ----------
    plan_ : PruningPlan
    pruned_layers_ : tuple of 1-based layer indices
    support_ : boolean mask of kept layers
    locality_ : LocalityReport
    partition_ : ClusterPartition or None (contiguous method)
    """

    def __init__(self, budget: int, n_clusters="auto", method: str = "lorp", random_state: int = 0):
        self.budget = budget
        self.n_clusters = n_clusters
        self.method = method
        self.random_state = random_state

    def fit(self, X, y=None):
        S = check_similarity_matrix(X, min_layers=3)
        source = X if isinstance(X, SimilarityMatrix) else S
        budget = PruneBudget(int(self.budget))
        self.locality_ = build_report(S)
        if self.method == "contiguous":
            self.partition_ = None
            self.plan_ = contiguous_window_plan(source, budget)
        elif self.method == "lorp":
            if self.n_clusters == "auto":
                k = self.locality_.recommended_k
            else:
                k = int(self.n_clusters)
            self.partition_ = spectral_cluster(to_affinity(source), k, self.random_state)
            self.plan_ = plan(source, self.partition_, budget)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.pruned_layers_ = self.plan_.pruned_layers
        self.n_layers_ = self.plan_.n_layers
        self.support_ = np.ones(self.n_layers_, dtype=bool)
        self.support_[list(self.plan_.pruned_layers_0based)] = False
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "plan_"):
            raise NotFittedError("this LorpPlanner instance is not fitted yet")

    def get_support(self, indices: bool = False):
        self._check_fitted()
        if indices:
            return np.flatnonzero(self.support_)
        return self.support_.copy()

    def transform(self, X):
        """Drop pruned layers along axis 1 of ``X``."""
        self._check_fitted()
        arr = np.asarray(X)
        if arr.ndim < 2 or arr.shape[1] != self.n_layers_:
            raise ValueError(
                f"expected axis 1 of size {self.n_layers_} (one entry per layer), got shape {arr.shape}"
            )
        return arr[:, self.support_]
