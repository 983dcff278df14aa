"""Training-free transformer depth-pruning planner driven by representation locality.

Pipeline: stream per-layer hidden states from an LADF dump, compute the
token-averaged cosine similarity matrix between layers, summarize its
locality, cluster layers spectrally on the rescaled affinity, and allocate a
pruning budget in two redundancy-aware stages. Everything downstream of the
dump is deterministic for a fixed seed.
"""

from .allocation import (
    PlanStep,
    PruneBudget,
    PruningPlan,
    RedundancyTable,
    contiguous_window_plan,
    intra_cluster_redundancy,
    plan,
    stage1_coverage,
    stage2_residual,
)
from .clustering import (
    AffinityMatrix,
    ClusterPartition,
    reindex_by_depth,
    spectral_cluster,
    spectral_embedding,
    to_affinity,
)
from .errors import (
    BudgetUnreachableError,
    ComputationError,
    DimensionMismatchError,
    DumpFormatError,
    EmptyAccumulatorError,
    InfeasibleTargetError,
    LocalityUndefinedError,
    LorpError,
)
from .estimators import LorpPlanner, SpectralLayerClustering
from .ladf import ActivationDump, DumpHeader, read_dump, read_dump_chunks, write_dump
from .locality import (
    LocalityReport,
    build_report,
    distance_profile,
    off_diagonal_mean,
    recommend_k,
    rls,
)
from .similarity import (
    DEFAULT_EPSILON,
    SimilarityAccumulator,
    SimilarityMatrix,
    normalize_tokens,
)
from .synth import PlantedSpec, generate_dump, generate_similarity

__version__ = "0.1.0"

__all__ = [
    "ActivationDump",
    "AffinityMatrix",
    "BudgetUnreachableError",
    "ClusterPartition",
    "ComputationError",
    "DEFAULT_EPSILON",
    "DimensionMismatchError",
    "DumpFormatError",
    "DumpHeader",
    "EmptyAccumulatorError",
    "InfeasibleTargetError",
    "LocalityReport",
    "LocalityUndefinedError",
    "LorpError",
    "LorpPlanner",
    "PlanStep",
    "PlantedSpec",
    "PruneBudget",
    "PruningPlan",
    "RedundancyTable",
    "SimilarityAccumulator",
    "SimilarityMatrix",
    "SpectralLayerClustering",
    "build_report",
    "contiguous_window_plan",
    "distance_profile",
    "generate_dump",
    "generate_similarity",
    "intra_cluster_redundancy",
    "normalize_tokens",
    "off_diagonal_mean",
    "plan",
    "read_dump",
    "read_dump_chunks",
    "recommend_k",
    "reindex_by_depth",
    "rls",
    "spectral_cluster",
    "spectral_embedding",
    "stage1_coverage",
    "stage2_residual",
    "to_affinity",
    "write_dump",
]
