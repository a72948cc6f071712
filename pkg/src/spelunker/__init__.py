"""Interpretable hybrid similarity search over mixed-type records.

Natural-language requests are turned into structured attribute queries by a
pluggable completion backend, answered exactly by a ball-tree index with a
heterogeneous distance metric, optionally re-ranked by the same backend,
and every hit ships a per-field distance breakdown explaining why it
matched.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .balltree import (
    BallNode,
    BallTree,
    SearchHit,
    SearchStats,
    brute_force_knn,
    build_ball_tree,
    knn_search,
)
from .embedding import HttpEmbeddingProvider, LocalTrigramEmbedder
from .evalkit import (
    ConfusionCounts,
    WilcoxonResult,
    evaluate_extraction,
    evaluate_retrieval,
    extraction_confusion,
    f1,
    jaro,
    precision_at_k,
    recall_at_k,
    wilcoxon_signed_rank,
)
from .gateway import (
    HttpCompletionBackend,
    RerankOutcome,
    ScriptedMockBackend,
    StructuredQuery,
    rerank,
    structure_query,
)
from .metric import DistanceBreakdown, combined_distance, field_distance
from .persist import load_index, save_index
from .pipeline import Engine
from .preprocess import (
    ProcessedDataset,
    ScalerStats,
    build_processed_dataset,
    fit_numeric_scaler,
    parse_boolean,
    scale_numeric,
)
from .schema import (
    MISSING,
    DatasetSchema,
    FieldKind,
    FieldSpec,
    Flag,
    Number,
    RawRecord,
    Text,
    load_csv,
    load_schema,
    validate_schema,
)

__all__ = [
    "KERNEL_BACKEND",
    "__version__",
    "BallNode",
    "BallTree",
    "SearchHit",
    "SearchStats",
    "brute_force_knn",
    "build_ball_tree",
    "knn_search",
    "HttpEmbeddingProvider",
    "LocalTrigramEmbedder",
    "ConfusionCounts",
    "WilcoxonResult",
    "evaluate_extraction",
    "evaluate_retrieval",
    "extraction_confusion",
    "f1",
    "jaro",
    "precision_at_k",
    "recall_at_k",
    "wilcoxon_signed_rank",
    "HttpCompletionBackend",
    "RerankOutcome",
    "ScriptedMockBackend",
    "StructuredQuery",
    "rerank",
    "structure_query",
    "DistanceBreakdown",
    "combined_distance",
    "field_distance",
    "load_index",
    "save_index",
    "Engine",
    "ProcessedDataset",
    "ScalerStats",
    "build_processed_dataset",
    "fit_numeric_scaler",
    "parse_boolean",
    "scale_numeric",
    "MISSING",
    "DatasetSchema",
    "FieldKind",
    "FieldSpec",
    "Flag",
    "Number",
    "RawRecord",
    "Text",
    "load_csv",
    "load_schema",
    "validate_schema",
]
