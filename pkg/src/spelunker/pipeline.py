"""Search pipeline shared by the HTTP service, the CLI, and the evaluator.

Flow for a natural-language request: structure the text with the LLM, run
the exact k-NN search over a candidate pool larger than k, optionally let
the LLM reorder that pool, then truncate to k. Structured requests skip the
first step. Response assembly (breakdowns, explanations, canonical float
rounding) lives here so every surface emits identical bytes for identical
inputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .balltree import BallTree, SearchHit, SearchStats, brute_force_knn, knn_search
from .embedding import EmbeddingProvider, LocalTrigramEmbedder
from .errors import ValidationError
from .gateway import (
    CompletionBackend,
    RerankOutcome,
    StructuredQuery,
    rerank,
    structure_query,
    validate_structured_query,
)
from .metric import PackedQuery, pack_query, query_field_value
from .preprocess import ProcessedDataset

DEFAULT_POOL_FACTOR = 2
DEFAULT_POOL_EXTRA = 10

# Reported floats are rounded to 12 decimals: stable bytes across kernel
# backends while staying far inside every documented tolerance.
_FLOAT_DECIMALS = 12


def effective_weights(dataset: ProcessedDataset, query: StructuredQuery) -> dict[str, float]:
    """Per queried field: the query's override, else the schema weight.

    Schema weights of 0 mean "excluded unless the query says otherwise";
    querying such a field without an override is rejected rather than
    silently ignored.
    """
    specs = dataset.schema.field_map()
    out: dict[str, float] = {}
    for name in query.values:
        weight = query.weights.get(name, specs[name].weight)
        if weight <= 0:
            raise ValidationError(
                f"field {name!r} has weight {weight}; queried fields need a "
                "positive weight (override it in the query)")
        out[name] = float(weight)
    return out


def resolve_query(dataset: ProcessedDataset, query: StructuredQuery,
                  provider: EmbeddingProvider) -> PackedQuery:
    """Convert raw query targets into the packed processed-space form."""
    values = {name: query_field_value(dataset, name, raw, provider.embed)
              for name, raw in query.values.items()}
    return pack_query(dataset, values, effective_weights(dataset, query))


def pool_size(k: int, n: int, factor: int = DEFAULT_POOL_FACTOR,
              extra: int = DEFAULT_POOL_EXTRA) -> int:
    """Candidate pool for re-ranking: enough beyond k for promotion to matter."""
    return min(max(factor * k, k + extra), n)


def provider_for(dataset: ProcessedDataset,
                 override: EmbeddingProvider | None = None) -> EmbeddingProvider:
    """Provider matching the one the index was built with."""
    if override is not None:
        if override.dimension() != dataset.embed_dim:
            raise ValidationError(
                f"provider dimension {override.dimension()} != index "
                f"dimension {dataset.embed_dim}")
        return override
    meta = dataset.embedder_meta
    if meta.get("kind") == "local":
        return LocalTrigramEmbedder(dataset.embed_dim)
    raise ValidationError(
        f"index was built with embedder {meta.get('kind')!r}; pass a matching provider")


def candidate_payload(dataset: ProcessedDataset, hits: list[SearchHit]) -> list[tuple[int, dict[str, str]]]:
    return [(hit.id, dict(dataset.originals[hit.id].values)) for hit in hits]


def apply_rerank(query_text: str, pool: list[SearchHit], k: int,
                 backend: CompletionBackend, dataset: ProcessedDataset,
                 value_char_limit: int = 300) -> tuple[list[SearchHit], RerankOutcome]:
    """Reorder the pool per the backend and truncate to k."""
    outcome = rerank(query_text, candidate_payload(dataset, pool),
                     min(k, len(pool)), backend, value_char_limit=value_char_limit)
    by_id = {hit.id: hit for hit in pool}
    ordered = [by_id[rec_id] for rec_id in outcome.ordered_ids]
    return ordered[:k], outcome


def _round(value: float) -> float:
    return round(float(value), _FLOAT_DECIMALS)


def hit_payload(dataset: ProcessedDataset, hit: SearchHit) -> dict:
    """JSON-ready view of one hit: original fields, breakdown, explanation."""
    original = dataset.originals[hit.id].values
    breakdown = []
    explanation_parts = []
    for entry in hit.breakdown.per_field:
        breakdown.append({
            "field": entry.field,
            "distance": _round(entry.distance),
            "weight": _round(entry.weight),
            "contribution": _round(entry.contribution),
        })
        shown = original.get(entry.field, "missing")
        explanation_parts.append(
            f"{entry.field} = {shown} (distance {entry.distance:.4f}, "
            f"weight {entry.weight:g})")
    return {
        "id": hit.id,
        "distance": _round(hit.distance),
        "fields": {name: original[name] for name in dataset.schema.field_names
                   if name in original},
        "breakdown": breakdown,
        "explanation": "; ".join(explanation_parts),
    }


@dataclass
class Engine:
    """A loaded index plus the backends needed to serve requests."""

    dataset: ProcessedDataset
    tree: BallTree
    provider: EmbeddingProvider
    llm_backend: CompletionBackend | None = None
    pool_factor: int = DEFAULT_POOL_FACTOR
    pool_extra: int = DEFAULT_POOL_EXTRA
    value_char_limit: int = 300

    def structured_hits(self, query: StructuredQuery, k: int,
                        stats: SearchStats | None = None) -> list[SearchHit]:
        packed = resolve_query(self.dataset, query, self.provider)
        return knn_search(self.tree, packed, k, stats=stats)

    def brute_force_hits(self, query: StructuredQuery, k: int) -> list[SearchHit]:
        packed = resolve_query(self.dataset, query, self.provider)
        return brute_force_knn(self.dataset, packed, k)

    def search(self, query: StructuredQuery, k: int,
               include_timings: bool = True) -> dict:
        """Structured entry point: no LLM involved, structure_ms is 0."""
        self._check_k(k)
        t0 = time.monotonic()
        hits = self.structured_hits(query, k)
        search_ms = (time.monotonic() - t0) * 1000.0
        return self._response(query, hits, rerank_meta={"used": False, "fallback": False},
                              timings={"structure_ms": 0.0, "search_ms": search_ms,
                                       "rerank_ms": 0.0},
                              include_timings=include_timings)

    def ask(self, text: str, k: int, use_rerank: bool = False,
            include_timings: bool = True) -> dict:
        """Natural-language entry point: structure, search a pool, optionally
        re-rank, truncate to k."""
        self._check_k(k)
        if not text or not text.strip():
            raise ValidationError("query text must be non-empty")
        if self.llm_backend is None:
            raise ValidationError("no completion backend configured")
        t0 = time.monotonic()
        query = structure_query(text, self.dataset.schema, self.llm_backend)
        t1 = time.monotonic()
        pool_k = pool_size(k, self.dataset.n, self.pool_factor, self.pool_extra) \
            if use_rerank else k
        pool = self.structured_hits(query, pool_k)
        t2 = time.monotonic()
        rerank_meta = {"used": False, "fallback": False}
        hits = pool[:k]
        if use_rerank and pool:
            hits, outcome = apply_rerank(text, pool, k, self.llm_backend,
                                         self.dataset, self.value_char_limit)
            rerank_meta = {"used": True, "fallback": outcome.used_fallback}
        t3 = time.monotonic()
        timings = {
            "structure_ms": (t1 - t0) * 1000.0,
            "search_ms": (t2 - t1) * 1000.0,
            "rerank_ms": (t3 - t2) * 1000.0,
        }
        return self._response(query, hits, rerank_meta, timings, include_timings)

    def _check_k(self, k: int) -> None:
        if not isinstance(k, int) or k < 1 or k > 100:
            raise ValidationError(f"k must be an integer in [1, 100], got {k!r}")

    def _response(self, query: StructuredQuery, hits: list[SearchHit],
                  rerank_meta: dict, timings: dict, include_timings: bool) -> dict:
        response = {
            "structured_query": {
                "values": dict(query.values),
                "weights": effective_weights(self.dataset, query),
            },
            "hits": [hit_payload(self.dataset, hit) for hit in hits],
            "rerank": rerank_meta,
        }
        if include_timings:
            rounded = {name: round(ms, 3) for name, ms in timings.items()}
            rounded["total_ms"] = round(sum(timings.values()), 3)
            response["timings"] = rounded
        return response


def parse_structured_request(dataset: ProcessedDataset, raw_values: dict,
                             raw_weights: dict | None = None) -> StructuredQuery:
    """Strict validation for the structured-search surface (400 on violation)."""
    query, _ = validate_structured_query(dataset.schema, raw_values,
                                         raw_weights, strict=True)
    return query
