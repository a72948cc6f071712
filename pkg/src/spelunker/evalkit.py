"""Evaluation harness: retrieval metrics, extraction scoring, string
fidelity, paired significance testing, and latency profiling."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .balltree import BallTree
from .errors import (
    AllZeroDifferences,
    EmptyRelevantSet,
    UnknownRelevantId,
    ValidationError,
)
from .gateway import CompletionBackend, StructuredQuery, structure_query, validate_structured_query
from .pipeline import Engine, pool_size, apply_rerank


def precision_at_k(retrieved: Sequence[int], relevant: set, k: int) -> float:
    """Fraction of the top-k retrieved items that are relevant."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not retrieved:
        return 0.0
    top = list(retrieved)[:k]
    denom = min(k, len(retrieved))
    return sum(1 for item in top if item in relevant) / denom


def recall_at_k(retrieved: Sequence[int], relevant: set, k: int) -> float:
    """Fraction of all relevant items found in the top k."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not relevant:
        raise EmptyRelevantSet("relevant set must be non-empty")
    top = list(retrieved)[:k]
    return sum(1 for item in top if item in relevant) / len(relevant)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0


def _values_equal(a: object, b: object) -> bool:
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        return abs(float(a) - float(b)) <= 1e-6 * max(abs(float(a)), abs(float(b)))
    if a_num != b_num:
        return False
    return str(a).strip().casefold() == str(b).strip().casefold()


def extraction_confusion(truth: StructuredQuery, predicted: StructuredQuery) -> ConfusionCounts:
    """Attribute-level counts. A key present on both sides with the wrong
    value counts as both a false positive and a false negative."""
    truth_map = {k.casefold(): v for k, v in truth.values.items()}
    pred_map = {k.casefold(): v for k, v in predicted.values.items()}
    tp = fp = fn = 0
    for key, value in pred_map.items():
        if key not in truth_map:
            fp += 1
        elif _values_equal(truth_map[key], value):
            tp += 1
        else:
            fp += 1
            fn += 1
    for key in truth_map:
        if key not in pred_map:
            fn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn)


def f1(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall."""
    if not (0.0 <= precision <= 1.0) or not (0.0 <= recall <= 1.0):
        raise ValidationError("precision and recall must lie in [0, 1]")
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def jaro(a: str, b: str) -> float:
    """Jaro similarity in [0, 1]; 1.0 for identical strings."""
    if a == b:
        return 1.0
    if not a or not b:
        return 0.0
    window = max(len(a), len(b)) // 2 - 1
    if window < 0:
        window = 0
    a_flags = [False] * len(a)
    b_flags = [False] * len(b)
    matches = 0
    for i, ch in enumerate(a):
        lo = max(0, i - window)
        hi = min(len(b) - 1, i + window)
        for j in range(lo, hi + 1):
            if not b_flags[j] and b[j] == ch:
                a_flags[i] = b_flags[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    transpositions = 0
    j = 0
    for i, flagged in enumerate(a_flags):
        if not flagged:
            continue
        while not b_flags[j]:
            j += 1
        if a[i] != b[j]:
            transpositions += 1
        j += 1
    half_t = transpositions / 2.0
    m = float(matches)
    return (m / len(a) + m / len(b) + (m - half_t) / m) / 3.0


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W = min(W+, W-)
    p_value: float
    n: int            # non-zero differences
    method: str       # "exact" or "normal"


def _average_ranks(magnitudes: list[float]) -> list[float]:
    order = sorted(range(len(magnitudes)), key=lambda i: magnitudes[i])
    ranks = [0.0] * len(magnitudes)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and magnitudes[order[j + 1]] == magnitudes[order[i]]:
            j += 1
        avg = (i + j + 2) / 2.0  # ranks are 1-based
        for pos in range(i, j + 1):
            ranks[order[pos]] = avg
        i = j + 1
    return ranks


def _exact_p(doubled_ranks: list[int], doubled_w: int) -> float:
    """Two-sided exact p: the fraction of the 2^n sign assignments whose
    min(W+, W-) is at most the observed W. Computed by dynamic programming
    over the distribution of W+ (counts are exact integers)."""
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    sums = np.arange(total + 1)
    keep = np.minimum(sums, total - sums) <= doubled_w
    return float(counts[keep].sum() / counts.sum())


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> WilcoxonResult:
    """Paired two-sided signed-rank test.

    Zero differences are dropped; tied magnitudes get average ranks. For up
    to 20 non-zero differences the p-value is exact over all sign
    assignments; beyond that a normal approximation with tie and continuity
    corrections is used.
    """
    if len(x) != len(y) or len(x) == 0:
        raise ValidationError("samples must be paired and non-empty")
    diffs = [float(a) - float(b) for a, b in zip(x, y)]
    nonzero = [d for d in diffs if d != 0.0]
    if not nonzero:
        raise AllZeroDifferences("every paired difference is zero")
    n = len(nonzero)
    ranks = _average_ranks([abs(d) for d in nonzero])
    w_plus = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, nonzero) if d < 0)
    statistic = min(w_plus, w_minus)
    if n <= 20:
        doubled = [int(round(2 * r)) for r in ranks]
        p = _exact_p(doubled, int(round(2 * statistic)))
        return WilcoxonResult(statistic=statistic, p_value=p, n=n, method="exact")
    mean = n * (n + 1) / 4.0
    tie_sizes: dict[float, int] = {}
    for r in ranks:
        tie_sizes[r] = tie_sizes.get(r, 0) + 1
    tie_term = sum(t ** 3 - t for t in tie_sizes.values())
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    sd = math.sqrt(variance)
    z = (statistic - mean + 0.5) / sd
    p = min(1.0, 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0)))
    return WilcoxonResult(statistic=statistic, p_value=p, n=n, method="normal")


@dataclass(frozen=True)
class TruthCase:
    query: str
    structured: dict | None
    relevant_ids: tuple[int, ...]


def load_truth_cases(path: str | Path) -> list[TruthCase]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ValidationError("truth-case file must be a JSON array")
    cases = []
    for i, entry in enumerate(payload):
        if "query" not in entry:
            raise ValidationError(f"truth case {i} lacks a query")
        cases.append(TruthCase(
            query=str(entry["query"]),
            structured=entry.get("structured"),
            relevant_ids=tuple(int(r) for r in entry.get("relevant_ids", [])),
        ))
    return cases


def _latency_stats(samples: list[float]) -> dict:
    if not samples:
        return {"mean": 0.0, "p50": 0.0, "p95": 0.0}
    arr = np.asarray(samples, dtype=np.float64)
    return {"mean": float(arr.mean()),
            "p50": float(np.percentile(arr, 50)),
            "p95": float(np.percentile(arr, 95))}


def _significance(rerank_vals: list[float], plain_vals: list[float]) -> dict:
    try:
        result = wilcoxon_signed_rank(rerank_vals, plain_vals)
        return {"W": result.statistic, "p_value": result.p_value,
                "n": result.n, "method": result.method}
    except AllZeroDifferences:
        return {"W": 0.0, "p_value": 1.0, "n": 0, "method": "degenerate"}


def evaluate_retrieval(tree: BallTree, cases: Sequence[TruthCase], k_max: int,
                       use_rerank: bool = False,
                       backend: CompletionBackend | None = None,
                       engine: Engine | None = None) -> dict:
    """Run every truth case through the search pipeline and aggregate
    precision/recall curves, significance tests, and latency stats."""
    if k_max < 1:
        raise ValidationError(f"k_max must be >= 1, got {k_max}")
    if engine is None:
        engine = Engine(dataset=tree.dataset, tree=tree,
                        provider=_default_provider(tree.dataset),
                        llm_backend=backend)
    dataset = engine.dataset
    known_ids = {int(i) for i in dataset.ids}
    for case in cases:
        if not case.relevant_ids:
            raise EmptyRelevantSet(f"case {case.query!r} has no relevant ids")
        for rid in case.relevant_ids:
            if rid not in known_ids:
                raise UnknownRelevantId(rid)

    ks = list(range(1, k_max + 1))
    plain_p: dict[int, list[float]] = {k: [] for k in ks}
    plain_r: dict[int, list[float]] = {k: [] for k in ks}
    rr_p: dict[int, list[float]] = {k: [] for k in ks}
    rr_r: dict[int, list[float]] = {k: [] for k in ks}
    lat_structure: list[float] = []
    lat_search: list[float] = []
    lat_rerank: list[float] = []
    per_case = []

    for case in cases:
        relevant = set(case.relevant_ids)
        if case.structured is not None:
            query, _ = validate_structured_query(dataset.schema, case.structured,
                                                 strict=True)
        else:
            if backend is None:
                raise ValidationError(
                    f"case {case.query!r} has no structured form and no "
                    "backend was provided")
            t0 = time.monotonic()
            query = structure_query(case.query, dataset.schema, backend)
            lat_structure.append((time.monotonic() - t0) * 1000.0)

        t0 = time.monotonic()
        pool_k = pool_size(k_max, dataset.n) if use_rerank else k_max
        pool = engine.structured_hits(query, pool_k)
        lat_search.append((time.monotonic() - t0) * 1000.0)
        plain_ids = [h.id for h in pool[:k_max]]

        rerank_ids: list[int] | None = None
        if use_rerank:
            if backend is None:
                raise ValidationError("re-ranking needs a completion backend")
            t0 = time.monotonic()
            reranked, _outcome = apply_rerank(case.query, pool, k_max,
                                              backend, dataset)
            lat_rerank.append((time.monotonic() - t0) * 1000.0)
            rerank_ids = [h.id for h in reranked]

        for k in ks:
            plain_p[k].append(precision_at_k(plain_ids, relevant, k))
            plain_r[k].append(recall_at_k(plain_ids, relevant, k))
            if rerank_ids is not None:
                rr_p[k].append(precision_at_k(rerank_ids, relevant, k))
                rr_r[k].append(recall_at_k(rerank_ids, relevant, k))
        per_case.append({"query": case.query, "relevant": sorted(relevant),
                         "knn_ids": plain_ids, "rerank_ids": rerank_ids})

    report: dict = {
        "k_max": k_max,
        "cases": len(cases),
        "knn": {
            "precision_at_k": [float(np.mean(plain_p[k])) for k in ks],
            "recall_at_k": [float(np.mean(plain_r[k])) for k in ks],
        },
        "per_case": per_case,
        "latency_ms": {
            "structure": _latency_stats(lat_structure),
            "search": _latency_stats(lat_search),
            "rerank": _latency_stats(lat_rerank),
        },
        "tool": {"name": "spelunker", "version": _version()},
    }
    if use_rerank:
        report["reranked"] = {
            "precision_at_k": [float(np.mean(rr_p[k])) for k in ks],
            "recall_at_k": [float(np.mean(rr_r[k])) for k in ks],
        }
        pooled_rp = [v for k in ks for v in rr_p[k]]
        pooled_pp = [v for k in ks for v in plain_p[k]]
        pooled_rr = [v for k in ks for v in rr_r[k]]
        pooled_pr = [v for k in ks for v in plain_r[k]]
        report["significance"] = {
            "pooled": {
                "precision": _significance(pooled_rp, pooled_pp),
                "recall": _significance(pooled_rr, pooled_pr),
            },
            "per_k": {
                str(k): {
                    "precision": _significance(rr_p[k], plain_p[k]),
                    "recall": _significance(rr_r[k], plain_r[k]),
                } for k in ks
            },
        }
    return report


def evaluate_extraction(cases: Sequence[TruthCase], schema, backend: CompletionBackend) -> dict:
    """Score LLM structuring against ground-truth structured queries.

    Counts are pooled over all cases; the fidelity figure is the mean Jaro
    similarity over fields whose key matched, regardless of value equality.
    """
    tp = fp = fn = 0
    jaros: list[float] = []
    per_case = []
    for case in cases:
        if case.structured is None:
            raise ValidationError(f"case {case.query!r} lacks a structured ground truth")
        truth, _ = validate_structured_query(schema, case.structured, strict=True)
        predicted = structure_query(case.query, schema, backend)
        counts = extraction_confusion(truth, predicted)
        tp += counts.tp
        fp += counts.fp
        fn += counts.fn
        truth_map = {k.casefold(): v for k, v in truth.values.items()}
        pred_map = {k.casefold(): v for k, v in predicted.values.items()}
        case_jaros = [jaro(_as_text(truth_map[key]), _as_text(pred_map[key]))
                      for key in truth_map if key in pred_map]
        jaros.extend(case_jaros)
        per_case.append({
            "query": case.query,
            "tp": counts.tp, "fp": counts.fp, "fn": counts.fn,
            "predicted": dict(predicted.values),
        })
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    return {
        "tp": tp, "fp": fp, "fn": fn,
        "precision": precision,
        "recall": recall,
        "f1": f1(precision, recall),
        "mean_jaro": float(np.mean(jaros)) if jaros else 0.0,
        "per_case": per_case,
        "tool": {"name": "spelunker", "version": _version()},
    }


def export_curves_csv(report: dict) -> str:
    """CSV of the precision/recall curves in the retrieval report."""
    lines = ["k,knn_precision,knn_recall,rerank_precision,rerank_recall"]
    ks = range(1, report["k_max"] + 1)
    rr = report.get("reranked")
    for i, k in enumerate(ks):
        rp = f"{rr['precision_at_k'][i]:.6f}" if rr else ""
        rc = f"{rr['recall_at_k'][i]:.6f}" if rr else ""
        lines.append(f"{k},{report['knn']['precision_at_k'][i]:.6f},"
                     f"{report['knn']['recall_at_k'][i]:.6f},{rp},{rc}")
    return "\n".join(lines) + "\n"


def _as_text(value: object) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _default_provider(dataset):
    from .pipeline import provider_for
    return provider_for(dataset)


def _version() -> str:
    from . import __version__
    return __version__
