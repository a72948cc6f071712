import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spelunker import (
    StructuredQuery,
    evaluate_extraction,
    evaluate_retrieval,
    extraction_confusion,
    f1,
    jaro,
    precision_at_k,
    recall_at_k,
    wilcoxon_signed_rank,
)
from spelunker.errors import AllZeroDifferences, EmptyRelevantSet, UnknownRelevantId, ValidationError
from spelunker.evalkit import load_truth_cases


# --- precision / recall -------------------------------------------------------

def test_precision_examples():
    assert precision_at_k(["a", "b", "c"], {"a", "c"}, 3) == pytest.approx(2 / 3)
    assert precision_at_k(["a", "b"], {"a", "b", "z"}, 2) == 1.0
    assert precision_at_k([], {"a"}, 5) == 0.0


def test_precision_short_list_denominator():
    # fewer retrieved than k: relevant fraction is over what was returned
    assert precision_at_k(["a"], {"a"}, 5) == 1.0


def test_recall_examples():
    assert recall_at_k(["a", "b", "c", "d", "e"], {"a", "x", "b", "y"}, 5) == 0.5
    assert recall_at_k(["a", "b"], {"a", "b"}, 2) == 1.0
    assert recall_at_k(["a", "b"], {"x"}, 2) == 0.0


def test_recall_empty_relevant_rejected():
    with pytest.raises(EmptyRelevantSet):
        recall_at_k(["a"], set(), 1)


def test_curves_monotone():
    rng = np.random.default_rng(8)
    for _ in range(50):
        pool = list(range(30))
        retrieved = list(rng.permutation(pool))[:15]
        relevant = set(rng.choice(pool, size=6, replace=False).tolist())
        last_r = 0.0
        for k in range(1, 16):
            p = precision_at_k(retrieved, relevant, k)
            r = recall_at_k(retrieved, relevant, k)
            assert 0.0 <= p <= 1.0
            assert 0.0 <= r <= 1.0
            assert r >= last_r
            last_r = r


# --- confusion ------------------------------------------------------------------

def q(values):
    return StructuredQuery(values=values)


def test_confusion_wrong_value_counts_both_ways():
    counts = extraction_confusion(q({"country": "France", "price": 20.0}),
                                  q({"country": "France", "price": 25.0}))
    assert (counts.tp, counts.fp, counts.fn) == (1, 1, 1)
    assert counts.precision == 0.5
    assert counts.recall == 0.5
    assert f1(counts.precision, counts.recall) == 0.5


def test_confusion_identity():
    truth = q({"country": "Italy", "price": 12.0, "variety": "Sangiovese"})
    counts = extraction_confusion(truth, truth)
    assert (counts.tp, counts.fp, counts.fn) == (3, 0, 0)


def test_confusion_empty_prediction():
    counts = extraction_confusion(q({"a": "x", "b": "y"}), q({}))
    assert (counts.tp, counts.fp, counts.fn) == (0, 0, 2)


def test_confusion_extra_prediction():
    counts = extraction_confusion(q({"a": "x"}), q({"a": "x", "b": "y"}))
    assert (counts.tp, counts.fp, counts.fn) == (1, 1, 0)


def test_confusion_case_insensitive_keys_and_text():
    counts = extraction_confusion(q({"Country": "france"}), q({"country": " France "}))
    assert (counts.tp, counts.fp, counts.fn) == (1, 0, 0)


def test_confusion_numeric_tolerance():
    counts = extraction_confusion(q({"price": 30.0}), q({"price": 30.0 + 1e-8}))
    assert counts.tp == 1
    counts = extraction_confusion(q({"price": 30.0}), q({"price": 30.1}))
    assert (counts.tp, counts.fp, counts.fn) == (0, 1, 1)


# --- f1 ---------------------------------------------------------------------------

def test_f1_basics():
    assert f1(1.0, 1.0) == 1.0
    assert f1(0.0, 0.7) == 0.0
    assert f1(0.0, 0.0) == 0.0
    with pytest.raises(ValidationError):
        f1(1.2, 0.5)


def test_f1_harmonic_value():
    assert f1(0.5, 1.0) == pytest.approx(2 / 3)


@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_bounds(p, r):
    value = f1(p, r)
    assert 0.0 <= value <= 1.0
    assert value <= min(2 * p, 2 * r) + 1e-12
    assert value <= (p + r) / 2 + 1e-12


# --- jaro --------------------------------------------------------------------------

def test_jaro_identity_and_empty():
    assert jaro("abc", "abc") == 1.0
    assert jaro("", "") == 1.0
    assert jaro("", "x") == 0.0
    assert jaro("x", "") == 0.0


def test_jaro_martha():
    assert jaro("MARTHA", "MARHTA") == pytest.approx(17 / 18, abs=1e-9)


def test_jaro_known_values():
    # classic worked examples: m and t computed by hand
    assert jaro("DWAYNE", "DUANE") == pytest.approx(0.822222222222, abs=1e-9)
    assert jaro("DIXON", "DICKSONX") == pytest.approx(0.766666666667, abs=1e-9)


def test_jaro_disjoint():
    assert jaro("abc", "xyz") == 0.0


@settings(max_examples=300)
@given(st.text(max_size=20), st.text(max_size=20))
def test_jaro_symmetry_and_range(a, b):
    ab = jaro(a, b)
    assert ab == jaro(b, a)
    assert 0.0 <= ab <= 1.0


# --- wilcoxon ------------------------------------------------------------------------

def oracle_wilcoxon(diffs):
    """Literal 2^n enumeration of sign assignments."""
    nonzero = [d for d in diffs if d != 0]
    n = len(nonzero)
    magnitudes = [abs(d) for d in nonzero]
    order = sorted(range(n), key=lambda i: magnitudes[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and magnitudes[order[j + 1]] == magnitudes[order[i]]:
            j += 1
        for pos in range(i, j + 1):
            ranks[order[pos]] = (i + j + 2) / 2
        i = j + 1
    w_plus = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, nonzero) if d < 0)
    w_obs = min(w_plus, w_minus)
    hits = 0
    for signs in itertools.product((1, -1), repeat=n):
        s_plus = sum(r for r, s in zip(ranks, signs) if s > 0)
        s_minus = sum(r for r, s in zip(ranks, signs) if s < 0)
        if min(s_plus, s_minus) <= w_obs:
            hits += 1
    return w_obs, hits / 2 ** n


def test_wilcoxon_all_positive_small():
    result = wilcoxon_signed_rank([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert result.statistic == 0.0
    assert result.p_value == 0.0625
    assert result.method == "exact"


def test_wilcoxon_tied_magnitudes():
    result = wilcoxon_signed_rank([1, 0], [0, 1])  # diffs [1, -1]
    assert result.statistic == 1.5
    assert result.p_value == 1.0


def test_wilcoxon_all_zero():
    with pytest.raises(AllZeroDifferences):
        wilcoxon_signed_rank([1, 2], [1, 2])


def test_wilcoxon_rejects_unpaired():
    with pytest.raises(ValidationError):
        wilcoxon_signed_rank([1, 2], [1])
    with pytest.raises(ValidationError):
        wilcoxon_signed_rank([], [])


def test_wilcoxon_matches_enumeration_oracle():
    rng = np.random.default_rng(99)
    for _ in range(30):
        n = int(rng.integers(1, 11))
        diffs = rng.integers(-5, 6, size=n).tolist()
        if all(d == 0 for d in diffs):
            diffs[0] = 1
        x = [float(d) for d in diffs]
        y = [0.0] * n
        expected_w, expected_p = oracle_wilcoxon(diffs)
        result = wilcoxon_signed_rank(x, y)
        assert result.statistic == pytest.approx(expected_w, abs=1e-12)
        assert result.p_value == pytest.approx(expected_p, abs=1e-12)


def test_wilcoxon_matches_scipy_exact_no_ties():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(123)
    for _ in range(10):
        n = 12
        x = rng.normal(size=n)
        y = rng.normal(size=n)  # continuous: no zeros, no ties w.p. 1
        mine = wilcoxon_signed_rank(list(x), list(y))
        ref = scipy_stats.wilcoxon(x, y, mode="exact")
        assert mine.statistic == pytest.approx(float(ref.statistic), abs=1e-9)
        assert mine.p_value == pytest.approx(float(ref.pvalue), abs=1e-9)


def test_wilcoxon_exact_close_to_normal_at_20():
    rng = np.random.default_rng(2718)
    for _ in range(10):
        x = rng.normal(loc=0.3, size=20).tolist()
        y = rng.normal(size=20).tolist()
        exact = wilcoxon_signed_rank(x, y)
        assert exact.method == "exact"
        approx = _normal_approx(x, y)
        assert abs(exact.p_value - approx) < 0.05


def _normal_approx(x, y):
    diffs = [a - b for a, b in zip(x, y)]
    nonzero = [d for d in diffs if d != 0]
    n = len(nonzero)
    mags = [abs(d) for d in nonzero]
    order = sorted(range(n), key=lambda i: mags[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and mags[order[j + 1]] == mags[order[i]]:
            j += 1
        for pos in range(i, j + 1):
            ranks[order[pos]] = (i + j + 2) / 2
        i = j + 1
    w_plus = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, nonzero) if d < 0)
    w = min(w_plus, w_minus)
    mean = n * (n + 1) / 4
    tie_sizes = {}
    for r in ranks:
        tie_sizes[r] = tie_sizes.get(r, 0) + 1
    variance = n * (n + 1) * (2 * n + 1) / 24 - sum(t ** 3 - t for t in tie_sizes.values()) / 48
    z = (w - mean + 0.5) / math.sqrt(variance)
    return min(1.0, math.erfc(-z / math.sqrt(2)))


def test_wilcoxon_normal_method_beyond_20():
    rng = np.random.default_rng(4)
    x = rng.normal(loc=0.5, size=30).tolist()
    y = rng.normal(size=30).tolist()
    result = wilcoxon_signed_rank(x, y)
    assert result.method == "normal"
    assert 0.0 <= result.p_value <= 1.0


# --- evaluate_retrieval / extraction ---------------------------------------------

def test_evaluate_retrieval_plain(wine_engine, truth_cases_file):
    cases = load_truth_cases(truth_cases_file)
    report = evaluate_retrieval(wine_engine.tree, cases, k_max=5,
                                engine=wine_engine)
    assert report["cases"] == 10
    assert len(report["knn"]["precision_at_k"]) == 5
    recall_curve = report["knn"]["recall_at_k"]
    assert all(b >= a - 1e-12 for a, b in zip(recall_curve, recall_curve[1:]))
    for curve in (report["knn"]["precision_at_k"], recall_curve):
        assert all(0.0 <= v <= 1.0 for v in curve)
    # first hit of the italy case is relevant by construction
    assert report["knn"]["precision_at_k"][0] > 0.5


def test_evaluate_retrieval_with_rerank(wine_engine, truth_cases_file, mock_backend):
    cases = load_truth_cases(truth_cases_file)
    report = evaluate_retrieval(wine_engine.tree, cases, k_max=5,
                                use_rerank=True, backend=mock_backend,
                                engine=wine_engine)
    assert "reranked" in report
    assert "significance" in report
    pooled = report["significance"]["pooled"]
    for metric in ("precision", "recall"):
        assert 0.0 <= pooled[metric]["p_value"] <= 1.0
    assert set(report["significance"]["per_k"]) == {"1", "2", "3", "4", "5"}


def test_evaluate_retrieval_identity_rerank_degenerate(wine_engine, truth_cases_file):
    from spelunker import ScriptedMockBackend
    # mock answers with an empty array: repair rules keep the knn order
    identity = ScriptedMockBackend([{"match": "Candidates:", "response": "[]"}])
    cases = load_truth_cases(truth_cases_file)
    report = evaluate_retrieval(wine_engine.tree, cases, k_max=3,
                                use_rerank=True, backend=identity,
                                engine=wine_engine)
    assert report["reranked"] == report["knn"]
    pooled = report["significance"]["pooled"]
    assert pooled["precision"]["p_value"] == 1.0
    assert pooled["recall"]["p_value"] == 1.0
    assert pooled["precision"]["method"] == "degenerate"


def test_evaluate_retrieval_unknown_relevant_id(wine_engine):
    from spelunker.evalkit import TruthCase
    cases = [TruthCase(query="x", structured={"country": "Italy"},
                       relevant_ids=(999,))]
    with pytest.raises(UnknownRelevantId):
        evaluate_retrieval(wine_engine.tree, cases, k_max=2, engine=wine_engine)


def test_evaluate_extraction_fixture(wine_schema, mock_backend, truth_cases_file):
    cases = load_truth_cases(truth_cases_file)
    report = evaluate_extraction(cases, wine_schema, mock_backend)
    # the scripted mock answers one wrong value and one extra key
    assert (report["tp"], report["fp"], report["fn"]) == (12, 2, 1)
    assert report["precision"] == pytest.approx(12 / 14)
    assert report["recall"] == pytest.approx(12 / 13)
    assert report["f1"] == pytest.approx(
        f1(12 / 14, 12 / 13), abs=1e-12)
    # 13 matched keys, one with jaro("12","15") = 2/3
    assert report["mean_jaro"] == pytest.approx((12 + 2 / 3) / 13, abs=1e-9)


def test_export_curves_csv(wine_engine, truth_cases_file):
    from spelunker.evalkit import export_curves_csv
    cases = load_truth_cases(truth_cases_file)
    report = evaluate_retrieval(wine_engine.tree, cases, k_max=3, engine=wine_engine)
    csv_text = export_curves_csv(report)
    lines = csv_text.strip().split("\n")
    assert lines[0] == "k,knn_precision,knn_recall,rerank_precision,rerank_recall"
    assert len(lines) == 4
