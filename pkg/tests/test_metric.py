import math

import numpy as np
import pytest

from spelunker import FieldKind, MISSING, combined_distance, field_distance
from spelunker.errors import InvalidWeight, KindMismatch, UnknownField
from spelunker.metric import (
    CAPS,
    MISSING_PENALTIES,
    breakdown_for_row,
    pack_query,
)
from spelunker.schema import Flag, Number, Text

from conftest import canonical_unit, synth_dataset, synth_query, synth_schema


def unit(vec):
    arr = np.asarray(vec, dtype=np.float64)
    return arr / np.linalg.norm(arr)


def text(vec):
    return Text(vector=unit(vec), original="t")


# --- field_distance ---------------------------------------------------------

def test_boolean_match_is_zero():
    assert field_distance(FieldKind.BOOLEAN, Flag(1), Flag(1)) == 0.0
    assert field_distance(FieldKind.BOOLEAN, Flag(1), Flag(0)) == 1.0


def test_categorical_identical_and_orthogonal():
    v = text([1.0, 0.0, 0.0, 0.0])
    w = text([0.0, 1.0, 0.0, 0.0])
    assert field_distance(FieldKind.CATEGORICAL, v, v) == 0.0
    assert field_distance(FieldKind.CATEGORICAL, v, w) == \
        pytest.approx(1.41421, abs=1e-5)


def test_categorical_opposite_capped_at_two():
    v = text([1.0, 0.0])
    w = text([-1.0, 0.0])
    assert field_distance(FieldKind.CATEGORICAL, v, w) == pytest.approx(2.0, abs=1e-9)


def test_numeric_clamped_at_cap():
    assert field_distance(FieldKind.NUMERIC, Number(0.0), Number(9.0)) == 6.0
    assert field_distance(FieldKind.NUMERIC, Number(0.0), Number(1.5)) == 1.5


def test_missing_penalties():
    assert field_distance(FieldKind.NUMERIC, Number(1.0), MISSING) == 3.0
    assert field_distance(FieldKind.BOOLEAN, MISSING, Flag(0)) == 0.5
    assert field_distance(FieldKind.CATEGORICAL, MISSING, text([1, 0])) == 1.0
    for kind in FieldKind:
        assert field_distance(kind, MISSING, MISSING) == 0.0


def test_kind_mismatch():
    with pytest.raises(KindMismatch):
        field_distance(FieldKind.NUMERIC, Flag(1), Number(0.0))


# --- combined_distance -------------------------------------------------------

def test_combined_single_field_identity():
    schema = synth_schema(n_num=1, n_bool=0, n_cat=0)
    out = combined_distance(schema, {"n0": (Number(0.0), 1.0)}, {"n0": Number(1.5)})
    assert out.total == 1.5
    assert len(out.per_field) == 1


def test_combined_three_four_five():
    schema = synth_schema(n_num=2, n_bool=0, n_cat=0)
    query = {"n0": (Number(0.0), 1.0), "n1": (Number(0.0), 1.0)}
    record = {"n0": Number(3.0), "n1": Number(4.0)}
    out = combined_distance(schema, query, record)
    assert out.total == pytest.approx(5.0, abs=1e-12)


def test_combined_equal_record_is_zero():
    schema = synth_schema(n_num=1, n_bool=1, n_cat=1)
    v = text([0.3, -0.4, 0.5, 1.0])
    query = {"n0": (Number(1.25), 2.0), "b0": (Flag(1), 1.0), "c0": (v, 4.0)}
    record = {"n0": Number(1.25), "b0": Flag(1), "c0": v}
    assert combined_distance(schema, query, record).total == 0.0


def test_combined_ignores_unqueried_fields():
    schema = synth_schema(n_num=2, n_bool=0, n_cat=0)
    out = combined_distance(schema, {"n0": (Number(0.0), 1.0)},
                            {"n0": Number(1.0), "n1": Number(99.0)})
    assert out.total == 1.0


def test_combined_unknown_field():
    schema = synth_schema(n_num=1, n_bool=0, n_cat=0)
    with pytest.raises(UnknownField):
        combined_distance(schema, {"zzz": (Number(0.0), 1.0)}, {})


def test_combined_rejects_bad_weight():
    schema = synth_schema(n_num=1, n_bool=0, n_cat=0)
    with pytest.raises(InvalidWeight):
        combined_distance(schema, {"n0": (Number(0.0), 0.0)}, {"n0": Number(1.0)})


def test_breakdown_total_consistency():
    rng = np.random.default_rng(11)
    ds = synth_dataset(rng, 30)
    for _ in range(25):
        values, weights = synth_query(rng, ds)
        packed = pack_query(ds, values, weights)
        for row in range(0, 30, 7):
            breakdown = breakdown_for_row(ds, packed, row)
            recomputed = sum(e.contribution for e in breakdown.per_field)
            assert breakdown.total ** 2 == pytest.approx(recomputed, abs=1e-9)


# --- metric axioms -----------------------------------------------------------

def _random_value(rng, kind, dim=8):
    roll = rng.random()
    if roll < 0.15:
        return MISSING
    if kind is FieldKind.NUMERIC:
        return Number(float(rng.uniform(-10, 10)))
    if kind is FieldKind.BOOLEAN:
        return Flag(int(rng.integers(0, 2)))
    return Text(vector=canonical_unit(rng, dim), original="x")


@pytest.mark.parametrize("kind", list(FieldKind))
def test_metric_axioms_per_kind(kind):
    rng = np.random.default_rng(hash(kind.value) % 2 ** 32)
    for _ in range(2000):
        x = _random_value(rng, kind)
        y = _random_value(rng, kind)
        z = _random_value(rng, kind)
        dxy = field_distance(kind, x, y)
        dyx = field_distance(kind, y, x)
        dxz = field_distance(kind, x, z)
        dyz = field_distance(kind, y, z)
        assert dxy >= 0.0
        assert dxy == dyx
        assert field_distance(kind, x, x) == 0.0
        assert dxy <= CAPS[kind] + 1e-12
        assert dxz <= dxy + dyz + 1e-9


def test_combined_metric_axioms_mixed():
    rng = np.random.default_rng(123)
    schema = synth_schema(n_num=1, n_bool=1, n_cat=1)
    kinds = {f.name: f.kind for f in schema.fields}
    weights = {"n0": 2.0, "b0": 0.5, "c0": 1.5}

    def sample():
        return {name: _random_value(rng, kind) for name, kind in kinds.items()}

    def dist(a, b):
        query = {name: (value, weights[name]) for name, value in a.items()}
        return combined_distance(schema, query, b).total

    for _ in range(800):
        x, y, z = sample(), sample(), sample()
        assert dist(x, y) == pytest.approx(dist(y, x), abs=1e-12)
        assert dist(x, x) == 0.0
        assert dist(x, z) <= dist(x, y) + dist(y, z) + 1e-9


def test_weight_scaling_scales_total_and_keeps_ranking():
    rng = np.random.default_rng(5)
    ds = synth_dataset(rng, 40)
    values, weights = synth_query(rng, ds)
    packed = pack_query(ds, values, weights)
    c = 2.5
    scaled = pack_query(ds, values, {k: c * w for k, w in weights.items()})

    from spelunker import brute_force_knn
    base = brute_force_knn(ds, packed, 40)
    boosted = brute_force_knn(ds, scaled, 40)
    assert [h.id for h in base] == [h.id for h in boosted]
    for a, b in zip(base, boosted):
        assert b.distance == pytest.approx(a.distance * math.sqrt(c), abs=1e-9)


def test_monotone_in_single_field_distance():
    schema = synth_schema(n_num=2, n_bool=0, n_cat=0)
    record = {"n0": Number(0.0), "n1": Number(2.0)}
    base = combined_distance(schema, {"n0": (Number(0.0), 1.0),
                                      "n1": (Number(0.0), 3.0)}, record)
    moved = combined_distance(schema, {"n0": (Number(1.0), 1.0),
                                       "n1": (Number(0.0), 3.0)}, record)
    assert moved.total >= base.total


def test_missing_penalty_is_half_cap():
    for kind, cap in CAPS.items():
        assert MISSING_PENALTIES[kind] == cap / 2.0
