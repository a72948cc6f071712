"""Per-field distances for mixed data types and their weighted combination.

Each field kind gets its own bounded metric:

  numeric      |a - b| in scaled units, capped at 6.0
  boolean      0 if equal else 1
  categorical  Euclidean (chord) distance between unit embeddings, capped at 2

A comparison against a missing value costs half the kind's cap; two missing
values cost nothing. Those caps and penalties make every per-field function
a true metric over its value domain including the missing state, and the
weighted-L2 combination of metrics is again a metric, which is what makes
ball-tree pruning sound.

The categorical distance is computed as the Euclidean distance between the
unit vectors rather than via ``sqrt(2 - 2*cos)``; the two are identical for
unit inputs but the difference form is exact at zero, so identical texts
compare at exactly 0.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidWeight, KindMismatch, UnknownField
from .preprocess import ProcessedDataset, scale_numeric
from .schema import (
    MISSING,
    DatasetSchema,
    FieldKind,
    FieldValue,
    Flag,
    Number,
    Text,
    _MissingType,
)

NUMERIC_CAP = 6.0
BOOLEAN_CAP = 1.0
CATEGORICAL_CAP = 2.0

CAPS: dict[FieldKind, float] = {
    FieldKind.NUMERIC: NUMERIC_CAP,
    FieldKind.BOOLEAN: BOOLEAN_CAP,
    FieldKind.CATEGORICAL: CATEGORICAL_CAP,
}

# Penalty charged when exactly one side is missing: half the kind's cap,
# the smallest value that keeps the triangle inequality intact.
MISSING_PENALTIES: dict[FieldKind, float] = {k: c / 2.0 for k, c in CAPS.items()}


@dataclass(frozen=True)
class BreakdownEntry:
    field: str
    distance: float
    weight: float
    contribution: float  # weight * distance**2


@dataclass(frozen=True)
class DistanceBreakdown:
    """Total distance plus every queried field's share of it."""

    total: float
    per_field: tuple[BreakdownEntry, ...]


def _expect(kind: FieldKind, value: FieldValue, cls) -> None:
    if not isinstance(value, cls):
        raise KindMismatch(kind.value, value)


def field_distance(kind: FieldKind, a: FieldValue, b: FieldValue) -> float:
    """Distance between two values of one field, in [0, cap]."""
    a_missing = isinstance(a, _MissingType)
    b_missing = isinstance(b, _MissingType)
    if a_missing and b_missing:
        return 0.0
    if a_missing or b_missing:
        return MISSING_PENALTIES[kind]
    if kind is FieldKind.NUMERIC:
        _expect(kind, a, Number)
        _expect(kind, b, Number)
        return min(abs(a.value - b.value), NUMERIC_CAP)
    if kind is FieldKind.BOOLEAN:
        _expect(kind, a, Flag)
        _expect(kind, b, Flag)
        return 0.0 if a.value == b.value else 1.0
    _expect(kind, a, Text)
    _expect(kind, b, Text)
    diff = a.vector - b.vector
    return min(math.sqrt(float(np.dot(diff, diff))), CATEGORICAL_CAP)


def combined_distance(
    schema: DatasetSchema,
    query: dict[str, tuple[FieldValue, float]],
    record: dict[str, FieldValue],
) -> DistanceBreakdown:
    """Weighted-L2 combination of per-field distances over the query fields.

    ``total = sqrt(sum_f w_f * d_f^2)``. Fields absent from the query
    contribute nothing.
    """
    specs = schema.field_map()
    entries = []
    acc = 0.0
    for name in (f.name for f in schema.fields if f.name in query):
        value, weight = query[name]
        if not math.isfinite(weight) or weight <= 0:
            raise InvalidWeight(name, weight)
        d = field_distance(specs[name].kind, value, record.get(name, MISSING))
        contribution = weight * d * d
        acc += contribution
        entries.append(BreakdownEntry(name, d, weight, contribution))
    unknown = set(query) - set(specs)
    if unknown:
        raise UnknownField(sorted(unknown)[0])
    return DistanceBreakdown(total=math.sqrt(acc), per_field=tuple(entries))


@dataclass(frozen=True)
class PackedQuery:
    """Kernel-ready query: per-kind columns, targets, missing flags, weights.

    ``fields`` preserves schema order and maps each queried field to its
    resolved (value, weight) pair for breakdown rendering.
    """

    num_cols: np.ndarray
    num_vals: np.ndarray
    num_miss: np.ndarray
    num_w: np.ndarray
    bool_cols: np.ndarray
    bool_vals: np.ndarray
    bool_miss: np.ndarray
    bool_w: np.ndarray
    cat_cols: np.ndarray
    cat_vecs: np.ndarray
    cat_miss: np.ndarray
    cat_w: np.ndarray
    fields: tuple[tuple[str, FieldValue, float], ...]

    @property
    def max_weight(self) -> float:
        best = 0.0
        for arr in (self.num_w, self.bool_w, self.cat_w):
            if arr.size:
                best = max(best, float(arr.max()))
        return best


def pack_query(
    dataset: ProcessedDataset,
    values: dict[str, FieldValue],
    weights: dict[str, float],
) -> PackedQuery:
    """Pack processed query values into the array form the kernels consume.

    ``values`` maps field name to a processed FieldValue (scaled Number,
    Flag, Text, or MISSING); ``weights`` must cover exactly the same keys.
    """
    schema = dataset.schema
    specs = schema.field_map()
    for name in values:
        if name not in specs:
            raise UnknownField(name)
    num_names = dataset.num_fields
    bool_names = dataset.bool_fields
    cat_names = dataset.cat_fields
    dim = dataset.embed_dim

    nc, nv, nm, nw = [], [], [], []
    bc, bv, bm, bw = [], [], [], []
    cc, cvecs, cm, cw = [], [], [], []
    ordered: list[tuple[str, FieldValue, float]] = []
    for spec in schema.fields:
        name = spec.name
        if name not in values:
            continue
        value = values[name]
        weight = float(weights[name])
        if not math.isfinite(weight) or weight <= 0:
            raise InvalidWeight(name, weight)
        ordered.append((name, value, weight))
        missing = isinstance(value, _MissingType)
        if spec.kind is FieldKind.NUMERIC:
            if not missing:
                _expect(spec.kind, value, Number)
            nc.append(num_names.index(name))
            nv.append(0.0 if missing else value.value)
            nm.append(1 if missing else 0)
            nw.append(weight)
        elif spec.kind is FieldKind.BOOLEAN:
            if not missing:
                _expect(spec.kind, value, Flag)
            bc.append(bool_names.index(name))
            bv.append(0 if missing else value.value)
            bm.append(1 if missing else 0)
            bw.append(weight)
        else:
            if not missing:
                _expect(spec.kind, value, Text)
            cc.append(cat_names.index(name))
            cvecs.append(np.zeros(dim) if missing else np.asarray(value.vector, dtype=np.float64))
            cm.append(1 if missing else 0)
            cw.append(weight)

    return PackedQuery(
        num_cols=np.asarray(nc, dtype=np.int32),
        num_vals=np.asarray(nv, dtype=np.float64),
        num_miss=np.asarray(nm, dtype=np.uint8),
        num_w=np.asarray(nw, dtype=np.float64),
        bool_cols=np.asarray(bc, dtype=np.int32),
        bool_vals=np.asarray(bv, dtype=np.uint8),
        bool_miss=np.asarray(bm, dtype=np.uint8),
        bool_w=np.asarray(bw, dtype=np.float64),
        cat_cols=np.asarray(cc, dtype=np.int32),
        cat_vecs=(np.vstack(cvecs) if cvecs else np.zeros((0, dim))).astype(np.float64),
        cat_miss=np.asarray(cm, dtype=np.uint8),
        cat_w=np.asarray(cw, dtype=np.float64),
        fields=tuple(ordered),
    )


def breakdown_for_row(dataset: ProcessedDataset, packed: PackedQuery, row: int) -> DistanceBreakdown:
    """Recompute a hit's per-field breakdown through the scalar path."""
    record_id = int(dataset.ids[row])
    record = dataset.record_values(record_id)
    query = {name: (value, weight) for name, value, weight in packed.fields}
    return combined_distance(dataset.schema, query, record)


def query_field_value(
    dataset: ProcessedDataset,
    name: str,
    raw: object,
    embed,
) -> FieldValue:
    """Convert one raw query target into a processed FieldValue.

    ``embed`` is a callable text -> unit vector (or None), typically the
    provider's ``embed``. Numeric targets are scaled with the dataset's
    fitted scaler for that field.
    """
    spec = dataset.schema.field_map().get(name)
    if spec is None:
        raise UnknownField(name)
    if spec.kind is FieldKind.NUMERIC:
        return Number(scale_numeric(dataset.scalers[name], float(raw)))
    if spec.kind is FieldKind.BOOLEAN:
        return Flag(int(raw))
    text = str(raw).strip()
    vector = embed(text)
    if vector is None:
        return MISSING
    return Text(vector=np.asarray(vector, dtype=np.float64), original=str(raw))
