"""Convert raw records into the processed feature space.

Numeric fields are standard-scaled, boolean fields binarized, categorical
fields embedded as unit vectors. The result is a :class:`ProcessedDataset`
holding column-packed arrays (the form the distance kernels consume) plus
the original raw records for display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbeddingProvider, HttpEmbeddingProvider, LocalTrigramEmbedder
from .errors import (
    NonFinite,
    NonNumericValue,
    UnrecognizedBoolean,
    ValidationError,
)
from .schema import (
    MISSING,
    DatasetSchema,
    FieldKind,
    FieldValue,
    Flag,
    Number,
    RawRecord,
    Text,
    validate_schema,
)

_TRUE_TOKENS = {"true", "yes", "1", "y"}
_FALSE_TOKENS = {"false", "no", "0", "n"}

_EMBED_BATCH = 256


@dataclass(frozen=True)
class ScalerStats:
    """Standardization statistics for one numeric column."""

    mean: float
    std: float
    constant: bool = False


def fit_numeric_scaler(values: Sequence[float]) -> ScalerStats:
    """Fit mean/std on the non-missing values of a column.

    Uses the population standard deviation. Columns with (near-)zero spread
    are flagged constant and given std 1 so scaling maps them to 0.
    """
    if len(values) == 0:
        return ScalerStats(mean=0.0, std=1.0, constant=True)
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std())
    if std < 1e-12:
        return ScalerStats(mean=mean, std=1.0, constant=True)
    return ScalerStats(mean=mean, std=std, constant=False)


def scale_numeric(stats: ScalerStats, x: float) -> float:
    """Standard-scale one value; constant columns scale to 0."""
    if not math.isfinite(x):
        raise NonFinite(x)
    if stats.constant:
        return 0.0
    return (x - stats.mean) / stats.std


def parse_boolean(raw: str):
    """Map a raw token to 1, 0, or MISSING (empty input)."""
    token = raw.strip().casefold()
    if not token:
        return MISSING
    if token in _TRUE_TOKENS:
        return 1
    if token in _FALSE_TOKENS:
        return 0
    raise UnrecognizedBoolean(raw)


def parse_numeric(raw: str, field_name: str, record_id: int) -> float:
    try:
        value = float(raw.strip())
    except ValueError:
        raise NonNumericValue(field_name, record_id, raw) from None
    if not math.isfinite(value):
        raise NonNumericValue(field_name, record_id, raw)
    return value


@dataclass
class ProcessedDataset:
    """Column-packed dataset in the processed feature space.

    Array layout (row order == record order):
      - ``num`` (n, #numeric) float64 scaled values, 0 where missing
      - ``boo`` (n, #boolean) uint8 0/1, 0 where missing
      - ``cat`` (n, #categorical) int32 index into ``emb``, -1 where missing
      - ``num_miss`` / ``boo_miss`` uint8 missing masks
      - ``emb`` (#unique texts, embed_dim) float64 unit vectors
    """

    schema: DatasetSchema
    ids: np.ndarray
    num: np.ndarray
    num_miss: np.ndarray
    boo: np.ndarray
    boo_miss: np.ndarray
    cat: np.ndarray
    emb: np.ndarray
    scalers: dict[str, ScalerStats]
    embed_dim: int
    embedder_meta: dict
    originals: dict[int, RawRecord]
    _row_of: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._row_of:
            self._row_of = {int(i): r for r, i in enumerate(self.ids)}

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def num_fields(self) -> tuple[str, ...]:
        return self.schema.names_of(FieldKind.NUMERIC)

    @property
    def bool_fields(self) -> tuple[str, ...]:
        return self.schema.names_of(FieldKind.BOOLEAN)

    @property
    def cat_fields(self) -> tuple[str, ...]:
        return self.schema.names_of(FieldKind.CATEGORICAL)

    def row_of(self, record_id: int) -> int:
        return self._row_of[record_id]

    def value_at(self, row: int, name: str) -> FieldValue:
        """Processed value of one field of one record."""
        spec = self.schema.field_map()[name]
        if spec.kind is FieldKind.NUMERIC:
            col = self.num_fields.index(name)
            if self.num_miss[row, col]:
                return MISSING
            return Number(float(self.num[row, col]))
        if spec.kind is FieldKind.BOOLEAN:
            col = self.bool_fields.index(name)
            if self.boo_miss[row, col]:
                return MISSING
            return Flag(int(self.boo[row, col]))
        col = self.cat_fields.index(name)
        idx = int(self.cat[row, col])
        if idx < 0:
            return MISSING
        original = self.originals[int(self.ids[row])].values.get(name, "")
        return Text(vector=self.emb[idx], original=original)

    def record_values(self, record_id: int) -> dict[str, FieldValue]:
        row = self.row_of(record_id)
        return {name: self.value_at(row, name) for name in self.schema.field_names}


def _provider_kind(provider: EmbeddingProvider) -> str:
    if isinstance(provider, LocalTrigramEmbedder):
        return "local"
    if isinstance(provider, HttpEmbeddingProvider):
        return "http"
    return "custom"


def _embed_unique(texts: list[str], provider: EmbeddingProvider) -> list[np.ndarray]:
    batch = getattr(provider, "embed_batch", None)
    if batch is None:
        return [provider.embed(t) for t in texts]
    out: list[np.ndarray] = []
    for start in range(0, len(texts), _EMBED_BATCH):
        out.extend(batch(texts[start:start + _EMBED_BATCH]))
    return out


def build_processed_dataset(
    records: Iterable[RawRecord],
    schema: DatasetSchema,
    provider: EmbeddingProvider,
) -> ProcessedDataset:
    """Fit scalers, convert every value per its field kind, and pack arrays.

    Embedding calls are deduplicated per distinct (stripped) text across the
    whole dataset.
    """
    validate_schema(schema)
    records = list(records)
    names = set(schema.field_names)
    for rec in records:
        extra = set(rec.values) - names
        if extra:
            raise ValidationError(
                f"record {rec.id} has values for unknown fields: {sorted(extra)}")
    ids = [rec.id for rec in records]
    if len(set(ids)) != len(ids):
        raise ValidationError("record ids must be unique")

    n = len(records)
    num_names = schema.names_of(FieldKind.NUMERIC)
    bool_names = schema.names_of(FieldKind.BOOLEAN)
    cat_names = schema.names_of(FieldKind.CATEGORICAL)
    dim = provider.dimension()

    # Parse numerics first so scalers fit on all non-missing values.
    raw_num = np.zeros((n, len(num_names)), dtype=np.float64)
    num_miss = np.ones((n, len(num_names)), dtype=np.uint8)
    for col, name in enumerate(num_names):
        for row, rec in enumerate(records):
            raw = rec.values.get(name)
            if raw is None:
                continue
            raw_num[row, col] = parse_numeric(raw, name, rec.id)
            num_miss[row, col] = 0

    scalers: dict[str, ScalerStats] = {}
    num = np.zeros_like(raw_num)
    for col, name in enumerate(num_names):
        present = num_miss[:, col] == 0
        stats = fit_numeric_scaler(raw_num[present, col])
        scalers[name] = stats
        for row in np.nonzero(present)[0]:
            num[row, col] = scale_numeric(stats, float(raw_num[row, col]))

    boo = np.zeros((n, len(bool_names)), dtype=np.uint8)
    boo_miss = np.ones((n, len(bool_names)), dtype=np.uint8)
    for col, name in enumerate(bool_names):
        for row, rec in enumerate(records):
            raw = rec.values.get(name)
            if raw is None:
                continue
            try:
                parsed = parse_boolean(raw)
            except UnrecognizedBoolean:
                raise UnrecognizedBoolean(raw, field=name, record_id=rec.id) from None
            if parsed is MISSING:
                continue
            boo[row, col] = parsed
            boo_miss[row, col] = 0

    cat = np.full((n, len(cat_names)), -1, dtype=np.int32)
    text_index: dict[str, int] = {}
    unique_texts: list[str] = []
    pending: list[tuple[int, int, str]] = []
    for row, rec in enumerate(records):
        for col, name in enumerate(cat_names):
            raw = rec.values.get(name)
            if raw is None:
                continue
            text = raw.strip()
            if not text:
                continue
            if text not in text_index:
                text_index[text] = len(unique_texts)
                unique_texts.append(text)
            pending.append((row, col, text))

    vectors = _embed_unique(unique_texts, provider)
    keep: dict[str, int] = {}
    rows_out: list[np.ndarray] = []
    for text, vec in zip(unique_texts, vectors):
        if vec is None:
            continue
        keep[text] = len(rows_out)
        rows_out.append(np.asarray(vec, dtype=np.float64))
    emb = np.vstack(rows_out) if rows_out else np.zeros((0, dim), dtype=np.float64)
    if emb.shape[0] and emb.shape[1] != dim:
        raise ValidationError(
            f"provider returned dimension {emb.shape[1]}, declared {dim}")
    for row, col, text in pending:
        idx = keep.get(text)
        if idx is not None:
            cat[row, col] = idx

    dataset = ProcessedDataset(
        schema=schema,
        ids=np.asarray(ids, dtype=np.int64),
        num=num,
        num_miss=num_miss,
        boo=boo,
        boo_miss=boo_miss,
        cat=cat,
        emb=emb,
        scalers=scalers,
        embed_dim=dim,
        embedder_meta={"kind": _provider_kind(provider), "dim": dim},
        originals={rec.id: rec for rec in records},
    )

    for spec in schema.fields:
        if spec.allow_missing:
            continue
        missing_rows = _missing_rows(dataset, spec.name)
        if missing_rows:
            rec_id = int(dataset.ids[missing_rows[0]])
            raise ValidationError(
                f"field {spec.name!r} disallows missing values "
                f"(first offender: record {rec_id})")
    return dataset


def _missing_rows(ds: ProcessedDataset, name: str) -> list[int]:
    spec = ds.schema.field_map()[name]
    if spec.kind is FieldKind.NUMERIC:
        col = ds.num_fields.index(name)
        return list(np.nonzero(ds.num_miss[:, col])[0])
    if spec.kind is FieldKind.BOOLEAN:
        col = ds.bool_fields.index(name)
        return list(np.nonzero(ds.boo_miss[:, col])[0])
    col = ds.cat_fields.index(name)
    return list(np.nonzero(ds.cat[:, col] < 0)[0])
