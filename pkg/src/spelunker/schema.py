"""Domain types, schema validation, and CSV ingestion.

A :class:`DatasetSchema` declares what each column of a dataset is
(numeric, boolean, or categorical), its default search weight, and whether
missing values are allowed. Raw rows are loaded into :class:`RawRecord`
objects; typed values live in the :data:`FieldValue` union produced by the
preprocessing stage.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .errors import (
    DuplicateField,
    EmptySchema,
    MalformedCsv,
    MissingColumn,
    NegativeWeight,
    ValidationError,
)


class FieldKind(str, Enum):
    NUMERIC = "numeric"
    BOOLEAN = "boolean"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FieldSpec:
    """One dataset column: its kind, search weight, and missing policy."""

    name: str
    kind: FieldKind
    weight: float = 1.0
    allow_missing: bool = True


@dataclass(frozen=True)
class DatasetSchema:
    """Ordered collection of field specs, plus an optional id column."""

    fields: tuple[FieldSpec, ...]
    id_field: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    def names_of(self, kind: FieldKind) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields if f.kind is kind)


@dataclass(frozen=True)
class RawRecord:
    """One ingested row: an id plus raw text values keyed by field name.

    Fields absent from ``values`` are missing. Values are kept verbatim as
    read from the source.
    """

    id: int
    values: Mapping[str, str]


class _MissingType:
    """Singleton marker for an absent value."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __reduce__(self):
        return (_MissingType, ())


MISSING = _MissingType()


@dataclass(frozen=True)
class Number:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(f"Number must be finite, got {self.value!r}")


@dataclass(frozen=True)
class Flag:
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValidationError(f"Flag must be 0 or 1, got {self.value!r}")


@dataclass(frozen=True, eq=False)
class Text:
    """A categorical value: its unit-norm embedding plus the original text."""

    vector: np.ndarray
    original: str

    def __post_init__(self):
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > 1e-6:
            raise ValidationError(
                f"Text vector must be unit-norm (got {norm!r}) for {self.original!r}")

    def __eq__(self, other):
        return (isinstance(other, Text) and self.original == other.original
                and np.array_equal(self.vector, other.vector))


FieldValue = Union[Number, Flag, Text, _MissingType]


def validate_schema(schema: DatasetSchema) -> DatasetSchema:
    """Check schema invariants; return the schema unchanged if they hold."""
    if not schema.fields:
        raise EmptySchema("schema declares no fields")
    seen: set[str] = set()
    for spec in schema.fields:
        if not spec.name or not spec.name.strip():
            raise ValidationError("field name must be non-empty")
        if spec.name in seen:
            raise DuplicateField(spec.name)
        seen.add(spec.name)
        if not math.isfinite(spec.weight) or spec.weight < 0:
            raise NegativeWeight(spec.name, spec.weight)
    if schema.id_field is not None and schema.id_field in seen:
        raise ValidationError(
            f"id_field {schema.id_field!r} must not name a schema field")
    return schema


def schema_from_json(text: str) -> DatasetSchema:
    """Parse the JSON schema file format."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"schema file is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "fields" not in obj:
        raise ValidationError('schema JSON must be an object with a "fields" array')
    specs = []
    for entry in obj["fields"]:
        try:
            kind = FieldKind(entry["kind"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad field entry {entry!r}: {exc}") from exc
        specs.append(FieldSpec(
            name=entry.get("name", ""),
            kind=kind,
            weight=float(entry.get("weight", 1.0)),
            allow_missing=bool(entry.get("allow_missing", True)),
        ))
    schema = DatasetSchema(fields=tuple(specs), id_field=obj.get("id_field"))
    return validate_schema(schema)


def schema_to_json(schema: DatasetSchema) -> dict:
    return {
        "id_field": schema.id_field,
        "fields": [
            {"name": f.name, "kind": f.kind.value, "weight": f.weight,
             "allow_missing": f.allow_missing}
            for f in schema.fields
        ],
    }


def load_schema(path: str | Path) -> DatasetSchema:
    return schema_from_json(Path(path).read_text(encoding="utf-8"))


def load_csv(path: str | Path, schema: DatasetSchema) -> list[RawRecord]:
    """Load records from a UTF-8, RFC-4180 CSV file with a header row.

    Empty or whitespace-only cells become missing values. Columns not named
    by the schema are ignored; a schema field with no matching column is an
    error. Ids come from ``schema.id_field`` when set, else 0-based row order.
    """
    validate_schema(schema)
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv(0, "file has no header row") from None
        col_of = {name: i for i, name in enumerate(header)}
        for spec in schema.fields:
            if spec.name not in col_of:
                raise MissingColumn(spec.name)
        id_col = None
        if schema.id_field is not None:
            if schema.id_field not in col_of:
                raise MissingColumn(schema.id_field)
            id_col = col_of[schema.id_field]

        records: list[RawRecord] = []
        seen_ids: set[int] = set()
        for row_num, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise MalformedCsv(row_num, f"expected {len(header)} cells, got {len(row)}")
            if id_col is not None:
                raw_id = row[id_col].strip()
                try:
                    rec_id = int(raw_id)
                except ValueError:
                    raise MalformedCsv(row_num, f"id cell {raw_id!r} is not an integer") from None
                if rec_id < 0:
                    raise MalformedCsv(row_num, f"id {rec_id} is negative")
            else:
                rec_id = row_num - 1
            if rec_id in seen_ids:
                raise MalformedCsv(row_num, f"duplicate id {rec_id}")
            seen_ids.add(rec_id)
            values = {}
            for spec in schema.fields:
                cell = row[col_of[spec.name]]
                if cell.strip():
                    values[spec.name] = cell
            records.append(RawRecord(id=rec_id, values=values))
    return records
