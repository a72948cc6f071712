"""Exception taxonomy for the whole package.

Every error raised by spelunker derives from :class:`SpelunkerError` so
callers (CLI, HTTP service) can map failures to exit codes / status codes
without enumerating concrete classes.
"""

from __future__ import annotations


class SpelunkerError(Exception):
    """Base class for all spelunker errors."""


class ValidationError(SpelunkerError):
    """User-supplied input violates a contract (schema, query, config)."""


# --- schema / ingestion ---------------------------------------------------

class EmptySchema(ValidationError):
    pass


class DuplicateField(ValidationError):
    def __init__(self, field: str):
        super().__init__(f"duplicate field name: {field!r}")
        self.field = field


class NegativeWeight(ValidationError):
    def __init__(self, field: str, weight: float):
        super().__init__(f"field {field!r} has invalid weight {weight!r}; "
                         "weights must be finite and >= 0")
        self.field = field
        self.weight = weight


class MissingColumn(ValidationError):
    def __init__(self, field: str):
        super().__init__(f"CSV has no column for schema field {field!r}")
        self.field = field


class MalformedCsv(ValidationError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"malformed CSV row {row}: {reason}")
        self.row = row


# --- preprocessing --------------------------------------------------------

class NonFinite(ValidationError):
    def __init__(self, value: float):
        super().__init__(f"value must be finite, got {value!r}")
        self.value = value


class UnrecognizedBoolean(ValidationError):
    def __init__(self, raw: str, field: str | None = None, record_id: int | None = None):
        where = f" in field {field!r}" if field else ""
        who = f" (record {record_id})" if record_id is not None else ""
        super().__init__(f"unrecognized boolean token {raw!r}{where}{who}")
        self.raw = raw
        self.field = field
        self.record_id = record_id


class NonNumericValue(ValidationError):
    def __init__(self, field: str, record_id: int, raw: str):
        super().__init__(f"field {field!r} of record {record_id} is not numeric: {raw!r}")
        self.field = field
        self.record_id = record_id
        self.raw = raw


class ProviderFailure(SpelunkerError):
    """An embedding provider call failed."""


# --- metric / search ------------------------------------------------------

class KindMismatch(ValidationError):
    def __init__(self, kind: str, value: object):
        super().__init__(f"value {value!r} is not valid for field kind {kind}")
        self.kind = kind


class UnknownField(ValidationError):
    def __init__(self, field: str):
        super().__init__(f"unknown field: {field!r}")
        self.field = field


class InvalidWeight(ValidationError):
    def __init__(self, field: str, weight: object):
        super().__init__(f"weight for field {field!r} must be finite and > 0, got {weight!r}")
        self.field = field


class EmptyDataset(ValidationError):
    pass


# --- persistence ----------------------------------------------------------

class PersistError(SpelunkerError):
    pass


class BadMagic(PersistError):
    pass


class VersionMismatch(PersistError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"index format version {found}, expected {expected}")
        self.found = found
        self.expected = expected


class ChecksumMismatch(PersistError):
    def __init__(self, section: str):
        super().__init__(f"checksum mismatch in section {section!r}")
        self.section = section


class Truncated(PersistError):
    pass


# --- LLM gateway ----------------------------------------------------------

class BackendFailure(SpelunkerError):
    """The completion backend could not produce a response."""


class UnparseableResponse(SpelunkerError):
    """The backend responded, but no valid structured output could be
    recovered even after one repair round-trip."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class EmptyExtraction(SpelunkerError):
    """The backend returned valid JSON containing no usable field."""


# --- evaluation -----------------------------------------------------------

class EmptyRelevantSet(ValidationError):
    pass


class AllZeroDifferences(SpelunkerError):
    """Every paired difference is zero; the signed-rank statistic is undefined."""


class UnknownRelevantId(ValidationError):
    def __init__(self, record_id: int):
        super().__init__(f"relevant id {record_id} does not exist in the dataset")
        self.record_id = record_id


# --- configuration --------------------------------------------------------

class ConfigError(ValidationError):
    pass
