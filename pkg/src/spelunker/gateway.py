"""LLM-backed query structuring and candidate re-ranking.

Both operations sit behind a tiny completion contract (system prompt + user
prompt -> text), with two implementations: a generic chat-completion HTTP
client and a deterministic scripted mock keyed by substring matching on the
user prompt. Structuring parses and validates the model's JSON against the
dataset schema, with one repair round-trip on failure; re-ranking never
fails outward, it falls back to the input order instead.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .errors import (
    BackendFailure,
    EmptyExtraction,
    UnknownField,
    UnparseableResponse,
    ValidationError,
)
from .preprocess import parse_boolean
from .schema import MISSING, DatasetSchema, FieldKind

log = logging.getLogger(__name__)

LLM_API_KEY_ENV = "SPELUNKER_LLM_API_KEY"

STRUCTURE_SYSTEM_PROMPT = (
    "You convert wine search requests into JSON. Allowed keys: {field_list}. "
    "Output ONLY a JSON object. Omit attributes the user did not mention."
)

RERANK_SYSTEM_PROMPT = (
    "Order these items from best to worst match for the request. "
    "Output ONLY a JSON array of ids."
)

_REPAIR_NOTE = (
    "\n\nYour previous response was invalid: {error}. "
    "Output ONLY a valid JSON object whose keys are allowed field names."
)

_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n(.*?)\n?```\s*$", re.DOTALL)


class CompletionBackend(Protocol):
    def complete(self, system_prompt: str, user_prompt: str) -> str: ...


class HttpCompletionBackend:
    """Generic chat-completion client.

    POSTs ``{"model", "messages": [...]}`` and reads
    ``choices[0].message.content``. Requires ``SPELUNKER_LLM_API_KEY`` in the
    environment; sends it as a bearer token.
    """

    def __init__(self, url: str, model: str, timeout: float = 30.0,
                 retries: int = 1, session: requests.Session | None = None):
        if timeout <= 0:
            raise ValidationError(f"timeout must be > 0, got {timeout}")
        token = os.environ.get(LLM_API_KEY_ENV)
        if not token:
            raise BackendFailure(
                f"{LLM_API_KEY_ENV} is not set; export it to use an HTTP "
                "completion backend")
        self._url = url
        self._model = model
        self._timeout = timeout
        self._retries = max(0, min(int(retries), 1))
        self._token = token
        self._session = session or requests.Session()

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        payload = {
            "model": self._model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        }
        headers = {"Authorization": f"Bearer {self._token}"}
        last_error: Exception | None = None
        for _ in range(self._retries + 1):
            try:
                resp = self._session.post(self._url, json=payload,
                                          headers=headers, timeout=self._timeout)
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError,
                    TypeError, ValueError) as exc:
                last_error = exc
        raise BackendFailure(f"completion request failed: {last_error}")


class ScriptedMockBackend:
    """Deterministic backend driven by a script file.

    The script is a JSON array of ``{"match": substring, "response": text}``;
    the first entry whose ``match`` occurs in the user prompt wins. No match
    simulates an outage.
    """

    def __init__(self, entries: Sequence[dict]):
        self._entries = [(e["match"], e["response"]) for e in entries]
        self.calls: list[str] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedMockBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        self.calls.append(user_prompt)
        for match, response in self._entries:
            if match in user_prompt:
                return response
        raise BackendFailure("no scripted response matches the prompt")


@dataclass(frozen=True)
class StructuredQuery:
    """Partial field -> target mapping, plus optional weight overrides."""

    values: dict[str, object]
    weights: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RerankOutcome:
    ordered_ids: list[int]
    used_fallback: bool
    raw_response: str


def field_list_for_prompt(schema: DatasetSchema) -> str:
    return ", ".join(f"{f.name} ({f.kind.value})" for f in schema.fields)


def validate_structured_query(
    schema: DatasetSchema,
    raw_values: dict,
    raw_weights: dict | None = None,
    strict: bool = True,
) -> tuple[StructuredQuery, list[str]]:
    """Canonicalize and type-check a raw field->target mapping.

    Keys are matched to schema names case-insensitively. Unknown keys raise
    in strict mode and are dropped with a warning otherwise; bad values
    always raise. The result carries at least one field or the call fails.
    """
    if not isinstance(raw_values, dict):
        raise ValidationError(f"structured query must be a JSON object, "
                              f"got {type(raw_values).__name__}")
    canon = {name.casefold(): name for name in schema.field_names}
    specs = schema.field_map()
    warnings: list[str] = []
    values: dict[str, object] = {}
    for key, raw in raw_values.items():
        name = canon.get(str(key).casefold())
        if name is None:
            if strict:
                raise UnknownField(str(key))
            warnings.append(f"dropped unknown field {key!r}")
            continue
        values[name] = _coerce_value(specs[name].kind, name, raw)
    weights: dict[str, float] = {}
    for key, raw in (raw_weights or {}).items():
        name = canon.get(str(key).casefold())
        if name is None or name not in values:
            if strict:
                raise UnknownField(str(key))
            warnings.append(f"dropped weight for {key!r}")
            continue
        try:
            w = float(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"weight for {name!r} is not a number: {raw!r}") from None
        if not math.isfinite(w) or w <= 0:
            raise ValidationError(f"weight for {name!r} must be finite and > 0, got {w}")
        weights[name] = w
    if not values:
        raise EmptyExtraction("no usable field in structured query")
    return StructuredQuery(values=values, weights=weights), warnings


def _coerce_value(kind: FieldKind, name: str, raw: object) -> object:
    if kind is FieldKind.NUMERIC:
        if isinstance(raw, bool) or raw is None:
            raise ValidationError(f"field {name!r} needs a number, got {raw!r}")
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"field {name!r} needs a number, got {raw!r}") from None
        if not math.isfinite(value):
            raise ValidationError(f"field {name!r} needs a finite number, got {raw!r}")
        return value
    if kind is FieldKind.BOOLEAN:
        if isinstance(raw, bool):
            return int(raw)
        if isinstance(raw, (int, float)) and raw in (0, 1):
            return int(raw)
        if isinstance(raw, str):
            parsed = parse_boolean(raw)
            if parsed is not MISSING:
                return parsed
        raise ValidationError(f"field {name!r} needs a boolean, got {raw!r}")
    text = str(raw).strip()
    if not text:
        raise ValidationError(f"field {name!r} needs non-empty text")
    return str(raw)


def strip_code_fences(text: str) -> str:
    stripped = text.strip()
    fence = _FENCE_RE.match(stripped)
    return fence.group(1).strip() if fence else stripped


def structure_query(text: str, schema: DatasetSchema,
                    backend: CompletionBackend) -> StructuredQuery:
    """Turn a natural-language request into a validated StructuredQuery.

    One repair round-trip is attempted when the backend's output cannot be
    parsed or validated; a second failure raises.
    """
    if not text or not text.strip():
        raise ValidationError("query text must be non-empty")
    system = STRUCTURE_SYSTEM_PROMPT.format(field_list=field_list_for_prompt(schema))
    prompt = text
    last_raw = ""
    last_error: Exception | None = None
    for attempt in range(2):
        raw = backend.complete(system, prompt)
        last_raw = raw
        try:
            payload = json.loads(strip_code_fences(raw))
            if not isinstance(payload, dict):
                raise ValidationError(
                    f"expected a JSON object, got {type(payload).__name__}")
            query, warnings = validate_structured_query(schema, payload, strict=False)
            for message in warnings:
                log.warning("structure_query: %s", message)
            return query
        except json.JSONDecodeError as exc:
            last_error = exc
            note = f"not valid JSON ({exc.msg})"
        except (ValidationError, EmptyExtraction) as exc:
            last_error = exc
            note = str(exc)
        if attempt == 0:
            prompt = text + _REPAIR_NOTE.format(error=note)
    if isinstance(last_error, EmptyExtraction):
        raise EmptyExtraction(f"no usable field after repair attempt: {last_error}")
    raise UnparseableResponse(
        f"backend output unusable after repair attempt: {last_error}",
        raw_response=last_raw)


def render_candidate_line(rec_id: int, fields: dict[str, str],
                          value_char_limit: int = 300,
                          include: Sequence[str] | None = None) -> str:
    parts = []
    for name, value in fields.items():
        if include is not None and name not in include:
            continue
        text = str(value)
        if len(text) > value_char_limit:
            text = text[:value_char_limit]
        parts.append(f"{name}={text}")
    return f"{rec_id}: " + "; ".join(parts)


def rerank(query_text: str, candidates: Sequence[tuple[int, dict[str, str]]],
           k: int, backend: CompletionBackend,
           value_char_limit: int = 300,
           include_fields: Sequence[str] | None = None) -> RerankOutcome:
    """Ask the backend to reorder candidate ids; fall back to input order.

    The result is always a permutation of the candidate ids: unknown ids are
    dropped, absent ids are appended in their original order, duplicates are
    ignored after first mention.
    """
    if not candidates:
        raise ValidationError("candidates must be non-empty")
    if k < 1 or k > len(candidates):
        raise ValidationError(f"k must be in [1, {len(candidates)}], got {k}")
    input_ids = [rec_id for rec_id, _ in candidates]
    lines = [render_candidate_line(rec_id, fields, value_char_limit, include_fields)
             for rec_id, fields in candidates]
    prompt = f"Request: {query_text}\nCandidates:\n" + "\n".join(lines)
    try:
        raw = backend.complete(RERANK_SYSTEM_PROMPT, prompt)
    except BackendFailure as exc:
        return RerankOutcome(ordered_ids=list(input_ids), used_fallback=True,
                             raw_response=f"backend failure: {exc}")
    try:
        payload = json.loads(strip_code_fences(raw))
        if not isinstance(payload, list):
            raise ValueError(f"expected a JSON array, got {type(payload).__name__}")
    except ValueError:
        return RerankOutcome(ordered_ids=list(input_ids), used_fallback=True,
                             raw_response=raw)
    known = set(input_ids)
    ordered: list[int] = []
    picked: set[int] = set()
    for item in payload:
        rec_id = _as_id(item)
        if rec_id is None or rec_id not in known or rec_id in picked:
            continue
        ordered.append(rec_id)
        picked.add(rec_id)
    ordered.extend(rec_id for rec_id in input_ids if rec_id not in picked)
    return RerankOutcome(ordered_ids=ordered, used_fallback=False, raw_response=raw)


def _as_id(item: object) -> int | None:
    if isinstance(item, bool):
        return None
    if isinstance(item, int):
        return item
    if isinstance(item, str):
        token = item.strip()
        if token.isdigit() or (token.startswith("-") and token[1:].isdigit()):
            return int(token)
    return None
