"""Embedding providers for categorical text.

Two implementations of one contract: ``embed(text)`` returns a unit-norm
vector of fixed dimension, deterministically for identical input. The local
provider hashes character trigrams and needs no model weights; the HTTP
provider posts to a remote embedding service.

All vectors are canonicalized to float32 precision (then widened back to
float64 for arithmetic) so that the on-disk f32 representation is lossless
and equal texts always yield bitwise-equal vectors.
"""

from __future__ import annotations

import os
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import ProviderFailure

EMBED_API_KEY_ENV = "SPELUNKER_EMBED_API_KEY"
DEFAULT_EMBED_DIM = 64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_PAD = "\x00"


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def canonicalize(vector: np.ndarray) -> np.ndarray:
    """Quantize to float32 and widen back to float64.

    This is the canonical in-memory form: every stored or queried vector
    passes through here exactly once, so save/load round-trips are bit-exact
    and identical texts compare at distance zero.
    """
    return np.asarray(vector, dtype=np.float32).astype(np.float64)


class EmbeddingProvider(Protocol):
    def dimension(self) -> int: ...

    def embed(self, text: str) -> np.ndarray | None:
        """Unit-norm vector for ``text``, or None for empty/whitespace text."""
        ...


class LocalTrigramEmbedder:
    """Deterministic offline embedder: signed hashed character trigrams.

    The text is lowercased and padded with one NUL boundary marker at each
    end; each character trigram is hashed with 64-bit FNV-1a; hash ``h``
    adds +1 or -1 (sign from the top hash bit) to bucket ``h mod dim``;
    the bucket vector is L2-normalized.
    """

    def __init__(self, dim: int = DEFAULT_EMBED_DIM):
        if dim < 8:
            raise ValueError(f"embedding dimension must be >= 8, got {dim}")
        self._dim = dim

    def dimension(self) -> int:
        return self._dim

    def embed(self, text: str) -> np.ndarray | None:
        if not text or not text.strip():
            return None
        padded = _PAD + text.lower() + _PAD
        buckets = np.zeros(self._dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            h = fnv1a64(padded[i:i + 3].encode("utf-8"))
            sign = 1.0 if (h >> 63) == 0 else -1.0
            buckets[h % self._dim] += sign
        norm = float(np.linalg.norm(buckets))
        if norm == 0.0:
            # Signs cancelled exactly; fall back to a single deterministic bucket.
            buckets[fnv1a64(padded.encode("utf-8")) % self._dim] = 1.0
            norm = 1.0
        return canonicalize(buckets / norm)


class HttpEmbeddingProvider:
    """Client for a remote embedding service.

    Posts ``{"texts": [...]}`` to ``{base_url}/embed`` and expects
    ``{"vectors": [[...], ...]}``. Vectors are re-normalized on receipt since
    remote models may return non-unit output. A bearer token is read from
    ``SPELUNKER_EMBED_API_KEY`` when set.
    """

    def __init__(self, base_url: str, dim: int, timeout: float = 30.0,
                 session: requests.Session | None = None):
        if dim < 8:
            raise ValueError(f"embedding dimension must be >= 8, got {dim}")
        self._base_url = base_url.rstrip("/")
        self._dim = dim
        self._timeout = timeout
        self._session = session or requests.Session()

    def dimension(self) -> int:
        return self._dim

    def embed(self, text: str) -> np.ndarray | None:
        if not text or not text.strip():
            return None
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        headers = {}
        token = os.environ.get(EMBED_API_KEY_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._session.post(
                f"{self._base_url}/embed",
                json={"texts": list(texts)},
                headers=headers,
                timeout=self._timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:
            raise ProviderFailure(f"embedding request failed: {exc}") from exc
        except ValueError as exc:
            raise ProviderFailure(f"embedding response is not JSON: {exc}") from exc
        vectors = payload.get("vectors") if isinstance(payload, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderFailure(
                f"embedding response must carry {len(texts)} vectors")
        out = []
        for i, vec in enumerate(vectors):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self._dim,):
                raise ProviderFailure(
                    f"vector {i} has shape {arr.shape}, expected ({self._dim},)")
            norm = float(np.linalg.norm(arr))
            if not np.isfinite(norm) or norm == 0.0:
                raise ProviderFailure(f"vector {i} cannot be normalized (norm={norm})")
            out.append(canonicalize(arr / norm))
        return out
