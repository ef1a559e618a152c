"""Text embeddings and similarity scores backing all knowledge-base retrieval.

Two embedders share one vector type:

* the *reference* embedder, a fully deterministic hashed bag-of-words
  (FNV-1a 64-bit token hash modulo the dimension, count weighting,
  L2-normalized) used by tests and desk-scale runs;
* the *remote* embedder, an HTTP client for the common JSON embeddings
  wire shape, whose vectors are L2-normalized locally.

Determinism contract (relied on by the retrieval oracle and replay tests):
every sum below is computed with ``math.fsum``, which returns the correctly
rounded value of the exact sum, so any faithful reimplementation of the
documented formulas produces bit-identical floats.
"""

from __future__ import annotations

import math
import os
import re
import threading
import time
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Mapping, Sequence

import httpx

from .errors import BackendError, ConfigurationError, DimensionMismatchError, ValidationError

DEFAULT_DIMENSION = 256

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_FNV64_MASK = 0xFFFFFFFFFFFFFFFF

# Maximal runs of Unicode alphanumerics (underscore excluded) after lowercasing.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash (offset 0xcbf29ce484222325, prime 0x100000001b3)."""
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & _FNV64_MASK
    return h


@lru_cache(maxsize=1 << 17)
def token_index(token: str, dimension: int) -> int:
    """Bucket for a token: FNV-1a 64 of its UTF-8 bytes, modulo the dimension."""
    return fnv1a_64(token.encode("utf-8")) % dimension


@dataclass(frozen=True)
class EmbeddingVector:
    """A unit-normalized (or all-zero) embedding.

    Constructors normalize; this type only validates: values must either be
    all zero or have an L2 norm within 1e-6 of 1.0.
    """

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValidationError("embedding vector must have at least one component")
        norm = math.sqrt(math.fsum(v * v for v in self.values))
        if norm != 0.0 and abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"embedding vector is neither zero nor unit (|v|={norm!r})")

    @property
    def dimension(self) -> int:
        return len(self.values)

    @cached_property
    def is_zero(self) -> bool:
        return not any(self.values)

    @cached_property
    def nonzero(self) -> dict[int, float]:
        """Sparse index -> value view used by the fast cosine path."""
        return {i: v for i, v in enumerate(self.values) if v != 0.0}


def zero_vector(dimension: int = DEFAULT_DIMENSION) -> EmbeddingVector:
    return EmbeddingVector(values=(0.0,) * dimension)


def unit_vector(raw: Sequence[float]) -> EmbeddingVector:
    """L2-normalize arbitrary raw components (all-zero stays all-zero)."""
    norm = math.sqrt(math.fsum(v * v for v in raw))
    if norm == 0.0:
        return EmbeddingVector(values=tuple(float(v) for v in raw))
    return EmbeddingVector(values=tuple(float(v) / norm for v in raw))


def _vector_from_counts(counts: Mapping[int, int], dimension: int) -> EmbeddingVector:
    # Integer sum of squares is exact, so the norm (and thus every component)
    # is correctly rounded and platform-independent.
    if not counts:
        return zero_vector(dimension)
    norm = math.sqrt(sum(c * c for c in counts.values()))
    values = [0.0] * dimension
    for i, c in counts.items():
        values[i] = c / norm
    return EmbeddingVector(values=tuple(values))


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two embedding vectors.

    Both inputs are unit or zero by construction, so this is the correctly
    rounded dot product (``math.fsum`` of the pairwise products), clamped to
    [-1, 1]; 0.0 whenever either vector is all-zero. Evaluated over the sparse
    intersection, which is bit-identical to the dense sum because every
    omitted term is an exact zero.
    """
    if len(a.values) != len(b.values):
        raise DimensionMismatchError(f"cosine of {a.dimension}-dim and {b.dimension}-dim vectors")
    if a.is_zero or b.is_zero:
        return 0.0
    small, big = a.nonzero, b.nonzero
    if len(small) > len(big):
        small, big = big, small
    dot = math.fsum(v * big[i] for i, v in small.items() if i in big)
    return min(1.0, max(-1.0, dot))


@dataclass(frozen=True)
class RemoteEndpoint:
    """Where and how to reach an HTTP embeddings service."""

    url: str
    model: str
    auth_token_env: str | None = None
    timeout_s: float = 30.0
    max_retries: int = 2
    concurrency: int = 4

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "model": self.model,
            "auth_token_env": self.auth_token_env,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "concurrency": self.concurrency,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RemoteEndpoint":
        return cls(
            url=data["url"],
            model=data["model"],
            auth_token_env=data.get("auth_token_env"),
            timeout_s=float(data.get("timeout_s", 30.0)),
            max_retries=int(data.get("max_retries", 2)),
            concurrency=int(data.get("concurrency", 4)),
        )


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "reference"  # "reference" | "remote"
    dimension: int = DEFAULT_DIMENSION
    remote: RemoteEndpoint | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("reference", "remote"):
            raise ConfigurationError(f"unknown embedder kind {self.kind!r}")
        if self.dimension < 1:
            raise ConfigurationError("embedder dimension must be positive")
        if self.kind == "remote" and self.remote is None:
            raise ConfigurationError("remote embedder requires an endpoint descriptor")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "dimension": self.dimension}
        if self.kind == "remote" and self.remote is not None:
            out["remote"] = self.remote.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "EmbedderConfig":
        remote = RemoteEndpoint.from_dict(data["remote"]) if data.get("remote") else None
        return cls(kind=data["kind"], dimension=int(data["dimension"]), remote=remote)


class ReferenceEmbedder:
    """Deterministic hashed bag-of-words embedder.

    Pure function of (text, dimension): tokenize, bucket each token with
    FNV-1a 64 mod D, accumulate counts, L2-normalize. Token-free text maps to
    the all-zero vector (an empty working memory is a legal agent state).
    The per-instance text cache is a pure-function memo and does not affect
    any output.
    """

    def __init__(self, config: EmbedderConfig):
        if config.kind != "reference":
            raise ConfigurationError("ReferenceEmbedder requires kind='reference'")
        self.config = config
        self._cache: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> EmbeddingVector:
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit
        counts: dict[int, int] = {}
        for token in tokenize(text):
            i = token_index(token, self.config.dimension)
            counts[i] = counts.get(i, 0) + 1
        vec = _vector_from_counts(counts, self.config.dimension)
        with self._lock:
            self._cache[text] = vec
        return vec


class RemoteEmbedder:
    """Client for an HTTP JSON embeddings endpoint.

    Wire shape: request ``{"model": ..., "input": [texts]}``, response
    ``{"data": [{"embedding": [floats]}, ...]}``. Vectors are L2-normalized
    locally regardless of service behavior, so cosine stays a dot product.
    """

    def __init__(
        self,
        config: EmbedderConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        recorder: Callable[[dict, dict], None] | None = None,
    ):
        if config.kind != "remote" or config.remote is None:
            raise ConfigurationError("RemoteEmbedder requires kind='remote' with an endpoint")
        self.config = config
        self._endpoint = config.remote
        headers = {}
        if self._endpoint.auth_token_env:
            token = os.environ.get(self._endpoint.auth_token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            timeout=self._endpoint.timeout_s, transport=transport, headers=headers
        )
        self._recorder = recorder
        self._semaphore = threading.BoundedSemaphore(max(1, self._endpoint.concurrency))

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        payload = {"model": self._endpoint.model, "input": list(texts)}
        body = self._post_with_retries(payload)
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise BackendError(
                f"embeddings response carried {len(data) if isinstance(data, list) else 'no'} "
                f"vectors for {len(texts)} inputs"
            )
        vectors: list[EmbeddingVector] = []
        for text, item in zip(texts, data):
            raw = item.get("embedding")
            if not isinstance(raw, list) or not raw:
                raise BackendError("embeddings response item lacks an 'embedding' array")
            if len(raw) != self.config.dimension:
                raise ConfigurationError(
                    f"service returned {len(raw)}-dim embedding, config says {self.config.dimension}"
                )
            vec = unit_vector(raw)
            if self._recorder is not None:
                self._recorder(
                    {"kind": "embed", "model": self._endpoint.model, "input": text},
                    {"embedding": list(vec.values)},
                )
            vectors.append(vec)
        return vectors

    def _post_with_retries(self, payload: dict) -> dict:
        last_error: BackendError | None = None
        for attempt in range(self._endpoint.max_retries + 1):
            if attempt:
                time.sleep(min(2.0 ** (attempt - 1), 8.0))
            try:
                with self._semaphore:
                    response = self._client.post(self._endpoint.url, json=payload)
            except httpx.HTTPError as exc:
                last_error = BackendError(f"embeddings transport failure: {exc}", retryable=True)
                continue
            if response.status_code >= 500:
                last_error = BackendError(
                    f"embeddings service error {response.status_code}",
                    retryable=True,
                    status=response.status_code,
                )
                continue
            if response.status_code >= 400:
                raise BackendError(
                    f"embeddings request rejected: {response.status_code}",
                    retryable=False,
                    status=response.status_code,
                )
            return response.json()
        assert last_error is not None
        raise last_error


class ReplayEmbedder:
    """Answers embedding requests from a recorded transcript, keyed by text.

    Embeddings are pure per text, so keyed (order-independent) lookup is
    sound, unlike the strictly sequential chat replay.
    """

    def __init__(self, config: EmbedderConfig, recorded: Mapping[str, Sequence[float]]):
        self.config = config
        self._by_text = {text: unit_vector(values) for text, values in recorded.items()}

    def embed(self, text: str) -> EmbeddingVector:
        try:
            return self._by_text[text]
        except KeyError:
            raise BackendError(f"no recorded embedding for text {text[:80]!r}") from None


Embedder = ReferenceEmbedder | RemoteEmbedder | ReplayEmbedder


def build_embedder(
    config: EmbedderConfig,
    *,
    transport: httpx.BaseTransport | None = None,
    recorder: Callable[[dict, dict], None] | None = None,
) -> Embedder:
    if config.kind == "reference":
        return ReferenceEmbedder(config)
    return RemoteEmbedder(config, transport=transport, recorder=recorder)


def embed(text: str, config: EmbedderConfig) -> EmbeddingVector:
    """One-shot embedding under a config (builds a transient remote client)."""
    return build_embedder(config).embed(text)
