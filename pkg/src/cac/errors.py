"""Shared exception types."""

from __future__ import annotations


class CacError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CacError):
    """Malformed domain data (empty required field, bad letters, unknown ids)."""

    def __init__(self, message: str, *, field: str | None = None):
        super().__init__(message)
        self.field = field


class ConfigurationError(CacError):
    """Invalid or inconsistent configuration."""


class DimensionMismatchError(ConfigurationError):
    """Embedding vectors of different dimensions were mixed."""


class BackendError(CacError):
    """A generative-model or embedding service call failed.

    ``retryable`` distinguishes transport/5xx failures (worth retrying) from
    contract violations such as missing logprob support. ``status`` carries the
    HTTP status when one exists.
    """

    def __init__(self, message: str, *, retryable: bool = False, status: int | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.status = status


class StoreError(CacError):
    """Persistence failure: unreadable, truncated, or wrong-version file.

    ``offset`` is the byte offset of the offending line when known.
    """

    def __init__(self, message: str, *, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class ReplayError(CacError):
    """A replay source ran dry or saw a request it never recorded."""


class ConflictError(CacError):
    """An exclusive writer lock is held by another run."""
