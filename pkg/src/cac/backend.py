"""Uniform contract to generative models.

Three call modes — action-tag log-probabilities, constrained content
generation, and option-letter log-probabilities — served by three
implementations: a deterministic scripted backend (tests, demos), an HTTP
chat-completions client (real runs), and a replay backend that answers from a
recorded transcript. The agent never sees anything beyond requested logprobs
and text; that is where the explicit-knowledge boundary is enforced.
"""

from __future__ import annotations

import enum
import math
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import httpx

from .errors import BackendError, ReplayError, ValidationError

ACTION_TAGS = ("G", "R", "A")
DEFAULT_MAX_CONTENT_CHARS = 512
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_MAX_RETRIES = 2
DEFAULT_TOP_LOGPROBS = 20


class ActionTag(str, enum.Enum):
    """The agent's three actions: set subgoal, update WM, answer current goal."""

    G = "G"
    R = "R"
    A = "A"


MODE_ACTION = "action_logprobs"
MODE_GENERATE = "generate"
MODE_OPTIONS = "option_logprobs"


@dataclass(frozen=True)
class BackendRequest:
    mode: str
    prompt: str
    tag: str | None = None  # generate mode only
    letters: tuple[str, ...] | None = None  # options mode only

    def to_dict(self) -> dict:
        out: dict = {"mode": self.mode, "prompt": self.prompt}
        if self.tag is not None:
            out["tag"] = self.tag
        if self.letters is not None:
            out["letters"] = list(self.letters)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "BackendRequest":
        letters = data.get("letters")
        return cls(
            mode=data["mode"],
            prompt=data["prompt"],
            tag=data.get("tag"),
            letters=tuple(letters) if letters is not None else None,
        )


@dataclass(frozen=True)
class BackendResponse:
    logprobs: dict[str, float] | None = None
    text: str | None = None
    truncated: bool = False
    elapsed_ms: float = 0.0
    raw: object = None  # opaque wire transcript for audit

    def to_dict(self) -> dict:
        return {
            "logprobs": self.logprobs,
            "text": self.text,
            "truncated": self.truncated,
            "elapsed_ms": self.elapsed_ms,
            "raw": self.raw,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BackendResponse":
        return cls(
            logprobs=dict(data["logprobs"]) if data.get("logprobs") is not None else None,
            text=data.get("text"),
            truncated=bool(data.get("truncated", False)),
            elapsed_ms=float(data.get("elapsed_ms", 0.0)),
            raw=data.get("raw"),
        )


class Backend(Protocol):
    def call(self, request: BackendRequest) -> BackendResponse: ...


def log_softmax(values: Mapping[str, float]) -> dict[str, float]:
    """Normalize logprobs over exactly the given tokens (stable, fsum-based)."""
    if not values:
        raise ValidationError("log_softmax over an empty map")
    finite = all(math.isfinite(v) for v in values.values())
    if not finite:
        raise ValidationError("log_softmax requires finite inputs")
    peak = max(values.values())
    log_z = peak + math.log(math.fsum(math.exp(v - peak) for v in values.values()))
    return {k: v - log_z for k, v in values.items()}


def action_logprobs(backend: Backend, prompt: str) -> BackendResponse:
    """Logprobs for the three action tags; the agent's sole action input."""
    if not prompt:
        raise ValidationError("prompt must be non-empty")
    response = backend.call(BackendRequest(mode=MODE_ACTION, prompt=prompt))
    _require_tokens(response, ACTION_TAGS)
    return response

def generate_content(backend: Backend, prompt: str, tag: ActionTag) -> BackendResponse:
    """One-paragraph content for an already-selected action tag."""
    if not prompt:
        raise ValidationError("prompt must be non-empty")
    response = backend.call(BackendRequest(mode=MODE_GENERATE, prompt=prompt, tag=tag.value))
    if not (response.text or "").strip():
        raise BackendError("backend produced empty content", retryable=False)
    return response


def option_logprobs(backend: Backend, prompt: str, letters: Sequence[str]) -> BackendResponse:
    """One finite logprob per option letter."""
    if len(set(letters)) < 2:
        raise ValidationError("option scoring needs at least two distinct letters")
    response = backend.call(
        BackendRequest(mode=MODE_OPTIONS, prompt=prompt, letters=tuple(letters))
    )
    _require_tokens(response, tuple(letters))
    return response


def _require_tokens(response: BackendResponse, tokens: Sequence[str]) -> None:
    got = response.logprobs or {}
    missing = [t for t in tokens if t not in got]
    if missing:
        raise BackendError(f"backend response lacks logprobs for {missing}", retryable=False)
    bad = [t for t in tokens if not math.isfinite(got[t])]
    if bad:
        raise BackendError(f"backend returned non-finite logprobs for {bad}", retryable=False)


@dataclass(frozen=True)
class ScriptedRule:
    """First-match-wins response rule: mode plus substring (or regex) matcher."""

    mode: str
    pattern: str
    logprobs: dict[str, float] | None = None
    text: str | None = None
    is_regex: bool = False

    def matches(self, request: BackendRequest) -> bool:
        if self.mode != request.mode:
            return False
        if self.is_regex:
            return re.search(self.pattern, request.prompt) is not None
        return self.pattern in request.prompt


@dataclass(frozen=True)
class ScriptedBackendTable:
    rules: tuple[ScriptedRule, ...] = ()
    default_action_logprobs: dict[str, float] = field(
        default_factory=lambda: {"G": -2.0, "R": -2.0, "A": -0.5}
    )
    default_text: str = "No applicable knowledge was retrieved."
    default_option_logprobs: dict[str, float] | None = None  # None: uniform over letters
    max_content_chars: int = DEFAULT_MAX_CONTENT_CHARS

    def to_dict(self) -> dict:
        return {
            "rules": [
                {
                    "mode": r.mode,
                    "pattern": r.pattern,
                    "logprobs": r.logprobs,
                    "text": r.text,
                    "is_regex": r.is_regex,
                }
                for r in self.rules
            ],
            "default_action_logprobs": self.default_action_logprobs,
            "default_text": self.default_text,
            "default_option_logprobs": self.default_option_logprobs,
            "max_content_chars": self.max_content_chars,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScriptedBackendTable":
        rules = tuple(
            ScriptedRule(
                mode=r["mode"],
                pattern=r["pattern"],
                logprobs=dict(r["logprobs"]) if r.get("logprobs") else None,
                text=r.get("text"),
                is_regex=bool(r.get("is_regex", False)),
            )
            for r in data.get("rules", ())
        )
        return cls(
            rules=rules,
            default_action_logprobs=dict(
                data.get("default_action_logprobs", {"G": -2.0, "R": -2.0, "A": -0.5})
            ),
            default_text=data.get("default_text", "No applicable knowledge was retrieved."),
            default_option_logprobs=(
                dict(data["default_option_logprobs"])
                if data.get("default_option_logprobs")
                else None
            ),
            max_content_chars=int(data.get("max_content_chars", DEFAULT_MAX_CONTENT_CHARS)),
        )


class ScriptedBackend:
    """Pure function of (table, request); scripted responses pass through exactly."""

    def __init__(self, table: ScriptedBackendTable):
        self.table = table

    def call(self, request: BackendRequest) -> BackendResponse:
        rule = next((r for r in self.table.rules if r.matches(request)), None)
        if request.mode == MODE_ACTION:
            logprobs = rule.logprobs if rule and rule.logprobs else self.table.default_action_logprobs
            return BackendResponse(logprobs=dict(logprobs))
        if request.mode == MODE_GENERATE:
            text = rule.text if rule and rule.text is not None else self.table.default_text
            return _truncate(text, self.table.max_content_chars)
        if request.mode == MODE_OPTIONS:
            letters = request.letters or ()
            if rule and rule.logprobs:
                logprobs = dict(rule.logprobs)
            elif self.table.default_option_logprobs:
                logprobs = dict(self.table.default_option_logprobs)
            else:
                logprobs = {letter: -math.log(len(letters)) for letter in letters}
            return BackendResponse(logprobs=logprobs)
        raise ValidationError(f"unknown backend mode {request.mode!r}")


def _truncate(text: str, max_chars: int) -> BackendResponse:
    stripped = text.rstrip()
    if len(stripped) > max_chars:
        return BackendResponse(text=stripped[:max_chars], truncated=True)
    return BackendResponse(text=stripped, truncated=False)


@dataclass(frozen=True)
class ChatEndpoint:
    """An OpenAI-style chat-completions service with logprob support."""

    url: str
    model: str
    auth_token_env: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_retries: int = DEFAULT_MAX_RETRIES
    top_logprobs: int = DEFAULT_TOP_LOGPROBS
    max_content_chars: int = DEFAULT_MAX_CONTENT_CHARS
    max_tokens: int = 256

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "model": self.model,
            "auth_token_env": self.auth_token_env,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "top_logprobs": self.top_logprobs,
            "max_content_chars": self.max_content_chars,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ChatEndpoint":
        return cls(
            url=data["url"],
            model=data["model"],
            auth_token_env=data.get("auth_token_env"),
            timeout_s=float(data.get("timeout_s", DEFAULT_TIMEOUT_S)),
            max_retries=int(data.get("max_retries", DEFAULT_MAX_RETRIES)),
            top_logprobs=int(data.get("top_logprobs", DEFAULT_TOP_LOGPROBS)),
            max_content_chars=int(data.get("max_content_chars", DEFAULT_MAX_CONTENT_CHARS)),
            max_tokens=int(data.get("max_tokens", 256)),
        )


class ChatCompletionsBackend:
    """HTTP chat-completions client.

    Logprob modes ask for ``logprobs: true, top_logprobs: n`` and read the
    first generated token's top-logprob list; the raw values for the requested
    tokens are log-softmax-normalized over just those tokens, which makes the
    scripted and remote paths comparable and final option scoring a plain
    exponentiation. Any requested token missing from the service's list is an
    error, never a silent default.
    """

    def __init__(self, endpoint: ChatEndpoint, *, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        headers = {}
        if endpoint.auth_token_env:
            token = os.environ.get(endpoint.auth_token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=endpoint.timeout_s, transport=transport, headers=headers)

    def call(self, request: BackendRequest) -> BackendResponse:
        if request.mode == MODE_ACTION:
            return self._logprob_call(request.prompt, ACTION_TAGS)
        if request.mode == MODE_OPTIONS:
            return self._logprob_call(request.prompt, request.letters or ())
        if request.mode == MODE_GENERATE:
            return self._generate_call(request.prompt)
        raise ValidationError(f"unknown backend mode {request.mode!r}")

    def _logprob_call(self, prompt: str, tokens: Sequence[str]) -> BackendResponse:
        payload = {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": 1,
            "logprobs": True,
            "top_logprobs": self.endpoint.top_logprobs,
        }
        body, elapsed_ms = self._post_with_retries(payload)
        top = self._first_token_top_logprobs(body)
        raw_values: dict[str, float] = {}
        for token in tokens:
            if token not in top:
                raise BackendError(
                    f"token {token!r} absent from service top_logprobs", retryable=False
                )
            raw_values[token] = top[token]
        return BackendResponse(logprobs=log_softmax(raw_values), elapsed_ms=elapsed_ms, raw=body)

    def _generate_call(self, prompt: str) -> BackendResponse:
        payload = {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.endpoint.max_tokens,
        }
        body, elapsed_ms = self._post_with_retries(payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("chat response lacks choices[0].message.content") from None
        out = _truncate(text or "", self.endpoint.max_content_chars)
        return BackendResponse(
            text=out.text, truncated=out.truncated, elapsed_ms=elapsed_ms, raw=body
        )

    def complete(self, prompt: str, *, max_tokens: int | None = None) -> BackendResponse:
        """Unconstrained chat turn (used by the remote teacher, not the agent)."""
        payload = {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": max_tokens or self.endpoint.max_tokens,
        }
        body, elapsed_ms = self._post_with_retries(payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("chat response lacks choices[0].message.content") from None
        return BackendResponse(text=text or "", elapsed_ms=elapsed_ms, raw=body)

    def _first_token_top_logprobs(self, body: Mapping) -> dict[str, float]:
        try:
            entries = body["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
        except (KeyError, IndexError, TypeError):
            raise BackendError(
                "service response lacks logprobs; enable logprob support", retryable=False
            ) from None
        return {e["token"]: float(e["logprob"]) for e in entries}

    def _post_with_retries(self, payload: dict) -> tuple[dict, float]:
        last_error: BackendError | None = None
        started = time.monotonic()
        for attempt in range(self.endpoint.max_retries + 1):
            if attempt:
                time.sleep(min(2.0 ** (attempt - 1), 8.0))
            try:
                response = self._client.post(self.endpoint.url, json=payload)
            except httpx.HTTPError as exc:
                last_error = BackendError(f"chat transport failure: {exc}", retryable=True)
                continue
            if response.status_code >= 500:
                last_error = BackendError(
                    f"chat service error {response.status_code}",
                    retryable=True,
                    status=response.status_code,
                )
                continue
            if response.status_code >= 400:
                raise BackendError(
                    f"chat request rejected: {response.status_code}",
                    retryable=False,
                    status=response.status_code,
                )
            elapsed_ms = (time.monotonic() - started) * 1000.0
            return response.json(), elapsed_ms
        assert last_error is not None
        raise last_error


class RecordingBackend:
    """Wraps any backend and persists every (request, response) pair in order."""

    def __init__(self, inner: Backend, sink: Callable[[dict, dict], None]):
        self._inner = inner
        self._sink = sink

    def call(self, request: BackendRequest) -> BackendResponse:
        response = self._inner.call(request)
        self._sink(request.to_dict(), response.to_dict())
        return response


class ReplayBackend:
    """Answers calls strictly in recorded order, verifying each request matches.

    Generation is not a pure function of the prompt in general, so replay is
    sequential; a request that diverges from the recording is an error rather
    than a guess.
    """

    def __init__(self, pairs: Iterable[tuple[Mapping, Mapping]]):
        self._pairs = [(dict(req), dict(resp)) for req, resp in pairs]
        self._cursor = 0

    def call(self, request: BackendRequest) -> BackendResponse:
        if self._cursor >= len(self._pairs):
            raise ReplayError(f"transcript exhausted after {len(self._pairs)} calls")
        recorded_request, recorded_response = self._pairs[self._cursor]
        if request.to_dict() != recorded_request:
            raise ReplayError(
                f"replay divergence at call {self._cursor}: "
                f"got mode={request.mode!r}, recorded mode={recorded_request.get('mode')!r}"
            )
        self._cursor += 1
        return BackendResponse.from_dict(recorded_response)

    @property
    def remaining(self) -> int:
        return len(self._pairs) - self._cursor
