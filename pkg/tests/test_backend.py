"""Backends: scripted exactness, wire parsing, normalization, record/replay."""

from __future__ import annotations

import json
import math

import httpx
import pytest

from cac.backend import (
    ActionTag,
    BackendRequest,
    BackendResponse,
    ChatCompletionsBackend,
    ChatEndpoint,
    MODE_ACTION,
    MODE_GENERATE,
    MODE_OPTIONS,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptedBackendTable,
    ScriptedRule,
    action_logprobs,
    generate_content,
    log_softmax,
    option_logprobs,
)
from cac.errors import BackendError, ReplayError, ValidationError

from helpers import oracle_softmax


def scripted(rules=(), **kwargs) -> ScriptedBackend:
    return ScriptedBackend(ScriptedBackendTable(rules=tuple(rules), **kwargs))


def test_scripted_action_rule_passes_through_exactly():
    backend = scripted([
        ScriptedRule(mode=MODE_ACTION, pattern="needle", logprobs={"G": -0.1, "R": -2.0, "A": -3.0})
    ])
    response = action_logprobs(backend, "hay needle stack")
    assert response.logprobs == {"G": -0.1, "R": -2.0, "A": -3.0}


def test_scripted_first_match_wins():
    backend = scripted([
        ScriptedRule(mode=MODE_ACTION, pattern="needle", logprobs={"G": -0.1, "R": -9.0, "A": -9.0}),
        ScriptedRule(mode=MODE_ACTION, pattern="needle", logprobs={"G": -9.0, "R": -0.1, "A": -9.0}),
    ])
    assert action_logprobs(backend, "a needle").logprobs["G"] == -0.1


def test_scripted_rules_are_mode_scoped():
    backend = scripted([
        ScriptedRule(mode=MODE_GENERATE, pattern="needle", text="generated text"),
    ])
    # an action call must not match the generate rule; falls to the default
    response = action_logprobs(backend, "needle")
    assert response.logprobs == {"G": -2.0, "R": -2.0, "A": -0.5}


def test_scripted_regex_rule():
    backend = scripted([
        ScriptedRule(mode=MODE_GENERATE, pattern=r"step \d+", text="matched step", is_regex=True)
    ])
    response = generate_content(backend, "now at step 7 of work", ActionTag.G)
    assert response.text == "matched step"


def test_scripted_default_option_logprobs_uniform():
    backend = scripted()
    response = option_logprobs(backend, "anything", ("A", "B", "C", "D"))
    values = set(response.logprobs.values())
    assert len(values) == 1
    assert math.isclose(next(iter(values)), -math.log(4))


def test_generate_strips_and_truncates_with_flag():
    backend = scripted(
        [ScriptedRule(mode=MODE_GENERATE, pattern="big", text="x" * 10_000 + "   ")],
        max_content_chars=512,
    )
    response = generate_content(backend, "big prompt", ActionTag.A)
    assert len(response.text) == 512
    assert response.truncated is True
    short = scripted([ScriptedRule(mode=MODE_GENERATE, pattern="small", text="tidy   ")])
    assert generate_content(short, "small", ActionTag.A).text == "tidy"


def test_generate_empty_content_is_backend_error():
    backend = scripted([ScriptedRule(mode=MODE_GENERATE, pattern="", text="   ")])
    with pytest.raises(BackendError):
        generate_content(backend, "prompt", ActionTag.G)


def test_option_logprobs_requires_two_letters():
    with pytest.raises(ValidationError):
        option_logprobs(scripted(), "p", ("A",))


def test_scripted_is_pure_function_of_table_and_request():
    table = ScriptedBackendTable(
        rules=(ScriptedRule(mode=MODE_ACTION, pattern="x", logprobs={"G": -1.0, "R": -2.0, "A": -3.0}),)
    )
    first = ScriptedBackend(table).call(BackendRequest(mode=MODE_ACTION, prompt="x y"))
    second = ScriptedBackend(table).call(BackendRequest(mode=MODE_ACTION, prompt="x y"))
    assert first == second


def test_log_softmax_matches_hand_computation():
    raw = {"G": -1.25, "R": -0.5, "A": -3.0}
    normalized = log_softmax(raw)
    expected = {k: math.log(v) for k, v in oracle_softmax(raw).items()}
    for key in raw:
        assert normalized[key] == pytest.approx(expected[key], abs=1e-12)
    assert all(v <= 0 for v in normalized.values())
    assert math.fsum(math.exp(v) for v in normalized.values()) == pytest.approx(1.0, abs=1e-12)


# A captured wire response (trimmed to the consumed fields) used as the
# remote-path oracle: the three tag logprobs get normalized over themselves.
WIRE_TOP_LOGPROBS = [
    {"token": "G", "logprob": -0.9},
    {"token": "A", "logprob": -1.7},
    {"token": "R", "logprob": -2.3},
    {"token": "the", "logprob": -4.0},
]


def chat_response(payload: dict) -> httpx.Response:
    return httpx.Response(200, json=payload)


def logprob_handler(request: httpx.Request) -> httpx.Response:
    body = json.loads(request.content)
    assert body["logprobs"] is True and body["max_tokens"] == 1
    return chat_response(
        {"choices": [{"logprobs": {"content": [{"top_logprobs": WIRE_TOP_LOGPROBS}]}}]}
    )


def endpoint(**kwargs) -> ChatEndpoint:
    return ChatEndpoint(url="http://svc/v1/chat/completions", model="test-model", **kwargs)


def test_remote_action_logprobs_normalized_against_hand_softmax():
    backend = ChatCompletionsBackend(endpoint(), transport=httpx.MockTransport(logprob_handler))
    response = action_logprobs(backend, "prompt")
    raw = {"G": -0.9, "R": -2.3, "A": -1.7}
    expected = {k: math.log(v) for k, v in oracle_softmax(raw).items()}
    for key in raw:
        assert response.logprobs[key] == pytest.approx(expected[key], abs=1e-12)


def test_remote_missing_tag_errors_not_silent_default():
    def handler(request: httpx.Request) -> httpx.Response:
        top = [{"token": "yes", "logprob": -0.5}, {"token": "no", "logprob": -1.0}]
        return chat_response({"choices": [{"logprobs": {"content": [{"top_logprobs": top}]}}]})

    backend = ChatCompletionsBackend(endpoint(), transport=httpx.MockTransport(handler))
    with pytest.raises(BackendError) as excinfo:
        action_logprobs(backend, "prompt")
    assert "absent" in str(excinfo.value)


def test_remote_generate_reads_message_content():
    def handler(request: httpx.Request) -> httpx.Response:
        return chat_response({"choices": [{"message": {"content": "  an answer  "}}]})

    backend = ChatCompletionsBackend(endpoint(), transport=httpx.MockTransport(handler))
    assert generate_content(backend, "p", ActionTag.A).text == "  an answer"


def test_remote_retries_then_raises_retryable(monkeypatch):
    attempts = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        attempts["n"] += 1
        return httpx.Response(502, json={})

    monkeypatch.setattr("cac.backend.time.sleep", lambda _s: None)
    backend = ChatCompletionsBackend(
        endpoint(max_retries=2), transport=httpx.MockTransport(handler)
    )
    with pytest.raises(BackendError) as excinfo:
        generate_content(backend, "p", ActionTag.G)
    assert attempts["n"] == 3
    assert excinfo.value.retryable and excinfo.value.status == 502


def test_remote_4xx_fails_fast(monkeypatch):
    attempts = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        attempts["n"] += 1
        return httpx.Response(401, json={})

    monkeypatch.setattr("cac.backend.time.sleep", lambda _s: None)
    backend = ChatCompletionsBackend(endpoint(), transport=httpx.MockTransport(handler))
    with pytest.raises(BackendError) as excinfo:
        generate_content(backend, "p", ActionTag.G)
    assert attempts["n"] == 1
    assert not excinfo.value.retryable


def test_recording_then_replay_reproduces_byte_identically():
    backend = scripted([
        ScriptedRule(mode=MODE_ACTION, pattern="", logprobs={"G": -1.0, "R": -2.0, "A": -0.3}),
        ScriptedRule(mode=MODE_GENERATE, pattern="", text="stable content"),
    ])
    recorded: list[tuple[dict, dict]] = []
    recording = RecordingBackend(backend, lambda req, resp: recorded.append((req, resp)))
    first = [
        action_logprobs(recording, "p one").to_dict(),
        generate_content(recording, "p two", ActionTag.R).to_dict(),
    ]
    replay = ReplayBackend(recorded)
    second = [
        action_logprobs(replay, "p one").to_dict(),
        generate_content(replay, "p two", ActionTag.R).to_dict(),
    ]
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)


def test_replay_divergence_and_exhaustion_raise():
    recorded = [(
        BackendRequest(mode=MODE_ACTION, prompt="p").to_dict(),
        BackendResponse(logprobs={"G": -1.0, "R": -1.0, "A": -1.0}).to_dict(),
    )]
    replay = ReplayBackend(recorded)
    with pytest.raises(ReplayError):
        replay.call(BackendRequest(mode=MODE_ACTION, prompt="different prompt"))
    fresh = ReplayBackend(recorded)
    fresh.call(BackendRequest(mode=MODE_ACTION, prompt="p"))
    with pytest.raises(ReplayError):
        fresh.call(BackendRequest(mode=MODE_ACTION, prompt="p"))


def test_request_response_dict_round_trip():
    request = BackendRequest(mode=MODE_OPTIONS, prompt="p", letters=("A", "B"))
    assert BackendRequest.from_dict(request.to_dict()) == request
    response = BackendResponse(logprobs={"A": -0.5, "B": -1.5}, elapsed_ms=12.5, raw={"k": 1})
    assert BackendResponse.from_dict(response.to_dict()) == response
