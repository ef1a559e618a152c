"""Failure-driven compilation: run the agent, let a teacher repair the KB.

Each iteration runs one attempt; on failure the teacher gets the agent
mechanics, the full KB listing, and the failing trace, then drives a
tool-call turn (retrieval preview, sentence similarity, DM submission). The
engine executes the tools, cheat-filters the submission, and appends what
survives. Knowledge only ever accumulates; nothing is edited in place.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Protocol, Sequence

from .agent import AgentConfig, AttemptResult, Problem, run_attempt
from .backend import Backend, ChatCompletionsBackend, RecordingBackend, ReplayBackend
from .embedder import Embedder, build_embedder, cosine
from .errors import BackendError, ValidationError
from .kb import (
    DMDraft,
    KBView,
    KnowledgeBase,
    Provenance,
    ScoreWeights,
    append_dms,
    preview_hits,
)

DEFAULT_MAX_ITERATIONS = 150
DEFAULT_TOOL_CALL_CAP = 20
DEFAULT_PREVIEW_K = 5
DEFAULT_PRIOR_CONTEXT_ITERATIONS = 3

TOOL_RETRIEVE_PREVIEW = "retrieve_preview"
TOOL_SIMILARITY = "similarity"
TOOL_SUBMIT_DMS = "submit_dms"

OUTCOME_COMPILED = "compiled"
OUTCOME_ITERATION_CAP = "iteration_cap_reached"

REASON_OPTION_TEXT = "option-text"
REASON_ANSWER_DICTATION = "answer-dictation"
REASON_PROBLEM_ID = "problem-id"


@dataclass(frozen=True)
class ToolCall:
    """One teacher tool invocation; submit_dms always ends the turn."""

    kind: str
    args: dict
    call_id: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "args": self.args, "call_id": self.call_id}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ToolCall":
        return cls(kind=data["kind"], args=dict(data["args"]), call_id=int(data.get("call_id", 0)))


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    payload: dict

    def to_dict(self) -> dict:
        return {"ok": self.ok, "payload": self.payload}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ToolResult":
        return cls(ok=bool(data["ok"]), payload=dict(data["payload"]))


class TeacherPolicy(Protocol):
    """Produces the next tool call given the iteration prompt and prior calls."""

    def next_call(
        self, prompt: str, prior: Sequence[tuple[ToolCall, ToolResult]]
    ) -> ToolCall: ...


@dataclass(frozen=True)
class CheatFilterConfig:
    # The option-text rule can reject legitimately re-usable facts that happen
    # to name the correct option; it stays on by default and is surfaced here.
    option_text_rule: bool = True


@dataclass(frozen=True)
class CompileConfig:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    tool_call_cap: int = DEFAULT_TOOL_CALL_CAP
    preview_k: int = DEFAULT_PREVIEW_K
    prior_context_iterations: int = DEFAULT_PRIOR_CONTEXT_ITERATIONS
    cheat_filter: CheatFilterConfig = field(default_factory=CheatFilterConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "tool_call_cap": self.tool_call_cap,
            "preview_k": self.preview_k,
            "prior_context_iterations": self.prior_context_iterations,
            "cheat_filter": {"option_text_rule": self.cheat_filter.option_text_rule},
            "agent": self.agent.to_dict(),
        }


@dataclass(frozen=True)
class RejectedDraft:
    draft: DMDraft
    reason: str
    detail: str

    def to_dict(self) -> dict:
        return {
            "draft": {
                "kind": self.draft.kind,
                "description": self.draft.description,
                "goal_condition": self.draft.goal_condition,
                "wm_condition": self.draft.wm_condition,
            },
            "reason": self.reason,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RejectedDraft":
        draft = data["draft"]
        return cls(
            draft=DMDraft(
                kind=draft["kind"],
                description=draft["description"],
                goal_condition=draft["goal_condition"],
                wm_condition=draft["wm_condition"],
            ),
            reason=data["reason"],
            detail=data["detail"],
        )


@dataclass(frozen=True)
class IterationRecord:
    index: int
    attempt: AttemptResult
    attempt_transcript: tuple[tuple[dict, dict], ...] = ()  # recorded backend calls
    tool_calls: tuple[tuple[ToolCall, ToolResult], ...] = ()
    submitted: tuple[DMDraft, ...] = ()
    accepted_ids: tuple[str, ...] = ()
    rejected: tuple[RejectedDraft, ...] = ()
    kb_revision_after: int = 0
    teacher_prompt: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "attempt": self.attempt.to_dict(),
            "attempt_transcript": [
                {"request": request, "response": response}
                for request, response in self.attempt_transcript
            ],
            "tool_calls": [
                {"call": call.to_dict(), "result": result.to_dict()}
                for call, result in self.tool_calls
            ],
            "submitted": [
                {
                    "kind": d.kind,
                    "description": d.description,
                    "goal_condition": d.goal_condition,
                    "wm_condition": d.wm_condition,
                }
                for d in self.submitted
            ],
            "accepted_ids": list(self.accepted_ids),
            "rejected": [r.to_dict() for r in self.rejected],
            "kb_revision_after": self.kb_revision_after,
            "teacher_prompt": self.teacher_prompt,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "IterationRecord":
        return cls(
            index=int(data["index"]),
            attempt=AttemptResult.from_dict(data["attempt"]),
            attempt_transcript=tuple(
                (dict(pair["request"]), dict(pair["response"]))
                for pair in data.get("attempt_transcript", ())
            ),
            tool_calls=tuple(
                (ToolCall.from_dict(item["call"]), ToolResult.from_dict(item["result"]))
                for item in data.get("tool_calls", ())
            ),
            submitted=tuple(
                DMDraft(
                    kind=d["kind"],
                    description=d["description"],
                    goal_condition=d["goal_condition"],
                    wm_condition=d["wm_condition"],
                )
                for d in data.get("submitted", ())
            ),
            accepted_ids=tuple(data.get("accepted_ids", ())),
            rejected=tuple(RejectedDraft.from_dict(r) for r in data.get("rejected", ())),
            kb_revision_after=int(data.get("kb_revision_after", 0)),
            teacher_prompt=data.get("teacher_prompt"),
        )


@dataclass(frozen=True)
class CompilationLog:
    problem_id: str
    iterations: tuple[IterationRecord, ...]
    final_outcome: str
    kb_size_before: int
    kb_size_after: int

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "iterations": [it.to_dict() for it in self.iterations],
            "final_outcome": self.final_outcome,
            "kb_size_before": self.kb_size_before,
            "kb_size_after": self.kb_size_after,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CompilationLog":
        return cls(
            problem_id=data["problem_id"],
            iterations=tuple(IterationRecord.from_dict(it) for it in data["iterations"]),
            final_outcome=data["final_outcome"],
            kb_size_before=int(data["kb_size_before"]),
            kb_size_after=int(data["kb_size_after"]),
        )


@dataclass(frozen=True)
class CompilationStats:
    problems_attempted: int
    problems_compiled: int
    total_dms: int
    iterations_mean: float
    iterations_sd: float
    iterations_max: int
    kb_size_curve: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "problems_attempted": self.problems_attempted,
            "problems_compiled": self.problems_compiled,
            "total_dms": self.total_dms,
            "iterations_mean": self.iterations_mean,
            "iterations_sd": self.iterations_sd,
            "iterations_max": self.iterations_max,
            "kb_size_curve": list(self.kb_size_curve),
        }


def handle_tool_call(
    kb_view: KBView,
    call: ToolCall,
    embedder: Embedder,
    *,
    weights: ScoreWeights = ScoreWeights(),
) -> ToolResult:
    """Execute one teacher tool; malformed arguments come back as structured
    errors rather than exceptions so the teacher can correct itself."""
    try:
        if call.kind == TOOL_RETRIEVE_PREVIEW:
            goal_text = call.args.get("goal_text", "")
            wm_text = call.args.get("wm_text", "")
            k = int(call.args.get("k", DEFAULT_PREVIEW_K))
            if not str(goal_text).strip():
                return ToolResult(ok=False, payload={"error": "goal_text must be non-empty"})
            if k < 1:
                return ToolResult(ok=False, payload={"error": "k must be >= 1"})
            items = preview_hits(
                kb_view, str(goal_text), str(wm_text), k, embedder=embedder, weights=weights
            )
            return ToolResult(ok=True, payload={"items": items})
        if call.kind == TOOL_SIMILARITY:
            if "text_a" not in call.args or "text_b" not in call.args:
                return ToolResult(ok=False, payload={"error": "similarity needs text_a and text_b"})
            value = cosine(
                embedder.embed(str(call.args["text_a"])), embedder.embed(str(call.args["text_b"]))
            )
            return ToolResult(ok=True, payload={"similarity": value})
        if call.kind == TOOL_SUBMIT_DMS:
            drafts = call.args.get("drafts")
            if not isinstance(drafts, (list, tuple)):
                return ToolResult(ok=False, payload={"error": "submit_dms needs a drafts list"})
            try:
                parsed = [_parse_draft(d) for d in drafts]
            except ValidationError as exc:
                return ToolResult(ok=False, payload={"error": str(exc)})
            return ToolResult(
                ok=True, payload={"queued_for_filtering": len(parsed)}
            )
        return ToolResult(ok=False, payload={"error": f"unknown tool {call.kind!r}"})
    except ValidationError as exc:
        return ToolResult(ok=False, payload={"error": str(exc)})


def _parse_draft(data: Mapping) -> DMDraft:
    try:
        draft = DMDraft(
            kind=data.get("kind", "fact"),
            description=data["description"],
            goal_condition=data["goal_condition"],
            wm_condition=data["wm_condition"],
        )
    except KeyError as exc:
        raise ValidationError(f"draft missing field {exc.args[0]!r}") from None
    draft.validate()
    return draft


_WORD_COLLAPSE_RE = re.compile(r"[^0-9a-z]+")


def normalize_text(text: str) -> str:
    """Lowercase and collapse every non-alphanumeric run to one space."""
    return _WORD_COLLAPSE_RE.sub(" ", text.lower()).strip()


def _contains_phrase(haystack_norm: str, phrase_norm: str) -> bool:
    # Token-boundary containment on normalized text.
    if not phrase_norm:
        return False
    return f" {phrase_norm} " in f" {haystack_norm} "


def cheat_filter(
    drafts: Sequence[DMDraft],
    problem: Problem,
    config: CheatFilterConfig = CheatFilterConfig(),
) -> tuple[list[DMDraft], list[RejectedDraft]]:
    """Reject drafts that dictate the answer instead of teaching content.

    A draft is rejected iff, after normalization, any of its three text fields
    (a) contains the correct option's full text, (b) matches an
    answer-dictation pattern ("answer is <letter>", "<letter> is correct",
    "choose <letter>") for the correct letter, or (c) contains the problem id.
    """
    letter = problem.correct_letter.lower()
    option_norm = normalize_text(problem.options[problem.correct_letter])
    problem_id_norm = normalize_text(problem.id)
    dictation_res = [
        re.compile(rf"\banswer is {re.escape(letter)}\b"),
        re.compile(rf"\b{re.escape(letter)} is correct\b"),
        re.compile(rf"\bchoose {re.escape(letter)}\b"),
    ]
    accepted: list[DMDraft] = []
    rejected: list[RejectedDraft] = []
    for draft in drafts:
        verdict: RejectedDraft | None = None
        for name, text in zip(("description", "goal_condition", "wm_condition"), draft.text_fields()):
            norm = normalize_text(text)
            if any(rx.search(norm) for rx in dictation_res):
                verdict = RejectedDraft(
                    draft=draft,
                    reason=REASON_ANSWER_DICTATION,
                    detail=f"{name} dictates the correct letter {problem.correct_letter!r}",
                )
                break
            if config.option_text_rule and _contains_phrase(norm, option_norm):
                verdict = RejectedDraft(
                    draft=draft,
                    reason=REASON_OPTION_TEXT,
                    detail=f"{name} contains the correct option text",
                )
                break
            if _contains_phrase(norm, problem_id_norm):
                verdict = RejectedDraft(
                    draft=draft, reason=REASON_PROBLEM_ID, detail=f"{name} names the problem id"
                )
                break
        if verdict is None:
            accepted.append(draft)
        else:
            rejected.append(verdict)
    return accepted, rejected


_TEACHER_MECHANICS = (
    "You are the teacher for a bounded cognitive agent. The agent solves one\n"
    "multiple-choice problem using only an explicit knowledge base of\n"
    "declarative memories. Each memory has a natural-language description (the\n"
    "value injected into the agent's prompt) plus a goal condition and a\n"
    "working-memory condition; the embeddings of the two conditions are the\n"
    "keys, and the agent's current goal and working memory form the query. At\n"
    "each step the agent retrieves the single highest-scoring memory and then\n"
    "sets a subgoal (G), writes a working-memory update (R), or answers the\n"
    "current goal (A). Your job: diagnose the failing trace below and submit\n"
    "new declarative memories that let the agent succeed. You may call tools:\n"
    "retrieve_preview(goal_text, wm_text, k), similarity(text_a, text_b), and\n"
    "submit_dms(drafts). Submitting ends your turn. Knowledge that dictates\n"
    "the final answer is filtered out; teach transferable content instead."
)


def render_teacher_prompt(
    problem: Problem,
    kb_view: KBView,
    attempt: AttemptResult,
    prior_iterations: Sequence[IterationRecord],
    config: CompileConfig,
) -> str:
    """Deterministic teacher prompt: mechanics, problem, KB listing, failing
    trace, and a bounded summary of recent submissions/rejections."""
    lines: list[str] = [_TEACHER_MECHANICS, ""]
    lines.append("PROBLEM:")
    lines.append(problem.stem)
    lines.append("OPTIONS:")
    for letter, text in problem.options.items():
        lines.append(f"{letter}. {text}")
    lines.append(f"CORRECT LETTER: {problem.correct_letter}")
    lines.append("")
    lines.append("KNOWLEDGE BASE:")
    dms = list(kb_view.live_dms())
    if not dms:
        lines.append("(empty)")
    for dm in dms:
        lines.append(f"[{dm.id}] ({dm.kind}) {dm.description}")
        lines.append(f"  goal condition: {dm.goal_condition}")
        lines.append(f"  wm condition: {dm.wm_condition}")
    lines.append("")
    lines.append("FAILED ATTEMPT TRACE:")
    lines.append(f"outcome: {attempt.outcome}")
    if attempt.predicted_letter is not None:
        lines.append(f"predicted: {attempt.predicted_letter}")
    for step in attempt.history:
        retrieved = step.retrieved.dm_id if step.retrieved else "none"
        lines.append(
            f"step {step.index}: goal={step.state_before.top_goal!r} "
            f"retrieved={retrieved} action={step.chosen_tag} content={step.content!r}"
        )
    recent = list(prior_iterations)[-config.prior_context_iterations:]
    if recent:
        lines.append("")
        lines.append("RECENT TEACHER ITERATIONS:")
        for record in recent:
            lines.append(
                f"iteration {record.index}: submitted {len(record.submitted)}, "
                f"accepted {len(record.accepted_ids)}, rejected {len(record.rejected)}"
            )
            for rej in record.rejected:
                lines.append(f"  rejected ({rej.reason}): {rej.draft.description}")
    lines.append("")
    lines.append("Call tools now; finish with submit_dms.")
    return "\n".join(lines)


class ScriptedTeacher:
    """Plays back scripted tool-call turns, one list per (problem, iteration).

    The script maps problem id -> list of turns; each turn is the list of
    ToolCalls for that teacher iteration (the last one should be submit_dms).
    Turns past the end of the script submit nothing.
    """

    def __init__(self, script: Mapping[str, Sequence[Sequence[ToolCall]]]):
        self._script = {pid: [list(turn) for turn in turns] for pid, turns in script.items()}
        self._turn_index: dict[str, int] = {}
        self._active: list[ToolCall] = []
        self._active_pos = 0

    def begin_turn(self, problem_id: str) -> None:
        turn_no = self._turn_index.get(problem_id, 0)
        self._turn_index[problem_id] = turn_no + 1
        turns = self._script.get(problem_id, [])
        self._active = list(turns[turn_no]) if turn_no < len(turns) else [
            ToolCall(kind=TOOL_SUBMIT_DMS, args={"drafts": []})
        ]
        self._active_pos = 0

    def next_call(self, prompt: str, prior: Sequence[tuple[ToolCall, ToolResult]]) -> ToolCall:
        if self._active_pos >= len(self._active):
            return ToolCall(kind=TOOL_SUBMIT_DMS, args={"drafts": []})
        call = self._active[self._active_pos]
        self._active_pos += 1
        return call


class RemoteTeacher:
    """Adapts a chat backend into the tool-call policy.

    Each turn sends the iteration prompt plus prior tool results and expects
    one JSON object per reply: {"tool": name, "args": {...}}. Unparseable
    replies become an empty submission (recorded, loop continues).
    """

    def __init__(self, backend: ChatCompletionsBackend, *, max_tokens: int = 1024):
        self._backend = backend
        self._max_tokens = max_tokens

    def begin_turn(self, problem_id: str) -> None:
        pass

    def next_call(self, prompt: str, prior: Sequence[tuple[ToolCall, ToolResult]]) -> ToolCall:
        parts = [prompt]
        for call, result in prior:
            parts.append(f"TOOL CALL: {json.dumps(call.to_dict(), ensure_ascii=False)}")
            parts.append(f"TOOL RESULT: {json.dumps(result.to_dict(), ensure_ascii=False)}")
        parts.append(
            'Reply with exactly one JSON object: {"tool": "retrieve_preview"|"similarity"|"submit_dms", "args": {...}}'
        )
        try:
            response = self._backend.complete("\n\n".join(parts), max_tokens=self._max_tokens)
        except BackendError:
            return ToolCall(kind=TOOL_SUBMIT_DMS, args={"drafts": []})
        return _parse_tool_call(response.text or "")


def _parse_tool_call(text: str) -> ToolCall:
    match = re.search(r"\{.*\}", text, re.DOTALL)
    if not match:
        return ToolCall(kind=TOOL_SUBMIT_DMS, args={"drafts": []})
    try:
        data = json.loads(match.group(0))
        return ToolCall(kind=str(data["tool"]), args=dict(data.get("args", {})))
    except (json.JSONDecodeError, KeyError, TypeError):
        return ToolCall(kind=TOOL_SUBMIT_DMS, args={"drafts": []})


def drive_teacher_turn(
    policy: TeacherPolicy,
    prompt: str,
    kb_view: KBView,
    embedder: Embedder,
    config: CompileConfig,
    problem_id: str,
) -> tuple[tuple[tuple[ToolCall, ToolResult], ...], list[DMDraft]]:
    """Run one teacher turn to its submit_dms (or the per-turn call cap).

    Returns the transcript of executed calls and the submitted drafts (empty
    when the teacher never submitted within the cap).
    """
    begin = getattr(policy, "begin_turn", None)
    if begin is not None:
        begin(problem_id)
    transcript: list[tuple[ToolCall, ToolResult]] = []
    submitted: list[DMDraft] = []
    for call_id in range(config.tool_call_cap):
        call = policy.next_call(prompt, transcript)
        call = replace(call, call_id=call_id)
        result = handle_tool_call(kb_view, call, embedder, weights=config.agent.weights)
        transcript.append((call, result))
        if call.kind == TOOL_SUBMIT_DMS:
            if result.ok:
                submitted = [_parse_draft(d) for d in call.args.get("drafts", [])]
            break
    return tuple(transcript), submitted


def compile_problem(
    problem: Problem,
    kb: KnowledgeBase,
    agent_backend: Backend,
    teacher: TeacherPolicy,
    embedder: Embedder | None = None,
    config: CompileConfig = CompileConfig(),
    *,
    clock: Callable[[], str] | None = None,
) -> tuple[KnowledgeBase, CompilationLog]:
    """Attempt/teach/retry until the agent answers correctly or the iteration
    cap is reached. The KB keeps every appended memory either way."""
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    timestamp = clock if clock is not None else _utc_now
    size_before = len(kb)
    iterations: list[IterationRecord] = []
    outcome = OUTCOME_ITERATION_CAP
    for index in range(config.max_iterations):
        recorded: list[tuple[dict, dict]] = []
        recording = RecordingBackend(
            agent_backend, lambda request, response: recorded.append((request, response))
        )
        attempt = run_attempt(problem, kb, recording, embedder, config.agent)
        if attempt.outcome == "correct":
            iterations.append(
                IterationRecord(
                    index=index,
                    attempt=attempt,
                    attempt_transcript=tuple(recorded),
                    kb_revision_after=kb.revision,
                )
            )
            outcome = OUTCOME_COMPILED
            break
        prompt = render_teacher_prompt(problem, kb, attempt, iterations, config)
        calls, submitted = drive_teacher_turn(teacher, prompt, kb, embedder, config, problem.id)
        accepted, rejected = cheat_filter(submitted, problem, config.cheat_filter)
        stamped = [
            replace(
                draft,
                provenance=Provenance(
                    author="teacher",
                    problem_id=problem.id,
                    compile_iteration=index,
                    created_at=timestamp(),
                ),
            )
            for draft in accepted
        ]
        new_kb = append_dms(kb, stamped, embedder=embedder)
        accepted_ids = tuple(dm.id for dm in new_kb.dms[len(kb.dms):])
        kb = new_kb
        iterations.append(
            IterationRecord(
                index=index,
                attempt=attempt,
                attempt_transcript=tuple(recorded),
                tool_calls=calls,
                submitted=tuple(submitted),
                accepted_ids=accepted_ids,
                rejected=tuple(rejected),
                kb_revision_after=kb.revision,
                teacher_prompt=prompt,
            )
        )
    log = CompilationLog(
        problem_id=problem.id,
        iterations=tuple(iterations),
        final_outcome=outcome,
        kb_size_before=size_before,
        kb_size_after=len(kb),
    )
    return kb, log


def verify_compiled(
    problem: Problem,
    kb: KnowledgeBase,
    log: CompilationLog,
    embedder: Embedder | None = None,
    config: CompileConfig = CompileConfig(),
) -> bool:
    """Compiled implies verified: replay the final attempt's recorded backend
    calls against the KB revision it ran on and check it still grades correct.

    ``kb`` may be any later revision of the same store (the compile is
    append-only, so the attempt's revision is recoverable as a prefix). Any
    replay divergence counts as a failed verification.
    """
    from .errors import ReplayError

    if log.final_outcome != OUTCOME_COMPILED or not log.iterations:
        return False
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    final_record = log.iterations[-1]
    if final_record.kb_revision_after > kb.revision:
        return False
    view = kb.at_revision(final_record.kb_revision_after)
    try:
        replayed = run_attempt(
            problem, view, ReplayBackend(final_record.attempt_transcript), embedder, config.agent
        )
    except ReplayError:
        return False
    return replayed.outcome == "correct"


def compile_corpus(
    problems: Sequence[Problem],
    kb: KnowledgeBase,
    agent_backend: Backend,
    teacher: TeacherPolicy,
    embedder: Embedder | None = None,
    config: CompileConfig = CompileConfig(),
    *,
    clock: Callable[[], str] | None = None,
    on_problem_done: Callable[[KnowledgeBase, CompilationLog], None] | None = None,
) -> tuple[KnowledgeBase, CompilationStats, list[CompilationLog]]:
    """Fold compile_problem over the corpus in order; failures don't abort.

    ``on_problem_done`` fires after each problem with the grown KB (used to
    persist revisions incrementally so readers can follow the run).
    """
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    logs: list[CompilationLog] = []
    seed_size = len(kb)
    curve: list[int] = [seed_size]
    for problem in problems:
        kb, log = compile_problem(
            problem, kb, agent_backend, teacher, embedder, config, clock=clock
        )
        logs.append(log)
        curve.append(len(kb))
        if on_problem_done is not None:
            on_problem_done(kb, log)
    stats = stats_from_logs(logs, seed_size=seed_size, final_size=len(kb), curve=curve)
    return kb, stats, logs


def stats_from_logs(
    logs: Sequence[CompilationLog],
    *,
    seed_size: int,
    final_size: int,
    curve: Sequence[int] | None = None,
) -> CompilationStats:
    counts = [len(log.iterations) for log in logs]
    if not counts:
        return CompilationStats(
            problems_attempted=0,
            problems_compiled=0,
            total_dms=final_size - seed_size,
            iterations_mean=0.0,
            iterations_sd=0.0,
            iterations_max=0,
            kb_size_curve=tuple(curve or (seed_size,)),
        )
    mean = math.fsum(counts) / len(counts)
    # population standard deviation
    sd = math.sqrt(math.fsum((c - mean) ** 2 for c in counts) / len(counts))
    return CompilationStats(
        problems_attempted=len(logs),
        problems_compiled=sum(1 for log in logs if log.final_outcome == OUTCOME_COMPILED),
        total_dms=final_size - seed_size,
        iterations_mean=mean,
        iterations_sd=sd,
        iterations_max=max(counts),
        kb_size_curve=tuple(curve or (seed_size, final_size)),
    )


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
