"""The cognitive agent: a goal stack + working memory driven by one backend.

Each step retrieves the single best-matching declarative memory, asks the
backend to pick an action by comparing the three tag logprobs, generates the
action's content, and applies it with deterministic transition rules. The
full attempt is recorded as an ordered problem-solving history; nothing the
agent does depends on hidden state outside that record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from . import backend as backend_mod
from .backend import ActionTag, Backend
from .embedder import Embedder, build_embedder
from .errors import BackendError, ValidationError
from .kb import KBView, DeclarativeMemory, RetrievalQuery, ScoreWeights, retrieve

DEFAULT_G0_TEXT = "Solve the problem."

OUTCOME_CORRECT = "correct"
OUTCOME_INCORRECT = "incorrect"
OUTCOME_STEP_LIMIT = "step_limit"
OUTCOME_BACKEND_FAILURE = "backend_failure"

PROMPT_MODE_ACTION = "action"
PROMPT_MODE_CONTENT = "content"
PROMPT_MODE_OPTIONS = "options"

FLAG_DEPTH_LIMIT = "depth_limit"
FLAG_TRUNCATED = "truncated"
FLAG_FINAL_ANSWER = "final_answer"
FLAG_BACKEND_FAILURE = "backend_failure"


@dataclass(frozen=True)
class Problem:
    """A multiple-choice problem with 2-10 lettered options."""

    id: str
    stem: str
    options: dict[str, str]  # insertion order is the option order
    correct_letter: str
    kc_tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id.strip():
            raise ValidationError("problem id must be non-empty", field="id")
        if not self.stem.strip():
            raise ValidationError("problem stem must be non-empty", field="stem")
        letters = list(self.options)
        if not 2 <= len(letters) <= 10:
            raise ValidationError("problems need 2-10 options", field="options")
        for letter in letters:
            if len(letter) != 1 or not letter.isupper():
                raise ValidationError(f"option letter {letter!r} must be one uppercase character",
                                      field="options")
        if len(set(letters)) != len(letters):
            raise ValidationError("option letters must be unique", field="options")
        if self.correct_letter not in self.options:
            raise ValidationError(f"correct_letter {self.correct_letter!r} not among options",
                                  field="correct_letter")

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(self.options)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "stem": self.stem,
            "options": dict(self.options),
            "correct_letter": self.correct_letter,
            "kc_tags": list(self.kc_tags),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Problem":
        return cls(
            id=data["id"],
            stem=data["stem"],
            options=dict(data["options"]),
            correct_letter=data["correct_letter"],
            kc_tags=tuple(data.get("kc_tags", ())),
        )


@dataclass(frozen=True)
class ModelState:
    """Goal stack (bottom = the fixed top-level goal) plus working memory."""

    goal_stack: tuple[str, ...]
    wm: tuple[str, ...] = ()
    last_retrieved: tuple[str, float] | None = None  # (dm_id, score)

    def __post_init__(self) -> None:
        if not self.goal_stack:
            raise ValidationError("goal stack must be non-empty during a run")

    @property
    def top_goal(self) -> str:
        return self.goal_stack[-1]

    @property
    def wm_text(self) -> str:
        return "\n".join(self.wm)

    def to_dict(self) -> dict:
        return {
            "goal_stack": list(self.goal_stack),
            "wm": list(self.wm),
            "last_retrieved": list(self.last_retrieved) if self.last_retrieved else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelState":
        lr = data.get("last_retrieved")
        return cls(
            goal_stack=tuple(data["goal_stack"]),
            wm=tuple(data["wm"]),
            last_retrieved=(lr[0], float(lr[1])) if lr else None,
        )


@dataclass(frozen=True)
class RetrievedInfo:
    dm_id: str
    score: float
    description: str

    def to_dict(self) -> dict:
        return {"dm_id": self.dm_id, "score": self.score, "description": self.description}

    @classmethod
    def from_dict(cls, data: Mapping) -> "RetrievedInfo":
        return cls(dm_id=data["dm_id"], score=float(data["score"]), description=data["description"])


@dataclass(frozen=True)
class StepRecord:
    index: int
    state_before: ModelState
    retrieved: RetrievedInfo | None
    action_logprobs: dict[str, float]
    chosen_tag: str
    content: str
    state_after: ModelState
    flags: tuple[str, ...] = ()
    wm_evicted: tuple[str, ...] = ()
    timing_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "state_before": self.state_before.to_dict(),
            "retrieved": self.retrieved.to_dict() if self.retrieved else None,
            "action_logprobs": dict(self.action_logprobs),
            "chosen_tag": self.chosen_tag,
            "content": self.content,
            "state_after": self.state_after.to_dict(),
            "flags": list(self.flags),
            "wm_evicted": list(self.wm_evicted),
            "timing_ms": self.timing_ms,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "StepRecord":
        return cls(
            index=int(data["index"]),
            state_before=ModelState.from_dict(data["state_before"]),
            retrieved=RetrievedInfo.from_dict(data["retrieved"]) if data.get("retrieved") else None,
            action_logprobs={k: float(v) for k, v in data["action_logprobs"].items()},
            chosen_tag=data["chosen_tag"],
            content=data["content"],
            state_after=ModelState.from_dict(data["state_after"]),
            flags=tuple(data.get("flags", ())),
            wm_evicted=tuple(data.get("wm_evicted", ())),
            timing_ms=float(data.get("timing_ms", 0.0)),
        )


@dataclass(frozen=True)
class AttemptResult:
    problem_id: str
    history: tuple[StepRecord, ...]
    outcome: str
    final_answer_text: str | None = None
    option_distribution: dict[str, float] | None = None
    predicted_letter: str | None = None
    failure_detail: str | None = None

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "history": [step.to_dict() for step in self.history],
            "outcome": self.outcome,
            "final_answer_text": self.final_answer_text,
            "option_distribution": (
                dict(self.option_distribution) if self.option_distribution else None
            ),
            "predicted_letter": self.predicted_letter,
            "failure_detail": self.failure_detail,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AttemptResult":
        return cls(
            problem_id=data["problem_id"],
            history=tuple(StepRecord.from_dict(s) for s in data["history"]),
            outcome=data["outcome"],
            final_answer_text=data.get("final_answer_text"),
            option_distribution=(
                {k: float(v) for k, v in data["option_distribution"].items()}
                if data.get("option_distribution")
                else None
            ),
            predicted_letter=data.get("predicted_letter"),
            failure_detail=data.get("failure_detail"),
        )


@dataclass(frozen=True)
class AgentConfig:
    g0_text: str = DEFAULT_G0_TEXT
    max_steps: int = 32
    wm_capacity: int = 16
    goal_depth_cap: int = 8
    retrieval_k: int = 1
    fallback_scoring: bool = False
    weights: ScoreWeights = field(default_factory=ScoreWeights)

    def to_dict(self) -> dict:
        return {
            "g0_text": self.g0_text,
            "max_steps": self.max_steps,
            "wm_capacity": self.wm_capacity,
            "goal_depth_cap": self.goal_depth_cap,
            "retrieval_k": self.retrieval_k,
            "fallback_scoring": self.fallback_scoring,
            "weights": {"goal": self.weights.goal, "wm": self.weights.wm},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AgentConfig":
        weights = data.get("weights", {})
        return cls(
            g0_text=data.get("g0_text", DEFAULT_G0_TEXT),
            max_steps=int(data.get("max_steps", 32)),
            wm_capacity=int(data.get("wm_capacity", 16)),
            goal_depth_cap=int(data.get("goal_depth_cap", 8)),
            retrieval_k=int(data.get("retrieval_k", 1)),
            fallback_scoring=bool(data.get("fallback_scoring", False)),
            weights=ScoreWeights(
                goal=float(weights.get("goal", 0.5)), wm=float(weights.get("wm", 0.5))
            ),
        )


_SYSTEM_RULES = (
    "SYSTEM RULES:\n"
    "You are a cognitive agent solving one multiple-choice problem.\n"
    "You act in steps. Each step you either set a subgoal (G), update working\n"
    "memory with the retrieved knowledge (R), or answer the current goal (A).\n"
    "Rely only on the retrieved knowledge shown below; do not use any other\n"
    "knowledge."
)

_MODE_INSTRUCTIONS = {
    (PROMPT_MODE_ACTION, None): (
        "Choose your next action. Reply with exactly one token: \"G\" to set a\n"
        "subgoal, \"R\" to update working memory with the retrieved knowledge, or\n"
        "\"A\" to answer the current goal."
    ),
    (PROMPT_MODE_CONTENT, "G"): "State the single subgoal to pursue next, as one short sentence.",
    (PROMPT_MODE_CONTENT, "R"): (
        "State the working-memory update derived from the retrieved knowledge, as\n"
        "one short sentence."
    ),
    (PROMPT_MODE_CONTENT, "A"): "State the answer to the current goal, as one short sentence.",
}


def render_prompt(
    state: ModelState,
    retrieved: DeclarativeMemory | None,
    problem: Problem,
    mode: str,
    tag: ActionTag | None = None,
) -> str:
    """Deterministic prompt template (documented byte-exact in docs/formats.md).

    Fixed order: system rules, problem stem + options, full goal stack with
    the top marked CURRENT, WM items in insertion order, the retrieved
    description (or the literal "none"), then the mode-specific instruction.
    """
    lines: list[str] = [_SYSTEM_RULES, "", "PROBLEM:", problem.stem, "OPTIONS:"]
    for letter, text in problem.options.items():
        lines.append(f"{letter}. {text}")
    lines.append("")
    lines.append("GOAL STACK:")
    top_index = len(state.goal_stack) - 1
    for i, goal in enumerate(state.goal_stack):
        marker = "  <- CURRENT" if i == top_index else ""
        lines.append(f"{i + 1}. {goal}{marker}")
    lines.append("")
    if state.wm:
        lines.append("WORKING MEMORY:")
        for item in state.wm:
            lines.append(f"- {item}")
    else:
        lines.append("WORKING MEMORY: (empty)")
    lines.append("")
    if retrieved is None:
        lines.append("RETRIEVED KNOWLEDGE: none")
    else:
        lines.append(f"RETRIEVED KNOWLEDGE: {retrieved.description}")
    lines.append("")
    lines.append("INSTRUCTION:")
    if mode == PROMPT_MODE_OPTIONS:
        letters = ", ".join(problem.letters)
        lines.append(
            f"Give the letter of the correct option. Reply with exactly one letter\namong: {letters}."
        )
    else:
        key = (mode, tag.value if mode == PROMPT_MODE_CONTENT and tag else None)
        try:
            lines.append(_MODE_INSTRUCTIONS[key])
        except KeyError:
            raise ValidationError(f"unknown prompt mode {mode!r} / tag {tag!r}") from None
    return "\n".join(lines)


def select_action(logprobs: Mapping[str, float]) -> ActionTag:
    """Argmax over the three tag logprobs; exact ties break A > G > R."""
    priority = {"A": 3, "G": 2, "R": 1}
    for tag in ("G", "R", "A"):
        value = logprobs.get(tag)
        if value is None or not math.isfinite(value):
            raise ValidationError(f"action logprob for {tag!r} missing or non-finite")
    best = max(("G", "R", "A"), key=lambda t: (logprobs[t], priority[t]))
    return ActionTag(best)


def apply_action(
    state: ModelState, tag: ActionTag, content: str, config: AgentConfig = AgentConfig()
) -> tuple[ModelState, tuple[str, ...], tuple[str, ...], bool]:
    """Deterministic state transition.

    G pushes the content as the new top goal (a no-op with a depth_limit flag
    beyond the depth cap). R appends the content to WM. A pops the answered
    goal and appends an "Answered ..." WM line; answering the bottom goal
    keeps the stack (it must stay non-empty and its bottom fixed) and enters
    the final-scoring phase. WM beyond capacity evicts oldest-first, with
    evictions reported.

    Returns (new_state, flags, evicted_wm_items, entered_final_scoring).
    """
    if not content:
        raise ValidationError("action content must be non-empty")
    flags: tuple[str, ...] = ()
    evicted: tuple[str, ...] = ()
    final = False
    if tag is ActionTag.G:
        if len(state.goal_stack) >= config.goal_depth_cap:
            return state, (FLAG_DEPTH_LIMIT,), (), False
        new_state = ModelState(
            goal_stack=state.goal_stack + (content,),
            wm=state.wm,
            last_retrieved=state.last_retrieved,
        )
        return new_state, flags, evicted, final
    if tag is ActionTag.R:
        wm, evicted = _push_wm(state.wm, content, config.wm_capacity)
        return (
            ModelState(goal_stack=state.goal_stack, wm=wm, last_retrieved=state.last_retrieved),
            flags,
            evicted,
            final,
        )
    answered_goal = state.top_goal
    line = f"Answered '{answered_goal}': {content}"
    wm, evicted = _push_wm(state.wm, line, config.wm_capacity)
    if len(state.goal_stack) > 1:
        new_stack = state.goal_stack[:-1]
    else:
        new_stack = state.goal_stack
        flags = (FLAG_FINAL_ANSWER,)
        final = True
    return (
        ModelState(goal_stack=new_stack, wm=wm, last_retrieved=state.last_retrieved),
        flags,
        evicted,
        final,
    )


def _push_wm(wm: tuple[str, ...], item: str, capacity: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    new_wm = wm + (item,)
    if len(new_wm) <= capacity:
        return new_wm, ()
    overflow = len(new_wm) - capacity
    return new_wm[overflow:], new_wm[:overflow]


def softmax(logprobs: Mapping[str, float]) -> dict[str, float]:
    """Stable softmax (fsum-normalized) preserving the input key order."""
    peak = max(logprobs.values())
    exps = {k: math.exp(v - peak) for k, v in logprobs.items()}
    total = math.fsum(exps.values())
    return {k: v / total for k, v in exps.items()}


def score_options(
    backend: Backend, state: ModelState, retrieved: DeclarativeMemory | None, problem: Problem
) -> tuple[dict[str, float], str, float]:
    """Final option distribution, predicted letter, and backend elapsed ms.

    Softmax over the backend's per-letter logprobs restricted to the problem's
    letters; argmax ties go to the earlier letter in option order.
    """
    prompt = render_prompt(state, retrieved, problem, PROMPT_MODE_OPTIONS)
    response = backend_mod.option_logprobs(backend, prompt, problem.letters)
    assert response.logprobs is not None
    distribution = softmax({letter: response.logprobs[letter] for letter in problem.letters})
    predicted = problem.letters[0]
    for letter in problem.letters:
        if distribution[letter] > distribution[predicted]:
            predicted = letter
    return distribution, predicted, response.elapsed_ms


def grade(result: AttemptResult, problem: Problem) -> str:
    """correct iff the predicted letter matches; non-answers grade incorrect."""
    if result.predicted_letter is None:
        return OUTCOME_INCORRECT
    return OUTCOME_CORRECT if result.predicted_letter == problem.correct_letter else OUTCOME_INCORRECT


def run_attempt(
    problem: Problem,
    kb_view: KBView,
    backend: Backend,
    embedder: Embedder | None = None,
    config: AgentConfig = AgentConfig(),
) -> AttemptResult:
    """One full attempt: retrieve, act, apply, record — until the top-level
    goal is answered (then score options) or the step limit hits.

    Never raises past the result type: unrecoverable backend errors yield
    outcome ``backend_failure`` with a diagnostic step record appended.
    """
    if embedder is None:
        embedder = build_embedder(kb_view.embedder_config)
    state = ModelState(goal_stack=(config.g0_text,))
    history: list[StepRecord] = []
    final = False
    final_answer: str | None = None
    final_retrieved: DeclarativeMemory | None = None

    for index in range(config.max_steps):
        state_before = state
        query = RetrievalQuery(goal_text=state.top_goal, wm_text=state.wm_text)
        hits = retrieve(kb_view, query, config.retrieval_k, embedder=embedder, weights=config.weights)
        retrieved_dm: DeclarativeMemory | None = None
        retrieved_info: RetrievedInfo | None = None
        if hits:
            retrieved_dm = kb_view.get(hits[0].dm_id)
            retrieved_info = RetrievedInfo(
                dm_id=hits[0].dm_id, score=hits[0].score, description=retrieved_dm.description
            )
            state = ModelState(
                goal_stack=state.goal_stack,
                wm=state.wm,
                last_retrieved=(hits[0].dm_id, hits[0].score),
            )
        try:
            action_response = backend_mod.action_logprobs(
                backend, render_prompt(state, retrieved_dm, problem, PROMPT_MODE_ACTION)
            )
            assert action_response.logprobs is not None
            tag = select_action(action_response.logprobs)
            content_response = backend_mod.generate_content(
                backend,
                render_prompt(state, retrieved_dm, problem, PROMPT_MODE_CONTENT, tag),
                tag,
            )
        except BackendError as exc:
            history.append(
                StepRecord(
                    index=index,
                    state_before=state_before,
                    retrieved=retrieved_info,
                    action_logprobs={},
                    chosen_tag="",
                    content="",
                    state_after=state,
                    flags=(FLAG_BACKEND_FAILURE,),
                )
            )
            return AttemptResult(
                problem_id=problem.id,
                history=tuple(history),
                outcome=OUTCOME_BACKEND_FAILURE,
                failure_detail=str(exc),
            )
        text = content_response.text or ""
        new_state, flags, evicted, final = apply_action(state, tag, text, config)
        if content_response.truncated:
            flags = flags + (FLAG_TRUNCATED,)
        history.append(
            StepRecord(
                index=index,
                state_before=state_before,
                retrieved=retrieved_info,
                action_logprobs=dict(action_response.logprobs),
                chosen_tag=tag.value,
                content=text,
                state_after=new_state,
                flags=flags,
                wm_evicted=evicted,
                timing_ms=action_response.elapsed_ms + content_response.elapsed_ms,
            )
        )
        state = new_state
        if final:
            final_answer = text
            final_retrieved = retrieved_dm
            break

    if not final:
        if config.fallback_scoring:
            try:
                distribution, predicted, _ = score_options(backend, state, None, problem)
            except BackendError:
                distribution, predicted = None, None
            return AttemptResult(
                problem_id=problem.id,
                history=tuple(history),
                outcome=OUTCOME_STEP_LIMIT,
                option_distribution=distribution,
                predicted_letter=predicted,
            )
        return AttemptResult(
            problem_id=problem.id, history=tuple(history), outcome=OUTCOME_STEP_LIMIT
        )

    try:
        distribution, predicted, _ = score_options(backend, state, final_retrieved, problem)
    except BackendError as exc:
        return AttemptResult(
            problem_id=problem.id,
            history=tuple(history),
            outcome=OUTCOME_BACKEND_FAILURE,
            final_answer_text=final_answer,
            failure_detail=str(exc),
        )
    result = AttemptResult(
        problem_id=problem.id,
        history=tuple(history),
        outcome=OUTCOME_INCORRECT,
        final_answer_text=final_answer,
        option_distribution=distribution,
        predicted_letter=predicted,
    )
    return AttemptResult(
        problem_id=result.problem_id,
        history=result.history,
        outcome=grade(result, problem),
        final_answer_text=result.final_answer_text,
        option_distribution=result.option_distribution,
        predicted_letter=result.predicted_letter,
    )
