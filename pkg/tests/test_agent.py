"""Agent runtime: prompts, action selection, transitions, full attempts."""

from __future__ import annotations

import json
import math
import random

import pytest

from cac.agent import (
    AgentConfig,
    AttemptResult,
    ModelState,
    Problem,
    apply_action,
    grade,
    render_prompt,
    run_attempt,
    score_options,
    select_action,
)
from cac.backend import ActionTag, ScriptedBackend, ScriptedBackendTable, ScriptedRule
from cac.errors import ValidationError
from cac.fixtures import (
    DESC_START_CUE,
    EXPECTED_PREDICTED,
    EXPECTED_STACKS,
    EXPECTED_TAGS,
    FINAL_OPTION_PROBS,
    GOAL_SUB,
    GOAL_TOP,
    fiber_agent_config,
    fiber_backend,
    fiber_kb,
    fiber_problem,
    fixture_embedder,
)
from cac.kb import KnowledgeBase

from helpers import oracle_softmax

# Hand expansion of the documented prompt template on the step-0 state of the
# shipped walkthrough fixture (top-level goal only, empty WM, start cue
# retrieved, action mode).
HAND_EXPANDED_STEP0_PROMPT = (
    "SYSTEM RULES:\n"
    "You are a cognitive agent solving one multiple-choice problem.\n"
    "You act in steps. Each step you either set a subgoal (G), update working\n"
    "memory with the retrieved knowledge (R), or answer the current goal (A).\n"
    "Rely only on the retrieved knowledge shown below; do not use any other\n"
    "knowledge.\n"
    "\n"
    "PROBLEM:\n"
    "Which of the following is characterized as dietary fiber?\n"
    "OPTIONS:\n"
    "A. Glycogen\n"
    "B. Cellulose\n"
    "C. Sucrose\n"
    "D. Starch\n"
    "\n"
    "GOAL STACK:\n"
    "1. Solve the problem.  <- CURRENT\n"
    "\n"
    "WORKING MEMORY: (empty)\n"
    "\n"
    "RETRIEVED KNOWLEDGE: If the task is to resolve the question and working memory "
    "indicates cellulose is an indigestible plant carbohydrate, proceed toward resolution.\n"
    "\n"
    "INSTRUCTION:\n"
    "Choose your next action. Reply with exactly one token: \"G\" to set a\n"
    "subgoal, \"R\" to update working memory with the retrieved knowledge, or\n"
    "\"A\" to answer the current goal."
)


def small_problem() -> Problem:
    return Problem(
        id="p-small",
        stem="Pick the letter that is second in the alphabet.",
        options={"A": "first letter", "B": "second letter"},
        correct_letter="B",
    )


def test_problem_validation():
    with pytest.raises(ValidationError):
        Problem(id="x", stem="s", options={"A": "one"}, correct_letter="A")
    with pytest.raises(ValidationError):
        Problem(id="x", stem="s", options={"A": "one", "b": "two"}, correct_letter="A")
    with pytest.raises(ValidationError):
        Problem(id="x", stem="s", options={"A": "one", "B": "two"}, correct_letter="C")


def test_render_prompt_matches_hand_expansion():
    kb = fiber_kb()
    state = ModelState(goal_stack=(GOAL_TOP,))
    prompt = render_prompt(state, kb.dms[0], fiber_problem(), "action")
    assert prompt == HAND_EXPANDED_STEP0_PROMPT
    assert DESC_START_CUE in prompt  # retrieved description injected verbatim


def test_render_prompt_deterministic():
    kb = fiber_kb()
    state = ModelState(goal_stack=(GOAL_TOP, GOAL_SUB), wm=("one fact",))
    first = render_prompt(state, kb.dms[1], fiber_problem(), "content", ActionTag.R)
    second = render_prompt(state, kb.dms[1], fiber_problem(), "content", ActionTag.R)
    assert first == second


def test_render_prompt_empty_wm_placeholder_and_none_retrieval():
    state = ModelState(goal_stack=("Solve the problem.",))
    prompt = render_prompt(state, None, small_problem(), "action")
    assert "WORKING MEMORY: (empty)" in prompt
    assert "RETRIEVED KNOWLEDGE: none" in prompt


def test_render_prompt_marks_current_goal():
    state = ModelState(goal_stack=("bottom goal", "middle goal", "top goal"))
    prompt = render_prompt(state, None, small_problem(), "action")
    assert "1. bottom goal\n2. middle goal\n3. top goal  <- CURRENT" in prompt


def test_select_action_argmax_and_ties():
    assert select_action({"G": -0.1, "R": -2.0, "A": -3.0}) is ActionTag.G
    assert select_action({"G": -1.0, "R": -1.0, "A": -1.0}) is ActionTag.A  # tie -> A
    assert select_action({"G": -1.0, "R": -1.0, "A": -5.0}) is ActionTag.G  # tie -> G over R


def test_select_action_random_triples_match_argmax_oracle():
    rng = random.Random(2024)
    for _ in range(1000):
        logprobs = {tag: rng.uniform(-10, 0) for tag in ("G", "R", "A")}
        chosen = select_action(logprobs)
        assert logprobs[chosen.value] == max(logprobs.values())


def test_select_action_rejects_non_finite():
    with pytest.raises(ValidationError):
        select_action({"G": float("-inf"), "R": -1.0, "A": -1.0})
    with pytest.raises(ValidationError):
        select_action({"G": -1.0, "R": -1.0})


def test_apply_action_g_pushes_subgoal():
    state = ModelState(goal_stack=(GOAL_TOP,))
    new_state, flags, evicted, final = apply_action(state, ActionTag.G, GOAL_SUB)
    assert new_state.goal_stack == (GOAL_TOP, GOAL_SUB)
    assert not flags and not evicted and not final


def test_apply_action_a_pops_and_records_answer():
    state = ModelState(goal_stack=(GOAL_TOP, GOAL_SUB))
    answer = "Cellulose is indigestible plant-based carbohydrate."
    new_state, flags, evicted, final = apply_action(state, ActionTag.A, answer)
    assert new_state.goal_stack == (GOAL_TOP,)
    assert new_state.wm[-1] == f"Answered '{GOAL_SUB}': {answer}"
    assert not final


def test_apply_action_a_on_bottom_goal_enters_final_scoring_keeping_stack():
    state = ModelState(goal_stack=(GOAL_TOP,))
    new_state, flags, evicted, final = apply_action(state, ActionTag.A, "the final answer")
    assert final
    assert new_state.goal_stack == (GOAL_TOP,)
    assert "final_answer" in flags


def test_apply_action_r_evicts_oldest_beyond_capacity():
    config = AgentConfig(wm_capacity=16)
    wm = tuple(f"item {i}" for i in range(16))
    state = ModelState(goal_stack=(GOAL_TOP,), wm=wm)
    new_state, flags, evicted, final = apply_action(state, ActionTag.R, "item 16", config)
    assert len(new_state.wm) == 16
    assert evicted == ("item 0",)
    assert new_state.wm[-1] == "item 16" and new_state.wm[0] == "item 1"


def test_apply_action_g_at_depth_cap_is_flagged_noop():
    config = AgentConfig(goal_depth_cap=3)
    state = ModelState(goal_stack=("g0", "g1", "g2"))
    new_state, flags, evicted, final = apply_action(state, ActionTag.G, "g3", config)
    assert new_state == state
    assert "depth_limit" in flags


def test_apply_action_requires_content():
    with pytest.raises(ValidationError):
        apply_action(ModelState(goal_stack=("g",)), ActionTag.G, "")


def test_stack_discipline_deltas():
    state = ModelState(goal_stack=("g0",))
    pushed, *_ = apply_action(state, ActionTag.G, "g1")
    assert len(pushed.goal_stack) - len(state.goal_stack) == 1
    same, *_ = apply_action(pushed, ActionTag.R, "remembering")
    assert len(same.goal_stack) == len(pushed.goal_stack)
    popped, *_ = apply_action(pushed, ActionTag.A, "answered")
    assert len(popped.goal_stack) - len(pushed.goal_stack) == -1


def options_backend(logprobs: dict) -> ScriptedBackend:
    rules = (ScriptedRule(mode="option_logprobs", pattern="", logprobs=logprobs),)
    return ScriptedBackend(ScriptedBackendTable(rules=rules))


def test_score_options_reference_distribution():
    backend = options_backend({k: math.log(v) for k, v in FINAL_OPTION_PROBS.items()})
    state = ModelState(goal_stack=(GOAL_TOP,))
    distribution, predicted, _ = score_options(backend, state, None, fiber_problem())
    for letter, prob in FINAL_OPTION_PROBS.items():
        assert distribution[letter] == pytest.approx(prob, abs=1e-3)
    assert predicted == "B"
    assert math.fsum(distribution.values()) == pytest.approx(1.0, abs=1e-6)


def test_score_options_uniform_ties_to_first_letter():
    backend = options_backend({"A": -1.3, "B": -1.3, "C": -1.3, "D": -1.3})
    state = ModelState(goal_stack=(GOAL_TOP,))
    distribution, predicted, _ = score_options(backend, state, None, fiber_problem())
    assert all(p == pytest.approx(0.25, abs=1e-12) for p in distribution.values())
    assert predicted == "A"


def test_score_options_matches_softmax_oracle():
    rng = random.Random(7)
    for _ in range(25):
        logprobs = {letter: rng.uniform(-8, 0) for letter in "ABCD"}
        backend = options_backend(logprobs)
        state = ModelState(goal_stack=(GOAL_TOP,))
        distribution, _, _ = score_options(backend, state, None, fiber_problem())
        expected = oracle_softmax(logprobs)
        for letter in "ABCD":
            assert distribution[letter] == pytest.approx(expected[letter], abs=1e-12)


def test_grade_rules():
    base = AttemptResult(problem_id="p", history=(), outcome="incorrect", predicted_letter="B")
    assert grade(base, fiber_problem()) == "correct"
    wrong = AttemptResult(problem_id="p", history=(), outcome="incorrect", predicted_letter="A")
    assert grade(wrong, fiber_problem()) == "incorrect"
    unanswered = AttemptResult(problem_id="p", history=(), outcome="step_limit")
    assert grade(unanswered, fiber_problem()) == "incorrect"


def test_run_attempt_reproduces_reference_walkthrough():
    embedder = fixture_embedder()
    result = run_attempt(
        fiber_problem(), fiber_kb(embedder), fiber_backend(), embedder, fiber_agent_config()
    )
    assert result.outcome == "correct"
    assert [step.chosen_tag for step in result.history] == list(EXPECTED_TAGS)
    stacks = [result.history[0].state_before.goal_stack]
    stacks += [step.state_after.goal_stack for step in result.history]
    assert tuple(stacks) == EXPECTED_STACKS
    assert result.predicted_letter == EXPECTED_PREDICTED
    for letter, prob in FINAL_OPTION_PROBS.items():
        assert result.option_distribution[letter] == pytest.approx(prob, abs=1e-3)
    # each step retrieved the next shipped memory in order
    kb = fiber_kb(embedder)
    assert [step.retrieved.dm_id for step in result.history] == [dm.id for dm in kb.dms]


def test_run_attempt_empty_kb_answers_in_one_step():
    problem = small_problem()
    table = ScriptedBackendTable(
        rules=(),
        default_action_logprobs={"G": -3.0, "R": -3.0, "A": -0.1},
        default_text=problem.stem,  # stem echo
        default_option_logprobs={"A": -0.2, "B": -2.0},
    )
    kb = KnowledgeBase(embedder_config=fixture_embedder().config)
    result = run_attempt(problem, kb, ScriptedBackend(table), fixture_embedder())
    assert len(result.history) == 1
    assert result.history[0].retrieved is None
    assert result.history[0].chosen_tag == "A"
    assert result.outcome == "incorrect"  # scripted default favors the wrong letter


def test_run_attempt_is_deterministic_byte_for_byte():
    embedder = fixture_embedder()
    first = run_attempt(
        fiber_problem(), fiber_kb(embedder), fiber_backend(), embedder, fiber_agent_config()
    )
    second = run_attempt(
        fiber_problem(), fiber_kb(embedder), fiber_backend(), embedder, fiber_agent_config()
    )
    assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(
        second.to_dict(), sort_keys=True
    )


def test_run_attempt_step_limit():
    # G forever: the stack grows to the cap, then depth-limited no-ops until max_steps
    table = ScriptedBackendTable(
        rules=(),
        default_action_logprobs={"G": -0.1, "R": -3.0, "A": -3.0},
        default_text="another subgoal",
    )
    kb = KnowledgeBase(embedder_config=fixture_embedder().config)
    config = AgentConfig(max_steps=6, goal_depth_cap=3)
    result = run_attempt(small_problem(), kb, ScriptedBackend(table), fixture_embedder(), config)
    assert result.outcome == "step_limit"
    assert len(result.history) == 6
    assert result.option_distribution is None
    assert any("depth_limit" in step.flags for step in result.history)


def test_run_attempt_step_limit_with_fallback_scoring():
    table = ScriptedBackendTable(
        rules=(),
        default_action_logprobs={"G": -0.1, "R": -3.0, "A": -3.0},
        default_text="another subgoal",
        default_option_logprobs={"A": -2.0, "B": -0.2},
    )
    kb = KnowledgeBase(embedder_config=fixture_embedder().config)
    config = AgentConfig(max_steps=4, goal_depth_cap=3, fallback_scoring=True)
    result = run_attempt(small_problem(), kb, ScriptedBackend(table), fixture_embedder(), config)
    assert result.outcome == "step_limit"  # still graded a failure
    assert result.predicted_letter == "B"  # but the diagnostic distribution exists


def test_run_attempt_backend_failure_recorded():
    class FailingBackend:
        def call(self, request):
            from cac.errors import BackendError

            raise BackendError("service unreachable", retryable=True, status=503)

    kb = KnowledgeBase(embedder_config=fixture_embedder().config)
    result = run_attempt(small_problem(), kb, FailingBackend(), fixture_embedder())
    assert result.outcome == "backend_failure"
    assert "service unreachable" in result.failure_detail
    assert result.history[-1].flags == ("backend_failure",)


def test_replay_invariance_of_recorded_history():
    # folding apply_action over each recorded (tag, content) from state_before
    # must land exactly on the recorded state_after; the bottom goal never moves
    embedder = fixture_embedder()
    config = fiber_agent_config()
    result = run_attempt(fiber_problem(), fiber_kb(embedder), fiber_backend(), embedder, config)
    for step in result.history:
        state = ModelState(
            goal_stack=step.state_before.goal_stack,
            wm=step.state_before.wm,
            last_retrieved=(
                (step.retrieved.dm_id, step.retrieved.score) if step.retrieved else
                step.state_before.last_retrieved
            ),
        )
        replayed, _, _, _ = apply_action(state, ActionTag(step.chosen_tag), step.content, config)
        assert replayed == step.state_after
        assert replayed.goal_stack[0] == config.g0_text  # bottom-goal immutability


def test_attempt_result_round_trips_via_dicts():
    embedder = fixture_embedder()
    result = run_attempt(
        fiber_problem(), fiber_kb(embedder), fiber_backend(), embedder, fiber_agent_config()
    )
    assert AttemptResult.from_dict(result.to_dict()) == result
