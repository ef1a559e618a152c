"""Shipped deterministic fixtures: the four-step dietary-fiber walkthrough.

A four-memory KB plus a scripted backend that together reproduce the
reference trace used throughout the tests, demos, and the inspector UI
fixture: set a subgoal, consolidate working memory from a retrieved policy
cue, answer the subgoal, answer the top-level goal, then score the options.
Everything here is a pure value; building the fixture twice gives
byte-identical objects.
"""

from __future__ import annotations

import math

from .agent import AgentConfig, Problem
from .backend import ScriptedBackend, ScriptedBackendTable, ScriptedRule
from .embedder import Embedder, EmbedderConfig, ReferenceEmbedder
from .kb import DMDraft, KnowledgeBase, Provenance, append_dms

FIXTURE_CREATED_AT = "2026-01-05T00:00:00Z"

GOAL_TOP = "Solve the problem."
GOAL_SUB = "Identify which option is indigestible plant-based carbohydrate."

WM_CONSOLIDATION = "Cellulose is indigestible plant-based carbohydrate, matching dietary fiber."
SUBGOAL_ANSWER = "Cellulose is indigestible plant-based carbohydrate."
FINAL_ANSWER = "Cellulose is characterized as dietary fiber."

DESC_START_CUE = (
    "If the task is to resolve the question and working memory indicates cellulose is an "
    "indigestible plant carbohydrate, proceed toward resolution."
)
DESC_CONSOLIDATE_CUE = (
    "If the current goal is to identify the dietary-fiber source and working memory mentions "
    "cellulose is indigestible, consolidate and move forward."
)
DESC_FIBER_FACT = "Cellulose is dietary fiber in plants and is not digestible by humans."
DESC_ANSWER_CUE = (
    "If the task is to resolve the question and working memory contains cellulose is "
    "indigestible, answer the multiple-choice question."
)

# Scripted option logprobs: exact logs of the reference final distribution.
FINAL_OPTION_PROBS = {"A": 0.128, "B": 0.845, "C": 0.022, "D": 0.006}

EXPECTED_TAGS = ("G", "R", "A", "A")
EXPECTED_STACKS = (
    (GOAL_TOP,),
    (GOAL_TOP, GOAL_SUB),
    (GOAL_TOP, GOAL_SUB),
    (GOAL_TOP,),
    (GOAL_TOP,),
)
EXPECTED_PREDICTED = "B"


def fiber_problem() -> Problem:
    return Problem(
        id="fiber-mcq-001",
        stem="Which of the following is characterized as dietary fiber?",
        options={"A": "Glycogen", "B": "Cellulose", "C": "Sucrose", "D": "Starch"},
        correct_letter="B",
        kc_tags=("carbohydrate-classification",),
    )


def fixture_embedder() -> ReferenceEmbedder:
    return ReferenceEmbedder(EmbedderConfig())


def fiber_kb(embedder: Embedder | None = None) -> KnowledgeBase:
    """Four memories whose condition texts steer retrieval step by step.

    Apart from the fact itself, the cues differ only in their goal/WM
    conditions: the two top-goal cues tie on an empty WM (earlier id wins,
    so the start cue fires first), the two subgoal entries tie until the
    consolidation line lands in WM, and the answer cue dominates once the
    subgoal has been answered.
    """
    if embedder is None:
        embedder = fixture_embedder()
    provenance = Provenance(author="human", problem_id="fiber-mcq-001", created_at=FIXTURE_CREATED_AT)
    drafts = [
        DMDraft(
            kind="policy_cue",
            description=DESC_START_CUE,
            goal_condition=GOAL_TOP,
            wm_condition="no facts recalled yet",
            provenance=provenance,
        ),
        DMDraft(
            kind="policy_cue",
            description=DESC_CONSOLIDATE_CUE,
            goal_condition=GOAL_SUB,
            wm_condition="the problem is being considered",
            provenance=provenance,
        ),
        DMDraft(
            kind="fact",
            description=DESC_FIBER_FACT,
            goal_condition=GOAL_SUB,
            wm_condition=WM_CONSOLIDATION,
            provenance=provenance,
        ),
        DMDraft(
            kind="policy_cue",
            description=DESC_ANSWER_CUE,
            goal_condition=GOAL_TOP,
            wm_condition=WM_CONSOLIDATION,
            provenance=provenance,
        ),
    ]
    kb = KnowledgeBase(embedder_config=EmbedderConfig())
    return append_dms(kb, drafts, embedder=embedder)


def fiber_backend_table() -> ScriptedBackendTable:
    """Rules keyed on the retrieved description each step injects."""
    g_act = {"G": -0.1, "R": -2.0, "A": -3.0}
    r_act = {"G": -2.5, "R": -0.2, "A": -2.0}
    a_act = {"G": -3.0, "R": -2.0, "A": -0.1}
    option_logprobs = {k: math.log(v) for k, v in FINAL_OPTION_PROBS.items()}
    rules = (
        ScriptedRule(mode="action_logprobs", pattern="proceed toward resolution", logprobs=g_act),
        ScriptedRule(mode="action_logprobs", pattern="consolidate and move forward", logprobs=r_act),
        ScriptedRule(mode="action_logprobs", pattern="not digestible by humans", logprobs=a_act),
        ScriptedRule(mode="action_logprobs", pattern="answer the multiple-choice question", logprobs=a_act),
        ScriptedRule(mode="generate", pattern="proceed toward resolution", text=GOAL_SUB),
        ScriptedRule(mode="generate", pattern="consolidate and move forward", text=WM_CONSOLIDATION),
        ScriptedRule(mode="generate", pattern="not digestible by humans", text=SUBGOAL_ANSWER),
        ScriptedRule(mode="generate", pattern="answer the multiple-choice question", text=FINAL_ANSWER),
        ScriptedRule(mode="option_logprobs", pattern="", logprobs=option_logprobs),
    )
    return ScriptedBackendTable(rules=rules)


def fiber_backend() -> ScriptedBackend:
    return ScriptedBackend(fiber_backend_table())


def fiber_agent_config() -> AgentConfig:
    return AgentConfig(g0_text=GOAL_TOP)
