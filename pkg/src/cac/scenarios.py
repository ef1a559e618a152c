"""Synthetic scripted scenarios for demos, fixtures, and end-to-end checks.

The *gated* scenario family makes knowledge dependence literal: the agent
sets a problem-specific subgoal, retrieval under that subgoal surfaces (or
misses) the problem's single "gate" memory, and option scoring favors the
correct letter only when the gate's text made it into the prompt. A teacher
script can be configured to waste iterations on filler before teaching the
gate, which gives exact, hand-countable compilation statistics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .agent import Problem
from .backend import ScriptedBackend, ScriptedBackendTable, ScriptedRule
from .harness import FanProbeConfig
from .teacher import ScriptedTeacher, ToolCall

CORRECT_LOGPROBS = {"A": -3.0, "B": -0.05, "C": -4.0}
WRONG_LOGPROBS = {"A": -0.05, "B": -3.0, "C": -4.0}


@dataclass(frozen=True)
class GatedProblemSpec:
    problem: Problem
    gate_description: str | None  # None: solvable without any taught knowledge
    junk_before_gate: int = 0  # teacher iterations wasted on filler first


def gated_problem(pid: str, stem: str) -> Problem:
    return Problem(
        id=pid,
        stem=stem,
        options={"A": "evaporation", "B": "photosynthesis", "C": "combustion"},
        correct_letter="B",
    )


def subgoal_text(problem: Problem) -> str:
    return f"Work out: {problem.stem}"


def gate_draft(problem: Problem, description: str) -> dict:
    return {
        "kind": "fact",
        "description": description,
        "goal_condition": subgoal_text(problem),
        "wm_condition": "general reasoning context",
    }


def junk_draft(n: int) -> dict:
    return {
        "kind": "fact",
        "description": f"Unrelated filler knowledge item {n}.",
        "goal_condition": f"sort the list variant {n}",
        "wm_condition": f"irrelevant clutter {n}",
    }


def _all_of(*parts: str) -> str:
    return "(?s)" + "".join(f"(?=.*{re.escape(part)})" for part in parts)


def gated_backend_table(specs: list[GatedProblemSpec]) -> ScriptedBackendTable:
    """Action plan per attempt: G (subgoal), A (apply retrieved gate), A (final)."""
    rules: list[ScriptedRule] = [
        # the subgoal has been answered -> answer the top goal
        ScriptedRule(
            mode="action_logprobs", pattern="Answered '",
            logprobs={"G": -4.0, "R": -4.0, "A": -0.1},
        ),
        # top-level goal current, nothing answered yet -> set the subgoal
        ScriptedRule(
            mode="action_logprobs", pattern="Solve the problem.  <- CURRENT",
            logprobs={"G": -0.1, "R": -4.0, "A": -4.0},
        ),
    ]
    for spec in specs:
        rules.append(
            ScriptedRule(
                mode="generate",
                pattern=_all_of(spec.problem.stem, "State the single subgoal"),
                text=subgoal_text(spec.problem),
                is_regex=True,
            )
        )
        if spec.gate_description is not None:
            rules.append(
                ScriptedRule(
                    mode="generate",
                    pattern=_all_of(spec.gate_description, "State the answer"),
                    text=f"Using: {spec.gate_description}",
                    is_regex=True,
                )
            )
            rules.append(
                ScriptedRule(
                    mode="option_logprobs",
                    pattern=_all_of(spec.problem.stem, spec.gate_description),
                    logprobs=dict(CORRECT_LOGPROBS),
                    is_regex=True,
                )
            )
    for spec in specs:
        logprobs = WRONG_LOGPROBS if spec.gate_description is not None else CORRECT_LOGPROBS
        rules.append(
            ScriptedRule(mode="option_logprobs", pattern=spec.problem.stem, logprobs=dict(logprobs))
        )
    return ScriptedBackendTable(
        rules=tuple(rules),
        default_action_logprobs={"G": -4.0, "R": -4.0, "A": -0.1},
        default_text="No decisive knowledge retrieved.",
    )


def gated_teacher_script(specs: list[GatedProblemSpec]) -> dict[str, list[list[ToolCall]]]:
    script: dict[str, list[list[ToolCall]]] = {}
    for spec in specs:
        turns: list[list[ToolCall]] = []
        for j in range(spec.junk_before_gate):
            turns.append([ToolCall(kind="submit_dms", args={"drafts": [junk_draft(j + 1)]})])
        if spec.gate_description is not None:
            turns.append(
                [ToolCall(
                    kind="submit_dms",
                    args={"drafts": [gate_draft(spec.problem, spec.gate_description)]},
                )]
            )
        script[spec.problem.id] = turns
    return script


def build_gated_scenario(specs: list[GatedProblemSpec]) -> tuple[ScriptedBackend, ScriptedTeacher]:
    return ScriptedBackend(gated_backend_table(specs)), ScriptedTeacher(gated_teacher_script(specs))


# ---------------------------------------------------------------------------
# Fan-probe recipes.

def full_overlap_probe(n_max: int, n_step: int) -> FanProbeConfig:
    """Every distractor carries all query cue tokens (plus one junk token on
    the goal side), so each one outscores the partially-matching target."""
    return FanProbeConfig(
        query_goal="classify the polymer sample",
        query_wm="the sample dissolves in water",
        target_description="Target knowledge for polymer classification.",
        target_goal_condition="classify the polymer",
        target_wm_condition="the sample dissolves in water",
        distractor_goal_template="classify the polymer sample extra{i}",
        distractor_wm_template="the sample dissolves in water",
        n_max=n_max,
        n_step=n_step,
    )


def zero_overlap_probe(n_max: int, n_step: int) -> FanProbeConfig:
    """Distractor tokens are screened to miss every query hash bucket, so
    their scores against the query are exactly zero."""
    return FanProbeConfig(
        query_goal="classify the polymer sample",
        query_wm="the sample dissolves in water",
        target_description="Exact-match target memory.",
        target_goal_condition="classify the polymer sample",
        target_wm_condition="the sample dissolves in water",
        distractor_goal_template="zebra{i} quill{i} ochre{i}",
        distractor_wm_template="umber{i} violet{i}",
        n_max=n_max,
        n_step=n_step,
        avoid_query_collisions=True,
    )
