"""Replay the shipped four-step walkthrough and print it as a step table.

The agent sets a subgoal, consolidates working memory from a retrieved policy
cue, answers the subgoal, answers the top-level goal, and the final option
scoring lands on the correct letter. Every number below is deterministic.
"""

from __future__ import annotations

from cac.agent import run_attempt
from cac.fixtures import (
    fiber_agent_config,
    fiber_backend,
    fiber_kb,
    fiber_problem,
    fixture_embedder,
)

embedder = fixture_embedder()
kb = fiber_kb(embedder)
problem = fiber_problem()

print("PROBLEM:", problem.stem)
for letter, text in problem.options.items():
    marker = " (correct)" if letter == problem.correct_letter else ""
    print(f"  {letter}. {text}{marker}")

print()
print("KNOWLEDGE BASE:")
for dm in kb.dms:
    print(f"  [{dm.id}] ({dm.kind}) {dm.description[:70]}")

result = run_attempt(problem, kb, fiber_backend(), embedder, fiber_agent_config())

print()
print(f"{'step':>4}  {'tag':^3}  {'stack':^14}  retrieved / content")
for step in result.history:
    before = len(step.state_before.goal_stack)
    after = len(step.state_after.goal_stack)
    stack = f"[{before}] -> [{after}]"
    print(f"{step.index:>4}  {step.chosen_tag:^3}  {stack:^14}  "
          f"retrieved {step.retrieved.dm_id}")
    print(f"{'':>27}{step.content}")

print()
print("final distribution:",
      {letter: round(p, 3) for letter, p in result.option_distribution.items()})
print("predicted:", result.predicted_letter, "->", result.outcome)
