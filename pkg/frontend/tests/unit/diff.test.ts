import { describe, expect, it } from "vitest";

import { buildTraceDiff, changedStepCount } from "../../src/diff.js";
import type { AttemptJson, StepJson } from "../../src/types.js";

function step(
  index: number,
  tag: string,
  retrievedId: string | null,
  stackAfter: string[],
): StepJson {
  return {
    index,
    state_before: { goal_stack: ["g0"], wm: [], last_retrieved: null },
    retrieved: retrievedId ? { dm_id: retrievedId, score: 0.5, description: "d" } : null,
    action_logprobs: { G: -1, R: -1, A: -1 },
    chosen_tag: tag,
    content: `content ${index}`,
    state_after: { goal_stack: stackAfter, wm: [], last_retrieved: null },
    flags: [],
    wm_evicted: [],
    timing_ms: 0,
  };
}

function attempt(history: StepJson[], outcome = "correct"): AttemptJson {
  return {
    problem_id: "p",
    history,
    outcome,
    final_answer_text: null,
    option_distribution: null,
    predicted_letter: null,
    failure_detail: null,
  };
}

const BASE = attempt([
  step(0, "G", "dm-0", ["g0", "g1"]),
  step(1, "R", "dm-1", ["g0", "g1"]),
  step(2, "A", "dm-2", ["g0"]),
  step(3, "A", "dm-3", ["g0"]),
]);

describe("buildTraceDiff", () => {
  it("identical traces have no divergence and zero changed steps", () => {
    const view = buildTraceDiff(BASE, BASE);
    expect(view.divergenceIndex).toBeNull();
    expect(changedStepCount(view)).toBe(0);
    expect(view.rows).toHaveLength(4);
  });

  it("a retrieval change marks the row and sets the divergence index", () => {
    const ablated = attempt([
      step(0, "G", "dm-0", ["g0", "g1"]),
      step(1, "R", "dm-1", ["g0", "g1"]),
      step(2, "A", "dm-9", ["g0"]),
      step(3, "A", "dm-3", ["g0"]),
    ]);
    const view = buildTraceDiff(BASE, ablated);
    expect(view.divergenceIndex).toBe(2);
    expect(view.rows[2]!.flags.retrievalChanged).toBe(true);
    expect(view.rows[2]!.flags.actionChanged).toBe(false);
    expect(view.rows[0]!.changed).toBe(false);
  });

  it("an action change and a stack divergence are flagged independently", () => {
    const ablated = attempt([
      step(0, "G", "dm-0", ["g0", "g1"]),
      step(1, "A", "dm-1", ["g0", "g1", "g2"]),
      step(2, "A", "dm-2", ["g0"]),
      step(3, "A", "dm-3", ["g0"]),
    ]);
    const view = buildTraceDiff(BASE, ablated);
    expect(view.divergenceIndex).toBe(1);
    expect(view.rows[1]!.flags.actionChanged).toBe(true);
    expect(view.rows[1]!.flags.goalStackDiverged).toBe(true);
    expect(view.rows[1]!.flags.retrievalChanged).toBe(false);
  });

  it("retrieved none vs something counts as a retrieval change", () => {
    const ablated = attempt([
      step(0, "G", null, ["g0", "g1"]),
      step(1, "R", "dm-1", ["g0", "g1"]),
      step(2, "A", "dm-2", ["g0"]),
      step(3, "A", "dm-3", ["g0"]),
    ]);
    expect(buildTraceDiff(BASE, ablated).divergenceIndex).toBe(0);
  });

  it("length mismatch pads with missing-side rows that count as changed", () => {
    const ablated = attempt(BASE.history.slice(0, 2), "step_limit");
    const view = buildTraceDiff(BASE, ablated);
    expect(view.rows).toHaveLength(4);
    expect(view.rows[2]!.flags.missingSide).toBe(true);
    expect(view.divergenceIndex).toBe(2);
    expect(view.baseOutcome).toBe("correct");
    expect(view.ablatedOutcome).toBe("step_limit");
  });
});
