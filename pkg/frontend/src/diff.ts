// Side-by-side trace comparison. Steps align by index (deterministic, keeps
// the divergence-index semantics obvious); the divergence index is the first
// step where any change flag is set, or null when the traces agree.

import type { AttemptJson, StepJson } from "./types.js";

export type StepChangeFlags = {
  retrievalChanged: boolean;
  actionChanged: boolean;
  goalStackDiverged: boolean;
  missingSide: boolean;
};

export type DiffRow = {
  index: number;
  base: StepJson | null;
  ablated: StepJson | null;
  flags: StepChangeFlags;
  changed: boolean;
};

export type TraceDiffView = {
  rows: DiffRow[];
  divergenceIndex: number | null;
  baseOutcome: string;
  ablatedOutcome: string;
};

function sameStacks(a: string[], b: string[]): boolean {
  return a.length === b.length && a.every((goal, i) => goal === b[i]);
}

function flagsFor(base: StepJson | null, ablated: StepJson | null): StepChangeFlags {
  if (base === null || ablated === null) {
    return {
      retrievalChanged: true,
      actionChanged: true,
      goalStackDiverged: true,
      missingSide: true,
    };
  }
  return {
    retrievalChanged: (base.retrieved?.dm_id ?? null) !== (ablated.retrieved?.dm_id ?? null),
    actionChanged: base.chosen_tag !== ablated.chosen_tag,
    goalStackDiverged: !sameStacks(base.state_after.goal_stack, ablated.state_after.goal_stack),
    missingSide: false,
  };
}

export function buildTraceDiff(base: AttemptJson, ablated: AttemptJson): TraceDiffView {
  const length = Math.max(base.history.length, ablated.history.length);
  const rows: DiffRow[] = [];
  let divergenceIndex: number | null = null;
  for (let i = 0; i < length; i++) {
    const baseStep = base.history[i] ?? null;
    const ablatedStep = ablated.history[i] ?? null;
    const flags = flagsFor(baseStep, ablatedStep);
    const changed =
      flags.retrievalChanged || flags.actionChanged || flags.goalStackDiverged;
    if (changed && divergenceIndex === null) {
      divergenceIndex = i;
    }
    rows.push({ index: i, base: baseStep, ablated: ablatedStep, flags, changed });
  }
  return {
    rows,
    divergenceIndex,
    baseOutcome: base.outcome,
    ablatedOutcome: ablated.outcome,
  };
}

export function changedStepCount(view: TraceDiffView): number {
  return view.rows.filter((row) => row.changed).length;
}
