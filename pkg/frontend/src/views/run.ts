// Run & diff: submit the current mask against a problem, poll, and render
// the two traces side by side with the divergence step highlighted.

import { buildTraceDiff, changedStepCount, type TraceDiffView } from "../diff.js";
import {
  formatPercentWidth,
  formatProbability,
  formatScore,
  verdictLabel,
} from "../format.js";
import type { AttemptJson, RunStatus, StepJson } from "../types.js";

export type RunViewData = {
  status: RunStatus;
  diff: TraceDiffView | null; // null for plain solves (empty mask)
};

/** Assemble the view data from a completed run: ablate runs diff base vs
 * ablated; empty-mask solves diff the single trace against itself. */
export function runViewData(status: RunStatus): RunViewData {
  if (status.report) {
    return {
      status,
      diff: buildTraceDiff(status.report.base_result, status.report.ablated_result),
    };
  }
  if (status.result) {
    return { status, diff: buildTraceDiff(status.result, status.result) };
  }
  return { status, diff: null };
}

function stepSummary(step: StepJson | null): string {
  if (!step) return "-";
  const retrieved = step.retrieved ? step.retrieved.dm_id : "none";
  return `<${step.chosen_tag}> retrieved ${retrieved}`;
}

function distributionTable(title: string, attempt: AttemptJson | null): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "distribution";
  const heading = document.createElement("h4");
  heading.textContent = title;
  wrap.append(heading);
  if (!attempt || !attempt.option_distribution) {
    const none = document.createElement("p");
    none.textContent = `no distribution (outcome: ${attempt ? attempt.outcome : "missing"})`;
    wrap.append(none);
    return wrap;
  }
  const table = document.createElement("table");
  for (const [letter, probability] of Object.entries(attempt.option_distribution)) {
    const row = table.insertRow();
    row.insertCell().textContent = letter;
    const valueCell = row.insertCell();
    valueCell.setAttribute("data-prob", `${title}:${letter}`);
    valueCell.textContent = formatProbability(probability);
    const barCell = row.insertCell();
    const bar = document.createElement("div");
    bar.className = "bar";
    bar.style.width = formatPercentWidth(probability);
    if (letter === attempt.predicted_letter) bar.classList.add("predicted");
    barCell.append(bar);
  }
  wrap.append(table);
  return wrap;
}

export function renderRunView(container: HTMLElement, data: RunViewData): void {
  container.replaceChildren();
  const { status, diff } = data;

  const header = document.createElement("div");
  header.className = "run-header";
  const title = document.createElement("h3");
  title.textContent = `${status.mode} run ${status.run_id} (${status.problem_id}): ${status.status}`;
  header.append(title);

  if (status.error) {
    const banner = document.createElement("p");
    banner.className = "error-banner";
    banner.setAttribute("data-testid", "run-error");
    banner.textContent = status.error;
    header.append(banner);
  }

  if (status.report) {
    const chip = document.createElement("span");
    chip.className = `verdict-chip ${status.report.verdict}`;
    chip.setAttribute("data-testid", "verdict-chip");
    chip.textContent = verdictLabel(status.report.verdict);
    header.append(chip);
    const outcomes = document.createElement("p");
    outcomes.textContent =
      `base: ${status.report.base_outcome}, ablated: ${status.report.ablated_outcome}, ` +
      `removed ${status.report.removed_ids.length} memor${status.report.removed_ids.length === 1 ? "y" : "ies"}`;
    header.append(outcomes);
  }
  container.append(header);

  if (!diff) return;

  const summary = document.createElement("p");
  summary.setAttribute("data-testid", "diff-summary");
  summary.textContent =
    diff.divergenceIndex === null
      ? `traces identical: ${changedStepCount(diff)} changed steps`
      : `diverges at step ${diff.divergenceIndex} (${changedStepCount(diff)} changed steps)`;
  container.append(summary);

  const table = document.createElement("table");
  table.className = "diff-table";
  const head = table.createTHead().insertRow();
  for (const label of ["step", "base", "ablated", "changes"]) {
    const th = document.createElement("th");
    th.textContent = label;
    head.append(th);
  }
  const body = table.createTBody();
  for (const row of diff.rows) {
    const tr = body.insertRow();
    tr.setAttribute("data-step", String(row.index));
    if (row.changed) tr.classList.add("changed");
    if (row.index === diff.divergenceIndex) tr.classList.add("divergence");
    tr.insertCell().textContent = String(row.index);
    tr.insertCell().textContent = stepSummary(row.base);
    tr.insertCell().textContent = stepSummary(row.ablated);
    const flags: string[] = [];
    if (row.flags.missingSide) flags.push("length");
    else {
      if (row.flags.retrievalChanged) flags.push("retrieval");
      if (row.flags.actionChanged) flags.push("action");
      if (row.flags.goalStackDiverged) flags.push("goal-stack");
    }
    tr.insertCell().textContent = flags.join(", ") || "-";
  }
  container.append(table);

  const distributions = document.createElement("div");
  distributions.className = "distributions";
  const base = status.report ? status.report.base_result : status.result;
  const ablated = status.report ? status.report.ablated_result : status.result;
  distributions.append(distributionTable("base", base));
  distributions.append(distributionTable("ablated", ablated));
  container.append(distributions);
}

export { formatScore };
