// Retrieval playground: probe the knowledge base with a hypothetical goal
// and working-memory state, exactly as the teacher's preview tool does.

import { formatScore } from "../format.js";
import type { RetrieveResponse } from "../types.js";

export function renderPlaygroundResults(container: HTMLElement, response: RetrieveResponse): void {
  container.replaceChildren();
  if (response.items.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.setAttribute("data-testid", "playground-empty");
    empty.textContent = "no memories retrieved (the knowledge base may be empty)";
    return void container.append(empty);
  }
  const table = document.createElement("table");
  table.className = "playground-table";
  const head = table.createTHead().insertRow();
  for (const label of ["rank", "score", "goal term", "wm term", "kind", "description"]) {
    const th = document.createElement("th");
    th.textContent = label;
    head.append(th);
  }
  const body = table.createTBody();
  for (const item of response.items) {
    const row = body.insertRow();
    row.setAttribute("data-dm-id", item.dm_id);
    row.insertCell().textContent = String(item.rank);
    const score = row.insertCell();
    score.setAttribute("data-score", item.dm_id);
    score.textContent = formatScore(item.score);
    const goalTerm = row.insertCell();
    goalTerm.setAttribute("data-goal-term", item.dm_id);
    goalTerm.textContent = formatScore(item.goal_term);
    const wmTerm = row.insertCell();
    wmTerm.setAttribute("data-wm-term", item.dm_id);
    wmTerm.textContent = formatScore(item.wm_term);
    row.insertCell().textContent = item.kind;
    row.insertCell().textContent = item.description;
  }
  container.append(table);
}
