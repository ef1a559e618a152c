// The knowledge-base browser: a sortable, filterable table of memories with
// per-row toggles feeding the ablation mask.

import type { AblationMask } from "../mask.js";
import type { DmItem, KbPage } from "../types.js";

export type SortKey = "seq" | "kind" | "description" | "goal_condition" | "wm_condition" | "origin";

export type KbViewState = {
  filter: string;
  sortKey: SortKey;
  sortAsc: boolean;
};

export function defaultKbViewState(): KbViewState {
  return { filter: "", sortKey: "seq", sortAsc: true };
}

function origin(dm: DmItem): string {
  return dm.provenance.problem_id ?? dm.provenance.author;
}

function sortValue(dm: DmItem, key: SortKey): string | number {
  if (key === "seq") return dm.seq;
  if (key === "origin") return origin(dm);
  return dm[key];
}

/** Case-insensitive filter across every text field of the loaded page. */
export function visibleRows(page: KbPage, state: KbViewState): DmItem[] {
  const needle = state.filter.trim().toLowerCase();
  let rows = page.items;
  if (needle) {
    rows = rows.filter((dm) =>
      [dm.id, dm.kind, dm.description, dm.goal_condition, dm.wm_condition, origin(dm)]
        .join("\n")
        .toLowerCase()
        .includes(needle),
    );
  }
  const sorted = [...rows].sort((a, b) => {
    const va = sortValue(a, state.sortKey);
    const vb = sortValue(b, state.sortKey);
    const primary = va < vb ? -1 : va > vb ? 1 : 0;
    const directed = state.sortAsc ? primary : -primary;
    return directed !== 0 ? directed : a.seq - b.seq; // ties stay in append order
  });
  return sorted;
}

const HEADERS: [SortKey, string][] = [
  ["seq", "#"],
  ["kind", "kind"],
  ["description", "description"],
  ["goal_condition", "goal condition"],
  ["wm_condition", "wm condition"],
  ["origin", "origin"],
];

export function renderKbView(
  container: HTMLElement,
  page: KbPage,
  mask: AblationMask,
  state: KbViewState,
  onChange: () => void,
): void {
  container.replaceChildren();

  const toolbar = document.createElement("div");
  toolbar.className = "toolbar";
  const search = document.createElement("input");
  search.type = "search";
  search.placeholder = "filter memories";
  search.value = state.filter;
  search.setAttribute("data-testid", "kb-filter");
  search.addEventListener("input", () => {
    state.filter = search.value;
    onChange();
  });
  toolbar.append(search);

  const badge = document.createElement("span");
  badge.className = "mask-badge";
  badge.setAttribute("data-testid", "mask-badge");
  badge.textContent = `${mask.size} masked`;
  toolbar.append(badge);

  const clear = document.createElement("button");
  clear.textContent = "clear mask";
  clear.addEventListener("click", () => {
    mask.clear();
    onChange();
  });
  toolbar.append(clear);

  const meta = document.createElement("span");
  meta.className = "kb-meta";
  meta.textContent = `revision ${page.revision}, ${page.total} declarative memories`;
  toolbar.append(meta);
  container.append(toolbar);

  if (page.total === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.setAttribute("data-testid", "kb-empty");
    empty.textContent = "0 declarative memories";
    container.append(empty);
    return;
  }

  const table = document.createElement("table");
  table.className = "kb-table";
  const head = table.createTHead().insertRow();
  const maskHeader = document.createElement("th");
  maskHeader.textContent = "mask";
  head.append(maskHeader);
  for (const [key, label] of HEADERS) {
    const th = document.createElement("th");
    th.textContent = state.sortKey === key ? `${label} ${state.sortAsc ? "^" : "v"}` : label;
    th.className = "sortable";
    th.addEventListener("click", () => {
      if (state.sortKey === key) {
        state.sortAsc = !state.sortAsc;
      } else {
        state.sortKey = key;
        state.sortAsc = true;
      }
      onChange();
    });
    head.append(th);
  }

  const body = table.createTBody();
  for (const dm of visibleRows(page, state)) {
    const row = body.insertRow();
    row.setAttribute("data-dm-id", dm.id);
    if (mask.has(dm.id)) row.classList.add("masked");

    const toggleCell = row.insertCell();
    const toggle = document.createElement("input");
    toggle.type = "checkbox";
    toggle.checked = mask.has(dm.id);
    toggle.setAttribute("data-testid", `mask-toggle-${dm.seq}`);
    toggle.addEventListener("change", () => {
      mask.toggle(dm.id);
      onChange();
    });
    toggleCell.append(toggle);

    const cells = [
      String(dm.seq),
      dm.kind,
      dm.description,
      dm.goal_condition,
      dm.wm_condition,
      origin(dm),
    ];
    for (const text of cells) {
      const cell = row.insertCell();
      cell.textContent = text;
    }
  }
  container.append(table);
}
