// Shell: three tabs (browse / run & diff / playground) over the HTTP API.

import { ApiClient, ApiFailure } from "./api.js";
import { AblationMask } from "./mask.js";
import { pollRun } from "./poll.js";
import type { KbPage, Problem } from "./types.js";
import { defaultKbViewState, renderKbView } from "./views/kb.js";
import { renderPlaygroundResults } from "./views/playground.js";
import { renderRunView, runViewData } from "./views/run.js";

declare global {
  interface Window {
    CAC_API_BASE?: string;
  }
}

const api = new ApiClient(window.CAC_API_BASE ?? "");
const mask = new AblationMask();
const kbState = defaultKbViewState();

let kbPage: KbPage | null = null;
let problems: Problem[] = [];
let runInFlight = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string, retry: () => void): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.replaceChildren();
  banner.hidden = false;
  const text = document.createElement("span");
  text.textContent = message;
  const button = document.createElement("button");
  button.textContent = "retry";
  button.addEventListener("click", () => {
    banner.hidden = true;
    retry();
  });
  banner.append(text, button);
}

function clearError(): void {
  el<HTMLDivElement>("error-banner").hidden = true;
}

async function refreshKb(): Promise<void> {
  try {
    kbPage = await api.kbPage(500, 0);
    clearError();
    mask.prune(new Set(kbPage.items.map((dm) => dm.id)));
    renderBrowseTab();
  } catch (error) {
    showError(`knowledge base unreachable: ${String(error)}`, () => void refreshKb());
  }
}

async function refreshProblems(): Promise<void> {
  try {
    problems = (await api.problems()).items;
    const select = el<HTMLSelectElement>("problem-select");
    select.replaceChildren();
    for (const problem of problems) {
      const option = document.createElement("option");
      option.value = problem.id;
      option.textContent = `${problem.id}: ${problem.stem}`;
      select.append(option);
    }
  } catch (error) {
    showError(`problems unreachable: ${String(error)}`, () => void refreshProblems());
  }
}

function renderBrowseTab(): void {
  if (!kbPage) return;
  renderKbView(el("kb-view"), kbPage, mask, kbState, renderBrowseTab);
  el<HTMLSpanElement>("run-mask-summary").textContent =
    mask.size === 0 ? "empty mask (baseline run)" : `${mask.size} memories masked`;
}

async function submitRun(): Promise<void> {
  if (runInFlight || problems.length === 0) return;
  const select = el<HTMLSelectElement>("problem-select");
  const problemId = select.value || problems[0]!.id;
  const target = el("run-view");
  runInFlight = true;
  el<HTMLButtonElement>("run-button").disabled = true;
  target.textContent = "submitting run...";
  try {
    const { run_id } = await api.submitRun(problemId, mask.removedDmIds());
    target.textContent = `run ${run_id} queued; polling...`;
    const status = await pollRun(api, run_id, {
      onTick: (tick) => {
        target.textContent = `run ${run_id}: ${tick.status}`;
      },
    });
    renderRunView(target, runViewData(status));
    clearError();
  } catch (error) {
    if (error instanceof ApiFailure && error.body?.code === "conflict") {
      showError(
        "a compile run holds the knowledge base; re-run once it finishes",
        () => void submitRun(),
      );
    } else if (error instanceof ApiFailure && error.body?.code === "backend_unavailable") {
      showError(`backend profile failed: ${error.body.message}`, () => void submitRun());
    } else {
      showError(String(error), () => void submitRun());
    }
    target.textContent = "run failed";
  } finally {
    runInFlight = false;
    el<HTMLButtonElement>("run-button").disabled = false;
  }
}

async function runPlayground(): Promise<void> {
  const goal = el<HTMLInputElement>("playground-goal").value;
  const wm = el<HTMLTextAreaElement>("playground-wm").value;
  const k = Number(el<HTMLInputElement>("playground-k").value) || 5;
  if (!goal.trim()) {
    showError("the playground needs a goal text", () => undefined);
    return;
  }
  try {
    const response = await api.retrieve(goal, wm, k);
    renderPlaygroundResults(el("playground-results"), response);
    clearError();
  } catch (error) {
    showError(`retrieval failed: ${String(error)}`, () => void runPlayground());
  }
}

function switchTab(name: string): void {
  for (const tab of ["browse", "run", "playground"]) {
    el(`tab-${tab}`).hidden = tab !== name;
    el(`tab-button-${tab}`).classList.toggle("active", tab === name);
  }
}

export function start(): void {
  el("tab-button-browse").addEventListener("click", () => switchTab("browse"));
  el("tab-button-run").addEventListener("click", () => switchTab("run"));
  el("tab-button-playground").addEventListener("click", () => switchTab("playground"));
  el("run-button").addEventListener("click", () => void submitRun());
  el("playground-button").addEventListener("click", () => void runPlayground());
  switchTab("browse");
  void refreshKb();
  void refreshProblems();
}

start();
