// @vitest-environment jsdom
//
// End-to-end against a live served fixture: starts `cac serve` on the
// shipped walkthrough fixture, then drives the browser flow — toggle one
// memory into the mask, submit the run, poll, render the diff — and checks
// every rendered figure against the API fields it must come from.

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../../src/api.js";
import { buildTraceDiff } from "../../src/diff.js";
import { formatProbability, formatScore } from "../../src/format.js";
import { AblationMask, type StorageLike } from "../../src/mask.js";
import { pollRun } from "../../src/poll.js";
import { renderRunView, runViewData } from "../../src/views/run.js";
import { renderPlaygroundResults } from "../../src/views/playground.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const FIXTURE_DIR = resolve(HERE, "../../../corpus/ui_fixture");
const PROBLEM_ID = "fiber-mcq-001";
// Pinned from the analysis harness: ablating the load-bearing fact memory
// (seq 2) first changes the trace at step 2, where the base run retrieved it.
const EXPECTED_DIVERGENCE = 2;

function memoryStorage(): StorageLike {
  const data = new Map<string, string>();
  return {
    getItem: (key) => data.get(key) ?? null,
    setItem: (key, value) => void data.set(key, value),
    removeItem: (key) => void data.delete(key),
  };
}

let server: ChildProcess;
let api: ApiClient;
let runsDir: string;

async function waitForService(base: string, timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${base}/api/kb`);
      if (response.ok) return;
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 200));
  }
  throw new Error(`service never came up at ${base}: ${String(lastError)}`);
}

beforeAll(async () => {
  const port = 8300 + Math.floor(Math.random() * 500);
  runsDir = mkdtempSync(join(tmpdir(), "cac-e2e-runs-"));
  server = spawn(
    "python3",
    ["-m", "cac.cli", "serve", "--config", join(FIXTURE_DIR, "cac.toml"), "--base-dir", FIXTURE_DIR],
    {
      env: {
        ...process.env,
        CAC_SERVICE_PORT: String(port),
        CAC_SERVICE_RUNS_DIR: runsDir,
      },
      stdio: ["ignore", "pipe", "pipe"],
    },
  );
  server.stderr?.on("data", () => undefined); // uvicorn logs; keep the pipe drained
  server.stdout?.on("data", () => undefined);
  api = new ApiClient(`http://127.0.0.1:${port}`);
  await waitForService(api.base);
});

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(runsDir, { recursive: true, force: true });
});

describe("served fixture end to end", () => {
  it("toggle one memory -> run -> diff renders the dependence verdict", async () => {
    // browse: the fixture KB has the four walkthrough memories
    const page = await api.kbPage();
    expect(page.total).toBe(4);
    const fact = page.items.find((dm) => dm.kind === "fact")!;
    expect(fact.seq).toBe(2);

    // toggle exactly one row into the mask
    const mask = new AblationMask(memoryStorage());
    mask.toggle(fact.id);
    expect(mask.removedDmIds()).toEqual([fact.id]);

    // run and poll (fast scripted backend; no backoff needed)
    const { run_id } = await api.submitRun(PROBLEM_ID, mask.removedDmIds());
    const status = await pollRun(api, run_id, { intervalMs: 100, timeoutMs: 60000 });
    expect(status.status).toBe("completed");
    expect(status.report).not.toBeNull();
    expect(status.report!.verdict).toBe("knowledge_dependent");

    // render the diff view and check the verdict chip + divergence highlight
    document.body.innerHTML = "<div id='host'></div>";
    const host = document.getElementById("host")!;
    const data = runViewData(status);
    renderRunView(host, data);
    expect(host.querySelector("[data-testid='verdict-chip']")!.textContent).toBe(
      "knowledge dependent",
    );
    expect(data.diff!.divergenceIndex).toBe(EXPECTED_DIVERGENCE);
    const highlighted = host.querySelector("tr.divergence")!;
    expect(highlighted.getAttribute("data-step")).toBe(String(EXPECTED_DIVERGENCE));

    // the divergence index recomputed from the persisted traces API agrees
    const baseTrace = await api.trace(run_id, PROBLEM_ID, "base");
    const ablatedTrace = await api.trace(run_id, PROBLEM_ID, "ablated");
    expect(buildTraceDiff(baseTrace, ablatedTrace).divergenceIndex).toBe(EXPECTED_DIVERGENCE);

    // every rendered probability equals the corresponding API field
    for (const [letter, value] of Object.entries(
      status.report!.base_result.option_distribution!,
    )) {
      expect(host.querySelector(`[data-prob='base:${letter}']`)!.textContent).toBe(
        formatProbability(value),
      );
    }
    expect(status.report!.base_result.predicted_letter).toBe("B");
  });

  it("empty mask run equals the baseline attempt end to end", async () => {
    const { run_id } = await api.submitRun(PROBLEM_ID, []);
    const status = await pollRun(api, run_id, { intervalMs: 100, timeoutMs: 60000 });
    expect(status.status).toBe("completed");
    expect(status.mode).toBe("solve");
    expect(status.result!.outcome).toBe("correct");
    expect(status.result!.history.map((step) => step.chosen_tag)).toEqual(
      ["G", "R", "A", "A"],
    );
    document.body.innerHTML = "<div id='host'></div>";
    const host = document.getElementById("host")!;
    renderRunView(host, runViewData(status));
    expect(host.querySelector("[data-testid='diff-summary']")!.textContent).toBe(
      "traces identical: 0 changed steps",
    );
  });

  it("playground scores render exactly the API's retrieval fields", async () => {
    const response = await api.retrieve("Solve the problem.", "", 3);
    expect(response.items.length).toBe(3);
    document.body.innerHTML = "<div id='host'></div>";
    const host = document.getElementById("host")!;
    renderPlaygroundResults(host, response);
    for (const item of response.items) {
      expect(host.querySelector(`[data-score='${item.dm_id}']`)!.textContent).toBe(
        formatScore(item.score),
      );
      expect(host.querySelector(`[data-goal-term='${item.dm_id}']`)!.textContent).toBe(
        formatScore(item.goal_term),
      );
      expect(host.querySelector(`[data-wm-term='${item.dm_id}']`)!.textContent).toBe(
        formatScore(item.wm_term),
      );
    }
    // the top hit is the start cue retrieved at step 0 of the walkthrough
    expect(response.items[0]!.rank).toBe(1);
  });
});
