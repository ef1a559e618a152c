import { describe, expect, it } from "vitest";

import {
  formatPercentWidth,
  formatProbability,
  formatScore,
  stackArrow,
  verdictLabel,
} from "../../src/format.js";
import { pollRun } from "../../src/poll.js";
import type { ApiClient } from "../../src/api.js";
import type { RunStatus } from "../../src/types.js";

describe("formatters stay traceable to raw API numbers", () => {
  it("scores render at fixed precision", () => {
    expect(formatScore(0.93301270189)).toBe("0.9330");
    expect(formatScore(1)).toBe("1.0000");
  });

  it("probabilities render at three decimals", () => {
    expect(formatProbability(0.845)).toBe("0.845");
    expect(formatProbability(0.0061)).toBe("0.006");
  });

  it("bar widths clamp to [0, 100]%", () => {
    expect(formatPercentWidth(0.845)).toBe("85%");
    expect(formatPercentWidth(-0.2)).toBe("0%");
    expect(formatPercentWidth(1.7)).toBe("100%");
  });

  it("stack and verdict labels", () => {
    expect(stackArrow(["solve", "sub"])).toBe("[2] sub");
    expect(verdictLabel("knowledge_dependent")).toBe("knowledge dependent");
    expect(verdictLabel("anything_else")).toBe("anything_else");
  });
});

describe("pollRun", () => {
  function statuses(...states: RunStatus["status"][]): ApiClient {
    let call = 0;
    return {
      runStatus: async (runId: string): Promise<RunStatus> => ({
        run_id: runId,
        mode: "solve",
        problem_id: "p",
        status: states[Math.min(call++, states.length - 1)]!,
        result: null,
        report: null,
        error: null,
      }),
    } as unknown as ApiClient;
  }

  it("polls with backoff until completion", async () => {
    const waits: number[] = [];
    const status = await pollRun(statuses("queued", "running", "completed"), "r", {
      intervalMs: 100,
      backoffFactor: 2,
      maxIntervalMs: 150,
      sleep: async (ms) => void waits.push(ms),
    });
    expect(status.status).toBe("completed");
    expect(waits).toEqual([100, 150]); // backoff capped
  });

  it("returns failed runs instead of spinning", async () => {
    const status = await pollRun(statuses("failed"), "r", {
      sleep: async () => undefined,
    });
    expect(status.status).toBe("failed");
  });
});
