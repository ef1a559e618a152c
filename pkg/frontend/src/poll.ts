// Run polling: 1 s interval with multiplicative backoff, capped.

import type { ApiClient } from "./api.js";
import type { RunStatus } from "./types.js";

export type PollOptions = {
  intervalMs?: number;
  backoffFactor?: number;
  maxIntervalMs?: number;
  timeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onTick?: (status: RunStatus) => void;
};

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function pollRun(
  api: ApiClient,
  runId: string,
  options: PollOptions = {},
): Promise<RunStatus> {
  const {
    intervalMs = 1000,
    backoffFactor = 1.5,
    maxIntervalMs = 8000,
    timeoutMs = 120000,
    sleep = defaultSleep,
    onTick,
  } = options;
  const started = Date.now();
  let wait = intervalMs;
  for (;;) {
    const status = await api.runStatus(runId);
    onTick?.(status);
    if (status.status === "completed" || status.status === "failed") {
      return status;
    }
    if (Date.now() - started > timeoutMs) {
      throw new Error(`run ${runId} still ${status.status} after ${timeoutMs}ms`);
    }
    await sleep(wait);
    wait = Math.min(wait * backoffFactor, maxIntervalMs);
  }
}
