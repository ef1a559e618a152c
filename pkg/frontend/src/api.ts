// Thin typed client over the documented HTTP API.

import type {
  ApiErrorBody,
  AttemptJson,
  KbPage,
  Problem,
  RetrieveResponse,
  RunStatus,
} from "./types.js";

export class ApiFailure extends Error {
  readonly status: number;
  readonly body: ApiErrorBody | null;

  constructor(status: number, body: ApiErrorBody | null) {
    super(body ? `${body.code}: ${body.message}` : `HTTP ${status}`);
    this.status = status;
    this.body = body;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(base = "", fetchImpl: FetchLike = (...args) => fetch(...args)) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) {
      let body: ApiErrorBody | null = null;
      try {
        body = (await response.json()) as ApiErrorBody;
      } catch {
        body = null;
      }
      throw new ApiFailure(response.status, body);
    }
    return (await response.json()) as T;
  }

  kbPage(limit = 200, offset = 0): Promise<KbPage> {
    return this.request<KbPage>(`/api/kb?limit=${limit}&offset=${offset}`);
  }

  problems(): Promise<{ items: Problem[] }> {
    return this.request<{ items: Problem[] }>("/api/problems");
  }

  retrieve(goal: string, wm: string, k: number): Promise<RetrieveResponse> {
    const params = new URLSearchParams({ goal, wm, k: String(k) });
    return this.request<RetrieveResponse>(`/api/retrieve?${params.toString()}`);
  }

  submitRun(problemId: string, removedDmIds: string[]): Promise<{ run_id: string }> {
    return this.request<{ run_id: string }>("/api/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ problem_id: problemId, removed_dm_ids: removedDmIds }),
    });
  }

  runStatus(runId: string): Promise<RunStatus> {
    return this.request<RunStatus>(`/api/runs/${encodeURIComponent(runId)}`);
  }

  trace(runId: string, problemId: string, variant?: string): Promise<AttemptJson> {
    const suffix = variant ? `?variant=${encodeURIComponent(variant)}` : "";
    return this.request<AttemptJson>(
      `/api/traces/${encodeURIComponent(runId)}/${encodeURIComponent(problemId)}${suffix}`,
    );
  }
}
