// API payload shapes, mirroring docs/formats.md. The UI never computes
// scores or verdicts itself; these fields are the single source of truth.

export type Provenance = {
  author: string;
  problem_id: string | null;
  compile_iteration: number | null;
  created_at: string;
};

export type DmItem = {
  id: string;
  seq: number;
  kind: string;
  description: string;
  goal_condition: string;
  wm_condition: string;
  provenance: Provenance;
};

export type KbPage = {
  items: DmItem[];
  total: number;
  revision: number;
};

export type Problem = {
  id: string;
  stem: string;
  options: Record<string, string>;
  correct_letter: string;
  kc_tags: string[];
};

export type RetrieveItem = {
  rank: number;
  dm_id: string;
  score: number;
  goal_term: number;
  wm_term: number;
  kind: string;
  description: string;
  goal_condition: string;
  wm_condition: string;
};

export type RetrieveResponse = {
  items: RetrieveItem[];
  revision: number;
};

export type ModelStateJson = {
  goal_stack: string[];
  wm: string[];
  last_retrieved: [string, number] | null;
};

export type RetrievedJson = {
  dm_id: string;
  score: number;
  description: string;
};

export type StepJson = {
  index: number;
  state_before: ModelStateJson;
  retrieved: RetrievedJson | null;
  action_logprobs: Record<string, number>;
  chosen_tag: string;
  content: string;
  state_after: ModelStateJson;
  flags: string[];
  wm_evicted: string[];
  timing_ms: number;
};

export type AttemptJson = {
  problem_id: string;
  history: StepJson[];
  outcome: string;
  final_answer_text: string | null;
  option_distribution: Record<string, number> | null;
  predicted_letter: string | null;
  failure_detail: string | null;
};

export type AblationReportJson = {
  problem_id: string;
  base_outcome: string;
  removed_ids: string[];
  ablated_outcome: string;
  verdict: string;
  base_trace_ref: string | null;
  ablated_trace_ref: string | null;
  base_result: AttemptJson;
  ablated_result: AttemptJson;
};

export type RunStatus = {
  run_id: string;
  mode: string;
  problem_id: string;
  status: "queued" | "running" | "completed" | "failed";
  result: AttemptJson | null;
  report: AblationReportJson | null;
  error: string | null;
};

export type ApiErrorBody = {
  code: "not_found" | "validation" | "conflict" | "backend_unavailable";
  message: string;
  detail: Record<string, unknown>;
};
