/**
 * Typed client for the assistant's HTTP endpoints.
 *
 * The UI talks to the service exclusively through this module; every shape
 * here mirrors the wire format emitted by the job service.
 */

export type Verdict = "accepted" | "rejected" | "edited";

export type Pair = [string, string]; // [relation, attribute]

export interface JobSummary {
  id: string;
  kind: string;
  state: string;
  created_ts: number;
  finished_ts: number | null;
  error: string | null;
}

export interface Replacement {
  source: Pair;
  target: Pair;
}

export interface CandidateRow {
  source: Pair;
  target: Pair;
  target_attribute: string;
  rank: number;
  support: number;
  conf_forward: number | null;
  conf_swapped: number | null;
  conf_final: number;
  method: string;
  stable_round: number | null;
  decision: Verdict | null;
  replacement: Replacement | null;
}

export interface DecisionRequest {
  source: Pair;
  target: Pair;
  verdict: Verdict;
  replacement_source?: Pair;
  replacement_target?: Pair;
  note?: string;
}

export interface AlignmentEntry {
  source: Pair;
  target: Pair;
}

export interface ExportDoc {
  job_id: string;
  alignment: AlignmentEntry[];
  skeleton_rules: unknown[];
  draft: boolean;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function throwFor(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) await throwFor(response);
    return (await response.json()) as T;
  }

  listJobs(): Promise<JobSummary[]> {
    return this.getJson("/jobs");
  }

  getJob(jobId: string): Promise<JobSummary & { config: unknown }> {
    return this.getJson(`/jobs/${jobId}`);
  }

  candidates(jobId: string): Promise<CandidateRow[]> {
    return this.getJson(`/jobs/${jobId}/candidates`);
  }

  exportAlignment(jobId: string): Promise<ExportDoc> {
    return this.getJson(`/jobs/${jobId}/export`);
  }

  async transcript(jobId: string): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/jobs/${jobId}/transcript`);
    if (!response.ok) await throwFor(response);
    return response.text();
  }

  async decide(jobId: string, request: DecisionRequest): Promise<unknown> {
    const response = await this.fetchFn(`${this.baseUrl}/jobs/${jobId}/decisions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!response.ok) await throwFor(response);
    return response.json();
  }
}
