/**
 * Typed client for the label-review HTTP API.
 *
 * The UI talks to the server exclusively through this module; everything
 * else in the frontend is pure view logic, which keeps the whole review
 * workflow unit-testable with a mocked fetch.
 */

export interface Turn {
  index: number;
  role: "Doctor" | "Patient";
  text: string;
}

export interface Transcript {
  id: string;
  station_id: string;
  corpus_tag: string;
  turns: Turn[];
}

/** Inclusive [start, end] turn-index range. */
export type EvidenceRange = [number, number];

export interface LabelEntry {
  decision: boolean;
  justification: string;
  evidence: EvidenceRange[];
  source: string;
  flagged: boolean;
}

export interface ReviewEventRecord {
  criterion_id: string;
  new_decision: boolean;
  reviewer: string;
  note: string;
  timestamp: string;
  prior_decision: boolean;
}

export interface LabelSet {
  transcript_id: string;
  mode: string;
  entries: Record<string, LabelEntry>;
  review_log: ReviewEventRecord[];
}

export interface StationSummary {
  id: string;
  criterion_count: number;
}

export interface CriterionRecord {
  id: string;
  text: string;
  dependencies: string[];
}

export interface StationDetail {
  id: string;
  criteria: CriterionRecord[];
  transcript_ids: string[];
}

export interface OverrideRequest {
  decision: boolean;
  reviewer: string;
  note: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token: string = "",
    private readonly fetchImpl: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  listStations(): Promise<StationSummary[]> {
    return this.getJson("/api/stations");
  }

  getStation(stationId: string): Promise<StationDetail> {
    return this.getJson(`/api/stations/${encodeURIComponent(stationId)}`);
  }

  getTranscript(transcriptId: string): Promise<Transcript> {
    return this.getJson(`/api/transcripts/${encodeURIComponent(transcriptId)}`);
  }

  getLabels(transcriptId: string, mode = "strict"): Promise<LabelSet> {
    return this.getJson(
      `/api/labels/${encodeURIComponent(transcriptId)}?mode=${mode}`,
    );
  }

  exportReviewed(transcriptId: string, mode = "strict"): Promise<LabelSet> {
    return this.getJson(
      `/api/export/${encodeURIComponent(transcriptId)}?mode=${mode}`,
    );
  }

  async submitOverride(
    transcriptId: string,
    criterionId: string,
    body: OverrideRequest,
    mode = "strict",
  ): Promise<ReviewEventRecord> {
    const path =
      `/api/labels/${encodeURIComponent(transcriptId)}` +
      `/${encodeURIComponent(criterionId)}/override?mode=${mode}`;
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        "X-Review-Token": this.token,
      },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    const payload = (await response.json()) as { event: ReviewEventRecord };
    return payload.event;
  }
}
