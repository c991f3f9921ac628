/**
 * Typed client for the QA dataset service HTTP API (/api/v1).
 *
 * The UI never recomputes metrics or attribution; every number shown on
 * screen comes out of these endpoints unchanged.
 */

export interface Group {
  group_id: string;
  name: string;
  document_ids: string[];
}

export interface DocumentSummary {
  doc_id: string;
  group_id: string;
  title: string;
  source_kind: string;
}

export type MetricScores = Record<string, Record<string, number>>;

export interface Attribution {
  sentence_index: number;
  sentence_span: [number, number];
  score: number;
  runner_up_score: number;
}

export type HighlightSource = "question" | "answer" | "both";

export interface Highlight {
  char_span: [number, number];
  source: HighlightSource;
}

export interface QAPair {
  pair_id: string;
  dataset_id: string;
  doc_id: string;
  chunk_id: string;
  question: string;
  answer: string;
  metric_report: MetricScores;
  attribution: Attribution | null;
  highlights: Highlight[];
}

export interface DatasetSummary {
  dataset_id: string;
  group_id: string;
  pairs: number;
  failures: number;
}

export interface PairContext {
  chunk_text: string;
  attribution: Attribution;
  highlights: Highlight[];
}

export interface RunStatus {
  run_id: string;
  state: "running" | "completed" | "failed";
  done: number;
  failed: number;
  total: number;
  dataset_id: string | null;
  error: string | null;
}

export interface ComparisonRecord {
  comparison_id: string;
  doc_id: string;
  question: string;
  model_a: string;
  model_b: string;
  answer_a: string | null;
  answer_b: string | null;
  error_a: string | null;
  error_b: string | null;
  latency_a_ms: number | null;
  latency_b_ms: number | null;
  metric_report_a: MetricScores | null;
  metric_report_b: MetricScores | null;
  context_truncated: boolean;
  created_at: string;
}

export interface JobStatus {
  job_id: string;
  state: "Pending" | "Running" | "Completed" | "Failed" | "Canceled";
  exit_code: number | null;
  log_path: string | null;
}

export interface MetricClause {
  field: string;
  metric: string;
  comparator: ">" | ">=" | "<" | "<=";
  threshold: number;
}

export interface SortSpec {
  field: string;
  metric: string;
  direction: "asc" | "desc";
}

/** Serialize filter clauses into the server's query syntax, e.g.
 * "combined.bleu2>0.8,answer.meteor>=0.5". */
export function serializeFilter(clauses: MetricClause[]): string {
  return clauses
    .map((c) => `${c.field}.${c.metric}${c.comparator}${c.threshold}`)
    .join(",");
}

export function serializeSort(sort: SortSpec): string {
  return `${sort.field}.${sort.metric}:${sort.direction}`;
}

/** Error payload the server attaches to every non-2xx response. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(
        response.status,
        typeof payload.code === "string" ? payload.code : "unknown_error",
        typeof payload.message === "string" ? payload.message : response.statusText,
      );
    }
    return payload as T;
  }

  private get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  // --- corpus ---------------------------------------------------------

  listGroups(): Promise<Group[]> {
    return this.get("/api/v1/groups");
  }

  createGroup(name: string): Promise<Group> {
    return this.request("POST", "/api/v1/groups", { name });
  }

  listDocuments(groupId: string): Promise<DocumentSummary[]> {
    return this.get(`/api/v1/groups/${groupId}/documents`);
  }

  documentText(docId: string): Promise<{ doc_id: string; text: string }> {
    return this.get(`/api/v1/documents/${docId}/text`);
  }

  // --- generation -----------------------------------------------------

  startGeneration(body: Record<string, unknown>): Promise<{ run_id: string }> {
    return this.request("POST", "/api/v1/generate", body);
  }

  runStatus(runId: string): Promise<RunStatus> {
    return this.get(`/api/v1/runs/${runId}`);
  }

  // --- datasets -------------------------------------------------------

  listDatasets(): Promise<DatasetSummary[]> {
    return this.get("/api/v1/datasets");
  }

  listPairs(
    datasetId: string,
    filter?: MetricClause[],
    sort?: SortSpec,
  ): Promise<QAPair[]> {
    const params = new URLSearchParams();
    if (filter !== undefined && filter.length > 0) {
      params.set("filter", serializeFilter(filter));
    }
    if (sort !== undefined) {
      params.set("sort", serializeSort(sort));
    }
    const query = params.toString();
    return this.get(`/api/v1/datasets/${datasetId}/pairs${query ? `?${query}` : ""}`);
  }

  pairContext(pairId: string): Promise<PairContext> {
    return this.get(`/api/v1/pairs/${pairId}/attribution`);
  }

  // --- explorer -------------------------------------------------------

  compare(body: {
    doc_id: string;
    question: string;
    model_a: string;
    model_b: string;
    score?: boolean;
  }): Promise<ComparisonRecord> {
    return this.request("POST", "/api/v1/compare", body);
  }

  listComparisons(): Promise<ComparisonRecord[]> {
    return this.get("/api/v1/comparisons");
  }

  // --- training -------------------------------------------------------

  startTraining(body: Record<string, unknown>): Promise<{ job_id: string }> {
    return this.request("POST", "/api/v1/train", body);
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.get(`/api/v1/jobs/${jobId}`);
  }
}
