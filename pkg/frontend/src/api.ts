/**
 * Typed client for the labeling service. Every number shown in the UI comes
 * from these payloads; the client performs no score/error/importance math of
 * its own (display formatting only happens in the render layer).
 */

export interface ContextInfo {
  context_index: number;
  bitmask: number;
  importance: number;
  epsilon: number;
}

export interface QueryPayload {
  session_id: string;
  iteration: number;
  budget: number;
  sample_index: number;
  features: Record<string, number>;
  margin: number;
  vote_fraction: number;
  predictions: number[];
  selection_weights: number[];
  top_contexts: ContextInfo[];
}

export interface CreateSessionResponse {
  session_id: string;
  status: string;
  dataset: string;
  n_contexts: number;
  n_train: number;
  query: QueryPayload;
}

export interface AppliedLabel {
  iteration: number;
  sample_index: number;
  label: number;
  margin: number;
  weight: number;
}

export interface LabelResponse {
  session_id: string;
  status: string;
  labels_used: number;
  budget: number;
  applied: AppliedLabel;
  importance_delta: number[];
  query?: QueryPayload;
}

export interface SessionStatePayload {
  session_id: string;
  dataset: string;
  status: string;
  budget: number;
  labels_used: number;
  strategy: string;
  n_contexts: number;
  history: AppliedLabel[];
  top_contexts: ContextInfo[];
}

export interface KeptContext {
  context_index: number;
  bitmask: number;
  importance: number;
}

export interface ResultPayload {
  session_id: string;
  combiner: string;
  kept_contexts: KeptContext[];
  importances: number[];
  epsilons: number[];
  train_scores: number[];
  test_scores?: number[];
  test_metrics?: { auc_pr: number; auc_roc: number };
  history: AppliedLabel[];
}

export interface CreateSessionRequest {
  dataset: string;
  data_seed?: number;
  seed?: number;
  budget?: number;
  strategy?: { kind?: string; lambda?: number; threshold?: number };
  combiner?: string;
}

/** Error carrying the HTTP status so callers can route 404/409/422 cases. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly kind: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Network-level failure (server unreachable); retryable. */
export class ConnectionError extends Error {
  constructor(cause: unknown) {
    super(`cannot reach the service: ${String(cause)}`);
    this.name = "ConnectionError";
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
  } catch (err) {
    throw new ConnectionError(err);
  }
  const text = await response.text();
  const body = text ? JSON.parse(text) : {};
  if (!response.ok) {
    const message =
      typeof body.message === "string"
        ? body.message
        : typeof body.detail === "string"
          ? body.detail
          : JSON.stringify(body.detail ?? body);
    throw new ApiError(response.status, body.error ?? "HttpError", message);
  }
  return body as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  createSession(req: CreateSessionRequest): Promise<CreateSessionResponse> {
    return request(this.base, "/sessions", {
      method: "POST",
      body: JSON.stringify(req),
    });
  }

  getQuery(sessionId: string): Promise<QueryPayload> {
    return request(this.base, `/sessions/${sessionId}/query`);
  }

  submitLabel(sessionId: string, index: number, label: 0 | 1): Promise<LabelResponse> {
    return request(this.base, `/sessions/${sessionId}/label`, {
      method: "POST",
      body: JSON.stringify({ index, label }),
    });
  }

  getState(sessionId: string): Promise<SessionStatePayload> {
    return request(this.base, `/sessions/${sessionId}/state`);
  }

  getResult(sessionId: string): Promise<ResultPayload> {
    return request(this.base, `/sessions/${sessionId}/result`);
  }
}
