/**
 * Session store for the labeling console.
 *
 * All arithmetic that matters (margins, vote fractions, importance movement)
 * arrives precomputed from the service; this store only sequences requests
 * and holds the latest payloads for the render layer. The one rule it
 * enforces hard: at most one request in flight, so a double-clicked button
 * can never post the same label twice.
 */

import {
  ApiClient,
  ApiError,
  ConnectionError,
  type CreateSessionRequest,
  type LabelResponse,
  type QueryPayload,
  type ResultPayload,
  type SessionStatePayload,
} from "./api.js";

export type Phase =
  | "idle"
  | "starting"
  | "labeling"
  | "submitting"
  | "complete"
  | "result"
  | "stale";

export interface DeltaEntry {
  iteration: number;
  deltas: number[];
  label: number;
  weight: number;
}

export interface ConsoleState {
  phase: Phase;
  sessionId: string | null;
  dataset: string | null;
  budget: number;
  labelsUsed: number;
  nContexts: number;
  query: QueryPayload | null;
  lastApplied: LabelResponse["applied"] | null;
  lastDelta: DeltaEntry | null;
  deltaHistory: DeltaEntry[];
  topContexts: SessionStatePayload["top_contexts"];
  result: ResultPayload | null;
  connectionLost: boolean;
  error: string | null;
}

export function initialState(): ConsoleState {
  return {
    phase: "idle",
    sessionId: null,
    dataset: null,
    budget: 0,
    labelsUsed: 0,
    nContexts: 0,
    query: null,
    lastApplied: null,
    lastDelta: null,
    deltaHistory: [],
    topContexts: [],
    result: null,
    connectionLost: false,
    error: null,
  };
}

type Listener = (state: ConsoleState) => void;

/** Pending action retried verbatim after a connection drop. */
type Retryable = () => Promise<void>;

export class ConsoleStore {
  private state: ConsoleState = initialState();
  private listeners: Listener[] = [];
  private inFlight = false;
  private retryable: Retryable | null = null;

  constructor(private readonly api: ApiClient) {}

  getState(): ConsoleState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.state);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private patch(partial: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  /** True while a request is outstanding; render disables the controls. */
  get busy(): boolean {
    return this.inFlight;
  }

  private async guarded(action: Retryable): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.retryable = action;
    try {
      await action();
      this.retryable = null;
      if (this.state.connectionLost) this.patch({ connectionLost: false });
    } catch (err) {
      if (err instanceof ConnectionError) {
        this.patch({ connectionLost: true });
      } else if (err instanceof ApiError && err.status === 404) {
        // The server no longer knows this session (restart, expiry): back
        // to the start screen rather than hammering a dead id.
        this.retryable = null;
        this.patch({ ...initialState(), phase: "stale", error: err.message });
      } else {
        this.retryable = null;
        const message = err instanceof Error ? err.message : String(err);
        this.patch({ error: message, phase: this.fallbackPhase() });
      }
    } finally {
      this.inFlight = false;
      // patch again so subscribers re-render with busy=false
      this.patch({});
    }
  }

  private fallbackPhase(): Phase {
    if (this.state.result) return "result";
    if (this.state.query) return "labeling";
    return "idle";
  }

  /** Re-issue whatever failed with a connection error. */
  async retry(): Promise<void> {
    const pending = this.retryable;
    if (!pending) {
      this.patch({ connectionLost: false });
      return;
    }
    await this.guarded(pending);
  }

  async start(req: CreateSessionRequest): Promise<void> {
    this.patch({ ...initialState(), phase: "starting" });
    await this.guarded(async () => {
      const created = await this.api.createSession(req);
      this.patch({
        phase: "labeling",
        sessionId: created.session_id,
        dataset: created.dataset,
        budget: created.query.budget,
        labelsUsed: 0,
        nContexts: created.n_contexts,
        query: created.query,
        error: null,
      });
    });
  }

  async submit(label: 0 | 1): Promise<void> {
    const { query, sessionId } = this.state;
    if (!query || !sessionId || this.state.phase !== "labeling") return;
    const index = query.sample_index;
    this.patch({ phase: "submitting" });
    await this.guarded(async () => {
      const res = await this.api.submitLabel(sessionId, index, label);
      const entry: DeltaEntry = {
        iteration: res.applied.iteration,
        deltas: res.importance_delta,
        label: res.applied.label,
        weight: res.applied.weight,
      };
      const done = res.status === "complete" || !res.query;
      this.patch({
        phase: done ? "complete" : "labeling",
        labelsUsed: res.labels_used,
        budget: res.budget,
        query: res.query ?? this.state.query,
        lastApplied: res.applied,
        lastDelta: entry,
        deltaHistory: [...this.state.deltaHistory, entry],
        error: null,
      });
    });
  }

  async refreshContexts(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    await this.guarded(async () => {
      const snapshot = await this.api.getState(sessionId);
      this.patch({ topContexts: snapshot.top_contexts });
    });
  }

  async loadResult(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    await this.guarded(async () => {
      const result = await this.api.getResult(sessionId);
      this.patch({ phase: "result", result, error: null });
    });
  }

  reset(): void {
    this.retryable = null;
    this.patch(initialState());
  }
}
