// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import type { QueryPayload, ResultPayload } from "../src/api.js";
import { render } from "../src/render.js";
import { initialState, type ConsoleState } from "../src/state.js";

function samplePayload(overrides: Partial<QueryPayload> = {}): QueryPayload {
  return {
    session_id: "s1",
    iteration: 1,
    budget: 5,
    sample_index: 42,
    features: { f0: 1.25, f1: -3.5 },
    margin: 0.5,
    vote_fraction: 0.25,
    predictions: [1, 0, 1, 0],
    selection_weights: [0.25, 0.25, 0.25, 0.25],
    top_contexts: [
      { context_index: 3, bitmask: 12, importance: 1.9, epsilon: 0.02 },
      { context_index: 7, bitmask: 5, importance: -0.4, epsilon: 0.69 },
    ],
    ...overrides,
  };
}

function labelingState(overrides: Partial<ConsoleState> = {}): ConsoleState {
  return {
    ...initialState(),
    phase: "labeling",
    sessionId: "s1",
    budget: 5,
    labelsUsed: 1,
    query: samplePayload(),
    ...overrides,
  };
}

const mount = (state: ConsoleState): HTMLElement => {
  const root = document.createElement("div");
  render(root, state);
  return root;
};

describe("query panel", () => {
  it("shows the margin gauge at 0.5 when the served vote fraction is 0.25", () => {
    const root = mount(labelingState());
    const margin = root.querySelector('[data-testid="margin-gauge"]')!;
    expect(margin.getAttribute("data-value")).toBe("0.5");
    expect(margin.querySelector<HTMLElement>(".gauge-fill")!.style.width).toBe("50%");
    const vote = root.querySelector('[data-testid="vote-gauge"]')!;
    expect(vote.getAttribute("data-value")).toBe("0.25");
  });

  it("renders raw feature values and the budget progress", () => {
    const root = mount(labelingState());
    expect(root.querySelector('[data-feature="f0"]')!.textContent).toBe("1.2500");
    expect(root.querySelector('[data-feature="f1"]')!.textContent).toBe("-3.5000");
    expect(root.querySelector('[data-testid="budget-progress"]')!.textContent).toContain("1 / 5");
    expect(root.querySelector('[data-testid="sample-index"]')!.textContent).toBe("42");
  });

  it("disables both decision buttons while a submit is in flight", () => {
    const root = mount(labelingState({ phase: "submitting" }));
    expect(root.querySelector<HTMLButtonElement>('[data-testid="anomaly-button"]')!.disabled).toBe(true);
    expect(root.querySelector<HTMLButtonElement>('[data-testid="normal-button"]')!.disabled).toBe(true);
    const enabled = mount(labelingState());
    expect(enabled.querySelector<HTMLButtonElement>('[data-testid="anomaly-button"]')!.disabled).toBe(false);
  });

  it("lists the served top contexts with their importances", () => {
    const root = mount(labelingState());
    expect(root.querySelector('[data-testid="ctx-importance-3"]')!.textContent).toBe("1.9000");
    expect(root.querySelector('[data-testid="ctx-importance-7"]')!.textContent).toBe("-0.4000");
    expect(root.querySelector('[data-testid="expand-contexts-button"]')).not.toBeNull();
  });
});

describe("importance delta chart", () => {
  it("draws served deltas as bars with the top movers highlighted", () => {
    const root = mount(
      labelingState({
        lastDelta: { iteration: 1, deltas: [0, 0.4, -0.1, 0.9, 0, -0.55], label: 1, weight: 0.5 },
      }),
    );
    const bar = root.querySelector('[data-testid="delta-bar-3"]')!;
    expect(bar.getAttribute("data-delta")).toBe("0.9");
    expect(bar.className).toContain("top-mover");
    expect(root.querySelector('[data-testid="delta-bar-2"]')!.className).not.toContain("top-mover");
    expect(root.querySelector('[data-testid="delta-bar-0"]')).toBeNull();
  });

  it("shows an empty chart for a zero-weight normal label", () => {
    const root = mount(
      labelingState({
        lastDelta: { iteration: 2, deltas: [0, 0, 0, 0, 0, 0], label: 0, weight: 0 },
      }),
    );
    expect(root.querySelector('[data-testid="delta-empty"]')).not.toBeNull();
    expect(root.querySelectorAll("[data-testid^='delta-bar-']")).toHaveLength(0);
  });

  it("freezes the chart and shows the completion banner when the budget is spent", () => {
    const root = mount(
      labelingState({
        phase: "complete",
        labelsUsed: 5,
        lastDelta: { iteration: 5, deltas: [0.2, 0, 0, 0, 0, 0], label: 1, weight: 1 },
      }),
    );
    expect(root.querySelector('[data-testid="delta-chart"]')!.getAttribute("data-frozen")).toBe("true");
    expect(root.querySelector('[data-testid="completion-banner"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="query-panel"]')).toBeNull();
  });
});

describe("banners and terminal screens", () => {
  it("connection loss shows a retry banner on top of the current screen", () => {
    const root = mount(labelingState({ connectionLost: true }));
    expect(root.querySelector('[data-testid="connection-banner"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="retry-button"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="query-panel"]')).not.toBeNull();
  });

  it("a stale session redirects to the start screen with an explanation", () => {
    const root = mount({ ...initialState(), phase: "stale", error: "unknown session" });
    expect(root.querySelector('[data-testid="stale-banner"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="start-screen"]')).not.toBeNull();
  });

  it("the result screen offers the score download and shows served metrics", () => {
    const result: ResultPayload = {
      session_id: "s1",
      combiner: "weighted",
      kept_contexts: [{ context_index: 4, bitmask: 9, importance: 2.1 }],
      importances: [0.1, -0.2, 0.0, 0.4, 2.1],
      epsilons: [0.4, 0.6, 0.5, 0.35, 0.1],
      train_scores: [0.5],
      test_scores: [0.91, 0.02],
      test_metrics: { auc_pr: 0.8123, auc_roc: 0.9456 },
      history: [],
    };
    const root = mount({ ...initialState(), phase: "result", result });
    const link = root.querySelector<HTMLAnchorElement>('[data-testid="score-download"]')!;
    expect(link.getAttribute("download")).toBe("scores.csv");
    const href = decodeURIComponent(link.getAttribute("href")!);
    expect(href).toContain("0,0.91");
    expect(href).toContain("1,0.02");
    expect(root.querySelector('[data-testid="metric-auc-pr"]')!.textContent).toBe("0.8123");
    expect(root.querySelector('[data-testid="metric-auc-roc"]')!.textContent).toBe("0.9456");
  });
});
