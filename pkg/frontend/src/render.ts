/**
 * DOM rendering for the labeling console. Every figure on screen is a
 * formatted copy of a number the service sent; nothing is derived locally
 * beyond string formatting and picking which entries to show.
 */

import type { ContextInfo, QueryPayload, ResultPayload } from "./api.js";
import type { ConsoleState, DeltaEntry } from "./state.js";

export interface Handlers {
  onStart(req: { dataset: string; budget: number; seed: number; strategy: string }): void;
  onLabel(label: 0 | 1): void;
  onRetry(): void;
  onExpandContexts(): void;
  onLoadResult(): void;
  onReset(): void;
}

const esc = (value: unknown): string =>
  String(value).replace(/[&<>"']/g, (ch) =>
    ch === "&" ? "&amp;" : ch === "<" ? "&lt;" : ch === ">" ? "&gt;" : ch === '"' ? "&quot;" : "&#39;",
  );

const fmt = (value: number, digits = 4): string =>
  Number.isFinite(value) ? value.toFixed(digits) : String(value);

function banner(state: ConsoleState): string {
  const parts: string[] = [];
  if (state.connectionLost) {
    parts.push(
      `<div class="banner banner-error" data-testid="connection-banner">
        Connection to the service lost.
        <button data-action="retry" data-testid="retry-button">Retry</button>
      </div>`,
    );
  }
  if (state.phase === "stale") {
    parts.push(
      `<div class="banner banner-warn" data-testid="stale-banner">
        This session no longer exists on the server. Start a new one below.
      </div>`,
    );
  }
  if (state.error && state.phase !== "stale") {
    parts.push(`<div class="banner banner-error" data-testid="error-banner">${esc(state.error)}</div>`);
  }
  if (state.phase === "complete") {
    parts.push(
      `<div class="banner banner-done" data-testid="completion-banner">
        Budget exhausted — labeling complete.
        <button data-action="load-result" data-testid="view-result-button">View result</button>
      </div>`,
    );
  }
  return parts.join("\n");
}

function startScreen(): string {
  return `
  <section class="card" data-testid="start-screen">
    <h2>Start a labeling session</h2>
    <form data-action="start-form">
      <label>Dataset
        <input name="dataset" value="synthetic2" data-testid="dataset-input">
      </label>
      <label>Budget
        <input name="budget" type="number" value="20" min="1" data-testid="budget-input">
      </label>
      <label>Seed
        <input name="seed" type="number" value="0" data-testid="seed-input">
      </label>
      <label>Query strategy
        <select name="strategy" data-testid="strategy-input">
          <option value="lca" selected>low-confidence anomaly</option>
          <option value="random">random</option>
          <option value="ce">consensus entropy</option>
          <option value="kl">KL divergence</option>
        </select>
      </label>
      <button type="submit" data-testid="start-button">Start session</button>
    </form>
  </section>`;
}

function featureTable(features: Record<string, number>): string {
  const rows = Object.entries(features)
    .map(
      ([name, value]) =>
        `<tr><th scope="row">${esc(name)}</th><td data-feature="${esc(name)}">${fmt(value)}</td></tr>`,
    )
    .join("");
  return `<table class="features" data-testid="feature-table"><tbody>${rows}</tbody></table>`;
}

function gauge(testId: string, label: string, value: number): string {
  const pct = Math.max(0, Math.min(1, value)) * 100;
  return `
  <div class="gauge" data-testid="${testId}" data-value="${esc(value)}">
    <span class="gauge-label">${esc(label)}</span>
    <div class="gauge-track"><div class="gauge-fill" style="width: ${pct}%"></div></div>
    <span class="gauge-value">${fmt(value, 3)}</span>
  </div>`;
}

function contextList(contexts: ContextInfo[], expanded: boolean): string {
  const items = contexts
    .map(
      (c) => `
      <li data-context-index="${c.context_index}">
        <code>ctx ${c.context_index}</code>
        <span class="ctx-importance" data-testid="ctx-importance-${c.context_index}">${fmt(c.importance)}</span>
        <span class="ctx-epsilon">err ${fmt(c.epsilon)}</span>
      </li>`,
    )
    .join("");
  const expander = expanded
    ? ""
    : `<button data-action="expand-contexts" data-testid="expand-contexts-button">Show top 10</button>`;
  return `
  <section class="card" data-testid="context-panel">
    <h3>Most important contexts</h3>
    <ol data-testid="context-list">${items}</ol>
    ${expander}
  </section>`;
}

function deltaChart(entry: DeltaEntry | null, frozen: boolean): string {
  const cls = frozen ? "delta-chart frozen" : "delta-chart";
  if (!entry || entry.deltas.every((d) => d === 0)) {
    return `
    <section class="card ${cls}" data-testid="delta-chart" data-frozen="${frozen}">
      <h3>Importance movement</h3>
      <p class="empty" data-testid="delta-empty">No importance movement from the last label.</p>
    </section>`;
  }
  const indexed = entry.deltas.map((delta, index) => ({ index, delta }));
  const shown = indexed
    .filter((d) => d.delta !== 0)
    .sort((a, b) => Math.abs(b.delta) - Math.abs(a.delta))
    .slice(0, 12);
  const maxAbs = Math.abs(shown[0].delta) || 1;
  const topCut = Math.abs(shown[Math.min(2, shown.length - 1)].delta);
  const bars = shown
    .map((d) => {
      const width = (Math.abs(d.delta) / maxAbs) * 100;
      const mover = Math.abs(d.delta) >= topCut ? " top-mover" : "";
      const sign = d.delta > 0 ? "up" : "down";
      return `
      <div class="delta-row${mover}" data-testid="delta-bar-${d.index}" data-delta="${esc(d.delta)}">
        <code>ctx ${d.index}</code>
        <div class="delta-track"><div class="delta-fill ${sign}" style="width: ${width}%"></div></div>
        <span>${d.delta > 0 ? "+" : ""}${fmt(d.delta)}</span>
      </div>`;
    })
    .join("");
  return `
  <section class="card ${cls}" data-testid="delta-chart" data-frozen="${frozen}">
    <h3>Importance movement (label #${entry.iteration})</h3>
    ${bars}
  </section>`;
}

function queryPanel(state: ConsoleState, query: QueryPayload): string {
  const busy = state.phase === "submitting";
  const disabled = busy ? "disabled" : "";
  return `
  <section class="card" data-testid="query-panel">
    <header class="query-header">
      <h2>Sample <span data-testid="sample-index">${query.sample_index}</span></h2>
      <span class="progress" data-testid="budget-progress">label ${state.labelsUsed} / ${state.budget}</span>
    </header>
    ${gauge("margin-gauge", "Committee margin", query.margin)}
    ${gauge("vote-gauge", "Anomaly vote share", query.vote_fraction)}
    ${featureTable(query.features)}
    <div class="decide">
      <button data-action="label-anomaly" data-testid="anomaly-button" ${disabled}>Anomaly</button>
      <button data-action="label-normal" data-testid="normal-button" ${disabled}>Normal</button>
    </div>
  </section>`;
}

function resultScreen(result: ResultPayload): string {
  const scores = result.test_scores ?? result.train_scores;
  const kind = result.test_scores ? "test" : "train";
  const csv =
    "index,score\n" + scores.map((score, index) => `${index},${score}`).join("\n") + "\n";
  const href = `data:text/csv;charset=utf-8,${encodeURIComponent(csv)}`;
  const metrics = result.test_metrics
    ? `<dl class="metrics" data-testid="result-metrics">
         <dt>AUC-PR</dt><dd data-testid="metric-auc-pr">${fmt(result.test_metrics.auc_pr)}</dd>
         <dt>AUC-ROC</dt><dd data-testid="metric-auc-roc">${fmt(result.test_metrics.auc_roc)}</dd>
       </dl>`
    : "";
  const kept = result.kept_contexts
    .slice(0, 10)
    .map(
      (c) =>
        `<li><code>ctx ${c.context_index}</code> <span data-testid="kept-importance-${c.context_index}">${fmt(c.importance)}</span></li>`,
    )
    .join("");
  return `
  <section class="card" data-testid="result-screen">
    <h2>Session result</h2>
    <p>Combiner: <strong>${esc(result.combiner)}</strong> — ${result.kept_contexts.length} contexts kept.</p>
    ${metrics}
    <ol>${kept}</ol>
    <a href="${href}" download="scores.csv" data-testid="score-download">Download final ${kind} scores (CSV)</a>
    <button data-action="reset" data-testid="new-session-button">New session</button>
  </section>`;
}

export function render(root: HTMLElement, state: ConsoleState): void {
  const pieces: string[] = [banner(state)];
  if (state.phase === "idle" || state.phase === "stale") {
    pieces.push(startScreen());
  } else if (state.phase === "starting") {
    pieces.push(`<p class="loading" data-testid="loading">Creating session…</p>`);
  } else if (state.phase === "result" && state.result) {
    pieces.push(resultScreen(state.result));
  } else if (state.query) {
    if (state.phase !== "complete") {
      pieces.push(queryPanel(state, state.query));
    }
    pieces.push(deltaChart(state.lastDelta, state.phase === "complete"));
    const contexts = state.topContexts.length ? state.topContexts : state.query.top_contexts;
    pieces.push(contextList(contexts, state.topContexts.length > 0));
  }
  root.innerHTML = pieces.join("\n");
}

/** Wire delegated events once; re-renders never re-bind. */
export function bind(root: HTMLElement, handlers: Handlers): void {
  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!target) return;
    const action = target.getAttribute("data-action");
    if (action === "label-anomaly") handlers.onLabel(1);
    else if (action === "label-normal") handlers.onLabel(0);
    else if (action === "retry") handlers.onRetry();
    else if (action === "expand-contexts") handlers.onExpandContexts();
    else if (action === "load-result") handlers.onLoadResult();
    else if (action === "reset") handlers.onReset();
  });
  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    if (form.getAttribute("data-action") !== "start-form") return;
    event.preventDefault();
    const data = new FormData(form);
    handlers.onStart({
      dataset: String(data.get("dataset") ?? "synthetic2"),
      budget: Number(data.get("budget") ?? 20),
      seed: Number(data.get("seed") ?? 0),
      strategy: String(data.get("strategy") ?? "lca"),
    });
  });
}
