"""Ranking metrics and experiment orchestration.

The two metrics are implemented directly from their definitions: average
precision as the exact area under the stepwise precision-recall curve with
tied scores collapsed into one threshold step, and ROC area in its
rank-statistic form (probability a random anomaly outscores a random normal,
ties worth half). Both are invariant under strictly monotone rescaling of
the scores.

``fit_pipeline`` owns the per-seed heavy lifting -- split, optional
projection, context enumeration, detector fitting, train/test score
matrices -- so callers can reuse one fit across many query strategies,
budgets and combiners (the fit is by far the dominant cost).
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .active import QueryStrategy, run_active_loop
from .contexts import (
    MAX_ENUMERABLE_DIM,
    apply_pca,
    enumerate_contexts,
    fit_pca,
    fit_standardizer,
)
from .data import ContextSet, Dataset, ScoreMatrix, stratified_split
from .detector import DetectorConfig, build_score_matrix
from .ensemble import COMBINER_KINDS, combine, prune
from .errors import ConfigError, SingleClassError

__all__ = [
    "auc_pr",
    "auc_roc",
    "ExperimentConfig",
    "ExperimentReport",
    "FittedPipeline",
    "fit_pipeline",
    "run_experiment",
    "summarize_reports",
    "write_reports_jsonl",
    "read_reports_jsonl",
    "write_summary_csv",
    "context_performance_distribution",
    "confidence_histogram",
    "dataset_fingerprint",
]


# -- metrics -------------------------------------------------------------------

def _two_class(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape[0] != y.shape[0]:
        raise ValueError(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    pos = int(y.sum())
    if pos == 0 or pos == y.shape[0]:
        raise SingleClassError("both classes must be present to rank")
    return s, y


def auc_pr(scores, labels) -> float:
    """Average precision: sum of precision x recall-increment, descending."""
    s, y = _two_class(scores, labels)
    order = np.argsort(-s, kind="stable")
    ss, yy = s[order], y[order]
    # Last position of each distinct score = one PR-curve vertex.
    ends = np.flatnonzero(np.diff(ss) != 0)
    ends = np.append(ends, ss.shape[0] - 1)
    tp = np.cumsum(yy)[ends].astype(np.float64)
    n_at = (ends + 1).astype(np.float64)
    precision = tp / n_at
    recall = tp / float(y.sum())
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(((recall - prev) * precision).sum())


def auc_roc(scores, labels) -> float:
    """Rank form: P(anomaly outscores normal) with half credit for ties."""
    s, y = _two_class(scores, labels)
    ranks = rankdata(s, method="average")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.shape[0] - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# -- experiment plumbing ---------------------------------------------------------

def dataset_fingerprint(dataset: Dataset) -> str:
    """Content hash used for cache keys and report provenance."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.features).tobytes())
    if dataset.labels is not None:
        h.update(np.ascontiguousarray(dataset.labels).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one evaluation run depends on."""

    strategy: QueryStrategy = field(default_factory=QueryStrategy)
    budget: int = 100
    combiner: str = "weighted"
    seeds: tuple[int, ...] = tuple(range(10))
    train_fraction: float = 0.7
    pca_components: int = 10
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    workers: int | None = None
    cache_dir: str | None = None

    def __post_init__(self):
        if self.combiner not in COMBINER_KINDS:
            raise ConfigError(f"unknown combiner {self.combiner!r}; pick from {COMBINER_KINDS}")
        if self.budget < 1:
            raise ConfigError(f"budget must be positive, got {self.budget}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train fraction {self.train_fraction} not in (0, 1)")
        if self.pca_components < 2:
            raise ConfigError("projection needs at least 2 components to form contexts")


@dataclass
class FittedPipeline:
    """Per-seed fitted state shared by every strategy/combiner evaluation."""

    seed: int
    contexts: ContextSet
    train: Dataset
    test: Dataset
    train_matrix: ScoreMatrix
    test_matrix: ScoreMatrix
    true_context_index: int | None
    fit_seconds: float
    projected: bool


def _cache_key(dataset: Dataset, config: ExperimentConfig, seed: int) -> str:
    payload = json.dumps(
        {
            "data": dataset_fingerprint(dataset),
            "seed": seed,
            "train_fraction": config.train_fraction,
            "pca": config.pca_components,
            "detector": vars(config.detector),
        },
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def fit_pipeline(dataset: Dataset, seed: int, config: ExperimentConfig) -> FittedPipeline:
    """Split, project if needed, enumerate contexts and fit all detectors.

    Feature sets wider than the enumerable limit are standardized on
    training statistics and projected onto the leading principal components
    first; context enumeration then runs in the projected space (where a
    declared true context no longer maps to a single bipartition).
    """
    t0 = time.perf_counter()
    train, test = stratified_split(dataset, config.train_fraction, seed)
    train_X, test_X = train.features, test.features
    projected = False
    if dataset.d > MAX_ENUMERABLE_DIM:
        scaler = fit_standardizer(train_X)
        proj = fit_pca(scaler.apply(train_X), config.pca_components)
        train_X = apply_pca(proj, scaler.apply(train_X))
        test_X = apply_pca(proj, scaler.apply(test_X))
        projected = True

    contexts = enumerate_contexts(train_X.shape[1])
    cached = _load_cached_matrices(dataset, config, seed, contexts)
    if cached is not None:
        train_m, test_m = cached
    else:
        built = build_score_matrix(
            train_X,
            contexts,
            config.detector,
            seed,
            test_features=test_X,
            workers=config.workers,
        )
        train_m, test_m = built.train, built.test
        _store_cached_matrices(dataset, config, seed, train_m, test_m)

    true_idx = None
    if dataset.true_context is not None and not projected:
        true_idx = contexts.index_of_mask(dataset.true_context.mask)
    return FittedPipeline(
        seed=seed,
        contexts=contexts,
        train=train,
        test=test,
        train_matrix=train_m,
        test_matrix=test_m,
        true_context_index=true_idx,
        fit_seconds=time.perf_counter() - t0,
        projected=projected,
    )


def _load_cached_matrices(dataset, config, seed, contexts):
    if config.cache_dir is None:
        return None
    from pathlib import Path

    path = Path(config.cache_dir) / f"scores-{_cache_key(dataset, config, seed)}.npz"
    if not path.exists():
        return None
    with np.load(path) as blob:
        return ScoreMatrix(blob["train"], contexts), ScoreMatrix(blob["test"], contexts)


def _store_cached_matrices(dataset, config, seed, train_m, test_m):
    if config.cache_dir is None:
        return
    from pathlib import Path

    out = Path(config.cache_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"scores-{_cache_key(dataset, config, seed)}.npz"
    np.savez_compressed(path, train=train_m.scores, test=test_m.scores)


@dataclass(frozen=True)
class ExperimentReport:
    """One (seed, strategy, budget, combiner) evaluation on held-out data."""

    dataset_id: str
    seed: int
    strategy: str
    budget: int
    combiner: str
    auc_pr: float
    auc_roc: float
    runtime_seconds: float
    n_kept_contexts: int
    audit_path: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset_id,
            "seed": self.seed,
            "strategy": self.strategy,
            "budget": self.budget,
            "combiner": self.combiner,
            "auc_pr": round(self.auc_pr, 6),
            "auc_roc": round(self.auc_roc, 6),
            "runtime_seconds": round(self.runtime_seconds, 3),
            "n_kept_contexts": self.n_kept_contexts,
            "audit_path": self.audit_path,
        }


def evaluate_fitted(
    fitted: FittedPipeline,
    config: ExperimentConfig,
    dataset_id: str = "dataset",
    audit_dir: str | None = None,
) -> ExperimentReport:
    """Run the label loop (when the combiner needs it) and score the test set."""
    t0 = time.perf_counter()
    kind = config.combiner
    audit_path = None
    if kind in ("avg", "max"):
        final = combine(fitted.test_matrix, kind)
        n_kept = fitted.test_matrix.m
    elif kind == "true":
        if fitted.true_context_index is None:
            raise ConfigError(
                "the 'true' combiner needs a dataset with a known generating context"
            )
        final = combine(fitted.test_matrix, kind, true_context_index=fitted.true_context_index)
        n_kept = 1
    else:
        labels = fitted.train.require_labels()
        state, audit = run_active_loop(
            fitted.train_matrix,
            oracle=lambda i: int(labels[i]),
            strategy=config.strategy,
            budget=config.budget,
            seed=fitted.seed,
        )
        final = combine(fitted.test_matrix, kind, importances=state.importances)
        n_kept = int(prune(state.importances).size) if kind == "weighted" else 1
        if audit_dir is not None:
            from pathlib import Path

            from .active import audit_to_jsonl

            Path(audit_dir).mkdir(parents=True, exist_ok=True)
            audit_path = str(
                Path(audit_dir)
                / f"audit-{dataset_id}-{config.strategy.kind}-b{config.budget}-s{fitted.seed}.jsonl"
            )
            audit_to_jsonl(audit, audit_path)

    test_labels = fitted.test.require_labels()
    return ExperimentReport(
        dataset_id=dataset_id,
        seed=fitted.seed,
        strategy=config.strategy.kind,
        budget=config.budget,
        combiner=kind,
        auc_pr=auc_pr(final, test_labels),
        auc_roc=auc_roc(final, test_labels),
        runtime_seconds=fitted.fit_seconds + (time.perf_counter() - t0),
        n_kept_contexts=n_kept,
        audit_path=audit_path,
    )


def run_experiment(
    dataset: Dataset,
    config: ExperimentConfig,
    dataset_id: str = "dataset",
    audit_dir: str | None = None,
) -> list[ExperimentReport]:
    """Full pipeline once per seed; one report per seed."""
    dataset.require_labels()
    reports = []
    for seed in config.seeds:
        fitted = fit_pipeline(dataset, seed, config)
        reports.append(evaluate_fitted(fitted, config, dataset_id, audit_dir))
    return reports


def summarize_reports(reports: list[ExperimentReport]) -> list[dict]:
    """Long-format summary: one row per (dataset, strategy, budget, combiner, metric)."""
    groups: dict[tuple, list[ExperimentReport]] = {}
    for r in reports:
        groups.setdefault((r.dataset_id, r.strategy, r.budget, r.combiner), []).append(r)
    rows = []
    for (ds, strat, budget, comb), rs in sorted(groups.items()):
        for metric in ("auc_pr", "auc_roc"):
            vals = np.array([getattr(r, metric) for r in rs])
            rows.append(
                {
                    "dataset": ds,
                    "strategy": strat,
                    "budget": budget,
                    "combiner": comb,
                    "metric": metric,
                    "mean": round(float(vals.mean()), 6),
                    "std": round(float(vals.std(ddof=1)) if vals.size > 1 else 0.0, 6),
                    "n_seeds": int(vals.size),
                }
            )
    return rows


def write_reports_jsonl(reports: list[ExperimentReport], path, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        for r in reports:
            fh.write(json.dumps(r.to_json_dict()) + "\n")


def read_reports_jsonl(path) -> list[ExperimentReport]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(
                ExperimentReport(
                    dataset_id=d["dataset"],
                    seed=d["seed"],
                    strategy=d["strategy"],
                    budget=d["budget"],
                    combiner=d["combiner"],
                    auc_pr=d["auc_pr"],
                    auc_roc=d["auc_roc"],
                    runtime_seconds=d.get("runtime_seconds", 0.0),
                    n_kept_contexts=d.get("n_kept_contexts", 0),
                    audit_path=d.get("audit_path"),
                )
            )
    return out


def write_summary_csv(rows: list[dict], path) -> None:
    import csv

    cols = ["dataset", "strategy", "budget", "combiner", "metric", "mean", "std", "n_seeds"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)


# -- distribution diagnostics ----------------------------------------------------

def context_performance_distribution(
    matrix: ScoreMatrix, labels, bins: int = 10
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single-context test quality for every context.

    Returns (per-context average precision values, histogram counts, bin
    edges). The distribution is typically heavily left-skewed: most
    bipartitions carry no signal for a given anomaly-generating context.
    """
    values = np.array(
        [auc_pr(matrix.scores[:, j], labels) for j in range(matrix.m)]
    )
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return values, counts, edges


def confidence_histogram(
    matrix: ScoreMatrix, labels, threshold: float = 0.9, bins: int = 10
) -> dict:
    """Per-class histograms of the fraction of contexts that flag a sample."""
    y = np.asarray(labels).ravel().astype(np.int64)
    if y.min() == y.max():
        raise SingleClassError("both classes must be present")
    frac = (matrix.scores >= threshold).mean(axis=1)
    edges = np.linspace(0.0, 1.0, bins + 1)
    anom, _ = np.histogram(frac[y == 1], bins=edges)
    norm, _ = np.histogram(frac[y == 0], bins=edges)
    return {
        "bin_edges": edges,
        "anomaly_counts": anom,
        "normal_counts": norm,
        "anomaly_fractions": frac[y == 1],
        "normal_fractions": frac[y == 0],
    }
