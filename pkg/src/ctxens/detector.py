"""Per-context base detector: reference groups, per-group forests, unified scores.

For one context the detector (1) clusters the training rows on the
z-scored contextual attributes, with the cluster count chosen by BIC and
undersized clusters merged away, (2) fits an isolation forest per group on
the behavioral attributes, and (3) maps the pooled raw scores through a
Gaussian CDF-style transform so that scores from different contexts share
a common [0, 1] probability-like scale.

``build_score_matrix`` runs that pipeline over every candidate context,
optionally across a process pool, and returns one unified score column per
context for the training rows (and test rows, when given).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .contexts import Standardizer, fit_standardizer
from .data import Context, ContextSet, ScoreMatrix
from .iforest import IsolationForestModel, fit_isolation_forest
from .xmeans import xmeans

__all__ = [
    "DetectorConfig",
    "ReferenceGrouping",
    "UnificationParams",
    "ContextModel",
    "BuildResult",
    "fit_reference_groups",
    "fit_context_model",
    "score_raw",
    "score_unified",
    "unify",
    "build_score_matrix",
    "resolve_workers",
]

WORKERS_ENV_VAR = "CTXENS_WORKERS"


@dataclass(frozen=True)
class DetectorConfig:
    """Knobs of the two-step base detector."""

    n_trees: int = 100
    subsample_cap: int = 256
    max_clusters: int = 10
    fallback_max_clusters: int = 5
    min_group_size: int = 10

    def __post_init__(self):
        if self.n_trees < 1 or self.subsample_cap < 2:
            raise ValueError("need at least one tree and a subsample of 2+")
        if self.max_clusters < 1 or self.min_group_size < 1:
            raise ValueError("cluster settings must be positive")


@dataclass(frozen=True)
class ReferenceGrouping:
    """Training-time clustering of the contextual subspace.

    Centroids live in the z-scored contextual space; ``assignment`` holds the
    training rows' group ids and always equals nearest-centroid assignment.
    """

    scaler: Standardizer
    centroids: np.ndarray  # (k, |contextual|)
    assignment: np.ndarray  # (n_train,)
    sizes: np.ndarray  # (k,)

    @property
    def n_groups(self) -> int:
        return self.centroids.shape[0]

    def assign(self, contextual_features: np.ndarray) -> np.ndarray:
        """Nearest training centroid for each row (rows given in raw units)."""
        z = self.scaler.apply(contextual_features).astype(np.float32)
        d2 = -2.0 * z @ self.centroids.T + np.einsum(
            "ij,ij->i", self.centroids, self.centroids
        )
        return np.argmin(d2, axis=1)


@dataclass(frozen=True)
class UnificationParams:
    """Mean/spread of a context's raw training scores."""

    mean: float
    std: float


def unify(raw_scores: np.ndarray, params: UnificationParams) -> np.ndarray:
    """Gaussian-scale raw scores into [0, 1]; degenerate spread maps to 0."""
    if params.std <= 0.0:
        return np.zeros(np.shape(raw_scores))
    z = (np.asarray(raw_scores, dtype=np.float64) - params.mean) / (
        params.std * math.sqrt(2.0)
    )
    return np.maximum(0.0, erf(z))


@dataclass(frozen=True)
class ContextModel:
    """Everything needed to score arbitrary points under one context."""

    context: Context
    grouping: ReferenceGrouping
    forests: tuple[IsolationForestModel, ...]
    unification: UnificationParams
    seed: int


def _merge_small_groups(
    Z: np.ndarray, centers: np.ndarray, labels: np.ndarray, min_size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Iteratively dissolve the smallest undersized group into its neighbors.

    Dropping a centroid and re-running nearest-centroid assignment only moves
    the dropped group's points, so the nearest-centroid property survives.
    """
    while centers.shape[0] > 1:
        sizes = np.bincount(labels, minlength=centers.shape[0])
        worst = int(np.argmin(sizes))
        if sizes[worst] >= min_size:
            break
        centers = np.delete(centers, worst, axis=0)
        d2 = -2.0 * Z @ centers.T + np.einsum("ij,ij->i", centers, centers)
        labels = np.argmin(d2, axis=1)
    return centers, labels


def fit_reference_groups(
    features: np.ndarray,
    context: Context,
    cfg: DetectorConfig,
    seed_seq: np.random.SeedSequence,
) -> ReferenceGrouping:
    """Cluster the contextual attributes into reference groups.

    Tries the configured cluster cap first; if merging undersized groups
    collapses the result below two groups, retries once with the smaller
    fallback cap before accepting a single group.
    """
    Xc = features[:, context.contextual]
    scaler = fit_standardizer(Xc)
    Z = scaler.apply(Xc).astype(np.float32)
    primary_rng, fallback_rng = (
        np.random.Generator(np.random.PCG64(s)) for s in seed_seq.spawn(2)
    )

    def attempt(cap: int, rng: np.random.Generator):
        centers, labels = xmeans(Z, cap, rng)
        return _merge_small_groups(Z, centers, labels, cfg.min_group_size)

    centers, labels = attempt(cfg.max_clusters, primary_rng)
    if centers.shape[0] < 2 and cfg.fallback_max_clusters < cfg.max_clusters:
        retry_centers, retry_labels = attempt(cfg.fallback_max_clusters, fallback_rng)
        if retry_centers.shape[0] >= 2:
            centers, labels = retry_centers, retry_labels

    sizes = np.bincount(labels, minlength=centers.shape[0])
    return ReferenceGrouping(
        scaler=scaler, centroids=centers, assignment=labels, sizes=sizes
    )


def fit_context_model(
    features: np.ndarray,
    context: Context,
    cfg: DetectorConfig,
    seed: int,
) -> tuple[ContextModel, np.ndarray]:
    """Fit one context end to end.

    Returns the model plus the unified training-score column; the latter is
    what the ensemble machinery consumes, so it is computed here while the
    per-group raw scores are at hand.
    """
    seed_seq = np.random.SeedSequence(seed)
    group_seq, forest_seq = seed_seq.spawn(2)
    grouping = fit_reference_groups(features, context, cfg, group_seq)

    Xb = np.ascontiguousarray(features[:, context.behavioral], dtype=np.float32)
    raw = np.empty(features.shape[0], dtype=np.float64)
    forests = []
    forest_rngs = forest_seq.spawn(grouping.n_groups)
    for g in range(grouping.n_groups):
        members = np.flatnonzero(grouping.assignment == g)
        forest = fit_isolation_forest(
            Xb[members],
            np.random.Generator(np.random.PCG64(forest_rngs[g])),
            n_trees=cfg.n_trees,
            subsample_cap=cfg.subsample_cap,
            trained_on=context.behavioral,
        )
        forests.append(forest)
        raw[members] = forest.score(Xb[members])

    params = UnificationParams(mean=float(raw.mean()), std=float(raw.std()))
    model = ContextModel(
        context=context,
        grouping=grouping,
        forests=tuple(forests),
        unification=params,
        seed=seed,
    )
    return model, unify(raw, params)


def score_raw(
    model: ContextModel, features: np.ndarray, use_stored_assignment: bool = False
) -> np.ndarray:
    """Raw (pre-unification) scores for rows under one context's model.

    Training rows may reuse their stored group assignment; new rows go to the
    nearest training centroid in the z-scored contextual subspace. The two
    paths agree because stored assignments are nearest-centroid by
    construction.
    """
    if use_stored_assignment:
        assignment = model.grouping.assignment
        if assignment.shape[0] != features.shape[0]:
            raise ValueError("stored assignment does not match this many rows")
    else:
        assignment = model.grouping.assign(features[:, model.context.contextual])
    Xb = np.ascontiguousarray(features[:, model.context.behavioral], dtype=np.float32)
    raw = np.empty(features.shape[0], dtype=np.float64)
    for g, forest in enumerate(model.forests):
        members = np.flatnonzero(assignment == g)
        if members.size:
            raw[members] = forest.score(Xb[members])
    return raw


def score_unified(model: ContextModel, features: np.ndarray, **kw) -> np.ndarray:
    """Unified [0, 1] scores using the training-time unification parameters."""
    return unify(score_raw(model, features, **kw), model.unification)


@dataclass
class BuildResult:
    train: ScoreMatrix
    test: ScoreMatrix | None
    models: list[ContextModel] | None


def context_seed(master_seed: int, context_index: int) -> int:
    """Stable per-context seed, independent of scheduling order."""
    ss = np.random.SeedSequence([master_seed, context_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFF)


def resolve_workers(explicit: int | None = None) -> int:
    if explicit is not None and explicit >= 1:
        return explicit
    env = os.environ.get(WORKERS_ENV_VAR, "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _fit_columns(
    indices,
    features: np.ndarray,
    test_features: np.ndarray | None,
    contexts: ContextSet,
    cfg: DetectorConfig,
    master_seed: int,
    keep_models: bool,
):
    n_train = features.shape[0]
    n_test = 0 if test_features is None else test_features.shape[0]
    train_cols = np.empty((n_train, len(indices)), dtype=np.float32)
    test_cols = np.empty((n_test, len(indices)), dtype=np.float32)
    models = [] if keep_models else None
    for j, ci in enumerate(indices):
        model, train_col = fit_context_model(
            features, contexts[ci], cfg, context_seed(master_seed, ci)
        )
        train_cols[:, j] = train_col
        if test_features is not None:
            test_cols[:, j] = score_unified(model, test_features)
        if keep_models:
            models.append(model)
    return train_cols, test_cols, models


def build_score_matrix(
    features: np.ndarray,
    contexts: ContextSet,
    cfg: DetectorConfig,
    seed: int,
    test_features: np.ndarray | None = None,
    workers: int | None = None,
    keep_models: bool = False,
) -> BuildResult:
    """Fit every context and collect unified score columns.

    Contexts are independent, so they are sharded over a process pool when
    more than one worker is available. Per-context seeds derive from
    ``(seed, context index)``, making the result identical no matter how the
    work is scheduled. ``keep_models`` retains the fitted per-context models
    (only worth it for interactive sessions; the arrays are what experiments
    need).
    """
    n_workers = resolve_workers(workers)
    m = len(contexts)
    idx = list(range(m))
    if n_workers <= 1 or m < 4:
        train_cols, test_cols, models = _fit_columns(
            idx, features, test_features, contexts, cfg, seed, keep_models
        )
    else:
        from joblib import Parallel, delayed

        chunks = [c.tolist() for c in np.array_split(np.arange(m), min(4 * n_workers, m))]
        parts = Parallel(n_jobs=n_workers)(
            delayed(_fit_columns)(
                chunk, features, test_features, contexts, cfg, seed, keep_models
            )
            for chunk in chunks
        )
        train_cols = np.concatenate([p[0] for p in parts], axis=1)
        test_cols = np.concatenate([p[1] for p in parts], axis=1)
        models = None
        if keep_models:
            models = [mod for p in parts for mod in p[2]]

    train_matrix = ScoreMatrix(scores=train_cols, contexts=contexts)
    test_matrix = (
        ScoreMatrix(scores=test_cols, contexts=contexts)
        if test_features is not None
        else None
    )
    return BuildResult(train=train_matrix, test=test_matrix, models=models)
