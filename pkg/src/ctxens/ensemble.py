"""Combining per-context scores into one anomaly score per sample.

The importance-weighted combiner keeps only contexts whose estimated
importance is strictly positive and averages their unified scores with
importance weights. Degenerate case: if no context clears zero, the single
best (argmax importance) context is kept so the ensemble never goes silent.

Baselines for comparison:

``single``  the one context with the highest estimated importance,
``true``    the context the generator actually used (when known),
``avg``     unweighted mean over all contexts,
``max``     elementwise maximum over all contexts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import ScoreMatrix
from .errors import ConfigError, DimensionMismatchError

__all__ = [
    "COMBINER_KINDS",
    "prune",
    "combine_weighted",
    "combine_average",
    "combine_maximum",
    "select_single",
    "combine",
    "score_test",
    "score_matrix_with",
    "result_to_json_dict",
    "EnsembleResult",
]

COMBINER_KINDS = ("weighted", "single", "true", "avg", "max")


def prune(importances: np.ndarray) -> np.ndarray:
    """Indices of contexts kept for scoring: positive importance, else best-of."""
    imps = np.asarray(importances, dtype=np.float64)
    kept = np.flatnonzero(imps > 0.0)
    if kept.size == 0:
        kept = np.array([int(np.argmax(imps))])
    return kept


def combine_weighted(scores: np.ndarray, importances: np.ndarray) -> np.ndarray:
    """Importance-weighted mean over the pruned context set.

    A convex combination: the output always lies between the min and max of
    the kept contexts' scores. When pruning falls back to a single context
    its weight cancels, so a negative-importance survivor is still usable.
    """
    imps = np.asarray(importances, dtype=np.float64)
    kept = prune(imps)
    w = imps[kept]
    total = w.sum()
    if kept.size == 1 or total <= 0:
        return np.asarray(scores, dtype=np.float64)[:, kept[0]].copy()
    return np.asarray(scores, dtype=np.float64)[:, kept] @ (w / total)


def combine_average(scores: np.ndarray) -> np.ndarray:
    return np.asarray(scores, dtype=np.float64).mean(axis=1)


def combine_maximum(scores: np.ndarray) -> np.ndarray:
    return np.asarray(scores, dtype=np.float64).max(axis=1)


def select_single(importances: np.ndarray) -> int:
    """Index of the highest-importance context (first on ties)."""
    return int(np.argmax(np.asarray(importances)))


def combine(
    matrix: ScoreMatrix,
    kind: str,
    importances: np.ndarray | None = None,
    true_context_index: int | None = None,
) -> np.ndarray:
    """Dispatch over the combiner kinds; returns one score per sample."""
    if kind not in COMBINER_KINDS:
        raise ConfigError(f"unknown combiner {kind!r}; pick from {COMBINER_KINDS}")
    scores = matrix.scores
    if kind == "avg":
        return combine_average(scores)
    if kind == "max":
        return combine_maximum(scores)
    if kind == "true":
        if true_context_index is None:
            raise ConfigError("the 'true' combiner needs the generating context index")
        return np.asarray(scores, dtype=np.float64)[:, true_context_index].copy()
    if importances is None:
        raise ConfigError(f"the {kind!r} combiner needs estimated importances")
    if kind == "single":
        return np.asarray(scores, dtype=np.float64)[:, select_single(importances)].copy()
    return combine_weighted(scores, importances)


@dataclass(frozen=True)
class EnsembleResult:
    """Final scores plus the bookkeeping needed to explain them."""

    scores: np.ndarray
    kept_contexts: np.ndarray
    importances: np.ndarray
    combiner: str

    @property
    def n_kept(self) -> int:
        return int(self.kept_contexts.size)


def score_test(
    models: Sequence,
    importances: np.ndarray,
    test_features: np.ndarray,
) -> np.ndarray:
    """Score unseen rows with the pruned weighted ensemble.

    Each kept context assigns rows to its nearest training reference group,
    scores them with that group's forest, and maps through the training-time
    unification before the weighted average. Only kept contexts are scored at
    all, so pruning doubles as a large compute saving at inference time.
    """
    from .detector import score_unified

    test_features = np.asarray(test_features, dtype=np.float64)
    if test_features.ndim != 2:
        raise DimensionMismatchError("test features must be a 2-d matrix")
    imps = np.asarray(importances, dtype=np.float64)
    if len(models) != imps.shape[0]:
        raise DimensionMismatchError(
            f"{len(models)} context models but {imps.shape[0]} importances"
        )
    kept = prune(imps)
    columns = np.empty((test_features.shape[0], kept.size), dtype=np.float64)
    for out_col, ctx_idx in enumerate(kept):
        columns[:, out_col] = score_unified(models[ctx_idx], test_features)
    w = imps[kept]
    total = w.sum()
    if kept.size == 1 or total <= 0:
        return columns[:, 0].copy()
    return columns @ (w / total)


def result_to_json_dict(result: EnsembleResult, context_masks: Sequence[int]) -> dict:
    """JSON-ready form: combiner kind, kept contexts as bitmasks with weights."""
    return {
        "combiner": result.combiner,
        "kept": [
            {
                "context_index": int(i),
                "bitmask": int(context_masks[int(i)]),
                "weight": float(max(result.importances[int(i)], 0.0)),
            }
            for i in result.kept_contexts
        ],
        "scores": [float(s) for s in result.scores],
    }


def score_matrix_with(
    matrix: ScoreMatrix,
    kind: str,
    importances: np.ndarray | None = None,
    true_context_index: int | None = None,
) -> EnsembleResult:
    """Like :func:`combine` but packaged with the pruning decision."""
    final = combine(matrix, kind, importances, true_context_index)
    if kind in ("weighted", "single") and importances is not None:
        imps = np.asarray(importances, dtype=np.float64)
        kept = prune(imps) if kind == "weighted" else np.array([select_single(imps)])
    elif kind == "true" and true_context_index is not None:
        kept = np.array([int(true_context_index)])
        imps = np.zeros(matrix.m) if importances is None else np.asarray(importances)
    else:
        kept = np.arange(matrix.m)
        imps = np.zeros(matrix.m) if importances is None else np.asarray(importances)
    return EnsembleResult(scores=final, kept_contexts=kept, importances=imps, combiner=kind)
