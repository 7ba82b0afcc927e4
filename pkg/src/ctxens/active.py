"""Budgeted label querying and per-context importance estimation.

Starting from the unified training score matrix, a session repeatedly picks
one unlabeled sample (per the configured query strategy), receives its
ground-truth label, and re-estimates how much each context's thresholded
verdicts agree with the labels seen so far. Agreement is summarized as a
weighted detection error and converted to an additive importance via the
half-log-odds transform, so contexts better than coin-flipping get positive
importance and worse-than-random ones go negative.

Query strategies:

``random``
    Uniform over the unqueried pool.
``ce``
    Highest entropy of the importance-weighted consensus probability.
``kl``
    Largest total divergence between member probabilities and the consensus.
``mla``
    Highest importance-weighted vote fraction (most likely anomaly).
``lca``
    Noisy argmax of the margin rate: high-margin samples are ones flagged by
    roughly half the (weighted) committee, i.e. low-confidence candidates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .data import LabeledPool, ScoreMatrix
from .errors import (
    BudgetExceedsPoolError,
    ConfigError,
    EmptyPoolError,
    LabelDomainError,
    PoolExhaustedError,
    QueryMismatchError,
    SessionStateError,
)

__all__ = [
    "STRATEGY_KINDS",
    "EPSILON_FLOOR",
    "KL_SMOOTHING",
    "QueryStrategy",
    "ImportanceState",
    "PendingQuery",
    "AuditRecord",
    "ActiveSession",
    "predictions",
    "detection_error",
    "importance",
    "margin_rate",
    "sample_weight",
    "select_query",
    "run_active_loop",
    "audit_to_jsonl",
]

STRATEGY_KINDS = ("random", "ce", "kl", "mla", "lca")

#: Detection errors are clamped into [floor, 1-floor] before the log-odds.
EPSILON_FLOOR = 1e-6

#: Probability smoothing for the divergence-based strategy.
KL_SMOOTHING = 1e-9

#: Importance value consistent with the all-ones initialization.
_INITIAL_EPSILON = 1.0 / (1.0 + np.e ** 2)


@dataclass(frozen=True)
class QueryStrategy:
    """Which sample to ask about next, and how verdicts are thresholded."""

    kind: str = "lca"
    lam: float = 0.96
    threshold: float = 0.9

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; pick from {STRATEGY_KINDS}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.lam < 0:
            raise ConfigError(f"lam must be non-negative, got {self.lam}")


def predictions(scores: np.ndarray, threshold: float = 0.9) -> np.ndarray:
    """Binary verdicts: a context flags a sample when its score reaches the cutoff."""
    return np.asarray(scores) >= threshold


def detection_error(preds_column: np.ndarray, pool: LabeledPool) -> float:
    """Weighted share of labeled samples this context got wrong.

    Zero-weight pools fall back to 0.5 -- no evidence either way. The result
    is clamped away from {0, 1} so the log-odds stays finite.
    """
    idx = pool.indices()
    if idx.size == 0:
        raise EmptyPoolError("detection error needs at least one labeled sample")
    weights = pool.weights()
    total = weights.sum()
    if total <= 0:
        return 0.5
    wrong = np.asarray(preds_column)[idx].astype(np.int64) != pool.labels()
    eps = float(weights @ wrong) / float(total)
    return float(np.clip(eps, EPSILON_FLOOR, 1.0 - EPSILON_FLOOR))


def importance(epsilons) -> np.ndarray | float:
    """Half log-odds of being right: 0 at chance, negative below it."""
    eps = np.asarray(epsilons, dtype=np.float64)
    out = 0.5 * np.log((1.0 - eps) / eps)
    return float(out) if out.ndim == 0 else out


def _selection_weights(importances: np.ndarray) -> np.ndarray:
    """Non-negative committee weights; uniform when nothing is positive."""
    w = np.maximum(importances, 0.0)
    total = w.sum()
    if total <= 0:
        return np.full(importances.shape[0], 1.0 / importances.shape[0])
    return w / total


def margin_rate(sample_preds: np.ndarray, importances: np.ndarray) -> float:
    """How split the weighted committee is on one sample: 1 = even, 0 = unanimous."""
    w = _selection_weights(np.asarray(importances, dtype=np.float64))
    vote = float(w @ np.asarray(sample_preds, dtype=np.float64))
    return 1.0 - abs(2.0 * vote - 1.0)


def sample_weight(strategy: QueryStrategy, label: int, margin: float) -> float:
    """Error-estimate weight of a fresh label.

    The low-confidence strategy credits anomalies by their margin and mutes
    normal samples entirely; every other strategy weighs all labels equally.
    """
    if strategy.kind == "lca":
        return float(margin) if label == 1 else 0.0
    return 1.0


@dataclass
class ImportanceState:
    """Per-context error/importance estimates plus the pool behind them."""

    epsilons: np.ndarray
    importances: np.ndarray
    pool: LabeledPool
    queried: np.ndarray


def _argmax_with_ties(crit: np.ndarray, rng: np.random.Generator) -> int:
    top = np.flatnonzero(crit == crit.max())
    if top.size == 1:
        return int(top[0])
    return int(top[rng.integers(top.size)])


def _select_core(
    strategy: QueryStrategy,
    importances: np.ndarray,
    queried: np.ndarray,
    scores: np.ndarray,
    preds_f: np.ndarray,
    rng: np.random.Generator,
) -> tuple[int, float, float]:
    """Pick the next query; returns (index, margin, vote_fraction)."""
    cand = np.flatnonzero(~queried)
    if cand.size == 0:
        raise PoolExhaustedError("every sample has been labeled already")
    w = _selection_weights(np.asarray(importances, dtype=np.float64))
    votes = (preds_f[cand] @ w.astype(preds_f.dtype)).astype(np.float64)
    margins = 1.0 - np.abs(2.0 * votes - 1.0)
    kind = strategy.kind

    if kind == "random":
        pos = int(rng.integers(cand.size))
    elif kind == "lca":
        u = 1.0 - rng.random(cand.size)  # in (0, 1]
        pos = int(np.argmax(strategy.lam * 100.0 * margins - np.log(u)))
    elif kind == "mla":
        pos = _argmax_with_ties(votes, rng)
    else:
        consensus = (scores[cand] @ w.astype(scores.dtype)).astype(np.float64)
        if kind == "ce":
            p = np.clip(consensus, 1e-12, 1.0 - 1e-12)
            pos = _argmax_with_ties(-(p * np.log(p) + (1.0 - p) * np.log1p(-p)), rng)
        else:  # kl
            z = KL_SMOOTHING
            member = np.clip(scores[cand].astype(np.float64), z, 1.0 - z)
            pc = np.clip(consensus, z, 1.0 - z)[:, None]
            per_member = member * np.log(member / pc) + (1.0 - member) * np.log(
                (1.0 - member) / (1.0 - pc)
            )
            pos = _argmax_with_ties(per_member.sum(axis=1), rng)

    return int(cand[pos]), float(margins[pos]), float(votes[pos])


def select_query(
    strategy: QueryStrategy,
    state: ImportanceState,
    matrix: ScoreMatrix,
    rng: np.random.Generator | None = None,
) -> int:
    """One-shot selection against an arbitrary state (stepper-free form)."""
    if rng is None:
        rng = np.random.default_rng()
    preds_f = predictions(matrix.scores, strategy.threshold).astype(np.float32)
    idx, _, _ = _select_core(
        strategy, state.importances, state.queried, matrix.scores, preds_f, rng
    )
    return idx


@dataclass(frozen=True)
class PendingQuery:
    iteration: int
    index: int
    margin: float
    vote_fraction: float
    predictions: np.ndarray


@dataclass(frozen=True)
class AuditRecord:
    iteration: int
    index: int
    label: int
    margin: float
    weight: float
    importances_after: np.ndarray


class ActiveSession:
    """Stepper form of the query loop: select, wait for a label, update.

    The same object backs both the in-process loop and the HTTP labeling
    service, so a replayed session reproduces an in-process run bit for bit
    (the RNG is consumed only inside selection).
    """

    def __init__(self, matrix: ScoreMatrix, strategy: QueryStrategy, budget: int, seed: int):
        n, m = matrix.n, matrix.m
        if budget > n:
            raise BudgetExceedsPoolError(budget, n)
        self.strategy = strategy
        self.budget = int(budget)
        self.seed = int(seed)
        self._scores = matrix.scores  # float32 (n, m)
        self._preds = predictions(matrix.scores, strategy.threshold)
        self._preds_f = self._preds.astype(np.float32)
        self._rng = np.random.default_rng(seed)
        self.state = ImportanceState(
            epsilons=np.full(m, _INITIAL_EPSILON),
            importances=np.ones(m),
            pool=LabeledPool(budget),
            queried=np.zeros(n, dtype=bool),
        )
        self.audit: list[AuditRecord] = []
        self.pending: PendingQuery | None = None
        self._select_next()

    # -- querying ------------------------------------------------------------

    @property
    def done(self) -> bool:
        return len(self.state.pool) >= self.budget

    @property
    def iteration(self) -> int:
        return len(self.state.pool)

    def _select_next(self) -> None:
        idx, margin, vote = _select_core(
            self.strategy,
            self.state.importances,
            self.state.queried,
            self._scores,
            self._preds_f,
            self._rng,
        )
        self.pending = PendingQuery(
            iteration=self.iteration,
            index=idx,
            margin=margin,
            vote_fraction=vote,
            predictions=self._preds[idx].copy(),
        )

    # -- labeling ------------------------------------------------------------

    def submit(self, index: int, label: int) -> AuditRecord:
        """Apply one label to the pending query and refresh all estimates."""
        if self.done or self.pending is None:
            raise SessionStateError("the budget is spent; no query is pending")
        if int(index) != self.pending.index:
            raise QueryMismatchError(
                f"pending query is sample {self.pending.index}, got label for {index}"
            )
        if label not in (0, 1):
            raise LabelDomainError(f"label must be 0 or 1, got {label!r}")

        weight = sample_weight(self.strategy, int(label), self.pending.margin)
        pool = self.state.pool
        pool.add(int(index), int(label), weight)
        self.state.queried[int(index)] = True
        eps = self._pool_errors()
        if eps is not None:
            self.state.epsilons = eps
            self.state.importances = importance(eps)

        record = AuditRecord(
            iteration=self.pending.iteration,
            index=int(index),
            label=int(label),
            margin=self.pending.margin,
            weight=weight,
            importances_after=self.state.importances.copy(),
        )
        self.audit.append(record)
        if self.done:
            self.pending = None
        else:
            self._select_next()
        return record

    def _pool_errors(self) -> np.ndarray | None:
        pool = self.state.pool
        weights = pool.weights()
        total = weights.sum()
        if total <= 0:
            # Every label so far is muted (weight 0), so the pool carries no
            # evidence; leave the running estimates exactly where they are.
            return None
        wrong = self._preds[pool.indices()] != pool.labels()[:, None]
        eps = (weights @ wrong) / total
        return np.clip(eps, EPSILON_FLOOR, 1.0 - EPSILON_FLOOR)


def run_active_loop(
    matrix: ScoreMatrix,
    oracle: Callable[[int], int],
    strategy: QueryStrategy,
    budget: int,
    seed: int,
) -> tuple[ImportanceState, list[AuditRecord]]:
    """Drive a full session against a labeling callable (index -> 0/1)."""
    session = ActiveSession(matrix, strategy, budget, seed)
    while not session.done:
        q = session.pending
        session.submit(q.index, int(oracle(q.index)))
    return session.state, session.audit


def audit_to_jsonl(audit: Iterable[AuditRecord], path) -> None:
    """Write the query trail as line-delimited JSON.

    Each line carries the iteration, queried sample, its label/margin/weight
    and the per-context importance deltas produced by that label.
    """
    import json

    prev = None
    with open(path, "w") as fh:
        for rec in audit:
            if prev is None:
                prev = np.ones(rec.importances_after.shape[0])
            delta = rec.importances_after - prev
            prev = rec.importances_after
            fh.write(
                json.dumps(
                    {
                        "iteration": rec.iteration,
                        "sample_index": rec.index,
                        "label": rec.label,
                        "margin": round(rec.margin, 9),
                        "weight": round(rec.weight, 9),
                        "importance_delta": [round(float(v), 9) for v in delta],
                    }
                )
                + "\n"
            )
