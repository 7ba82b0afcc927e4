"""Core containers: datasets, contexts, labeled pools and score matrices.

Everything here is plain data. Arrays are marked read-only on construction so
instances can be shared freely between worker processes and sessions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateClassError,
    EmptyDatasetError,
    EmptyPoolError,
    LabelDomainError,
    LabelLengthMismatchError,
    MissingLabelsError,
    NonFiniteValueError,
)

__all__ = [
    "Context",
    "ContextSet",
    "Dataset",
    "LabeledPool",
    "PoolEntry",
    "ScoreMatrix",
    "validate_dataset",
    "stratified_split",
]


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Context:
    """One bipartition of the feature indices.

    ``contextual`` indices decide which reference group a point belongs to,
    ``behavioral`` indices are the ones judged for abnormality within that
    group. Together they must cover every feature exactly once.
    """

    contextual: tuple[int, ...]
    behavioral: tuple[int, ...]

    def __post_init__(self):
        ctx = tuple(sorted(int(i) for i in self.contextual))
        beh = tuple(sorted(int(i) for i in self.behavioral))
        object.__setattr__(self, "contextual", ctx)
        object.__setattr__(self, "behavioral", beh)
        if not ctx or not beh:
            raise ValueError("both attribute sets must be non-empty")
        d = len(ctx) + len(beh)
        if set(ctx) & set(beh):
            raise ValueError("contextual and behavioral sets overlap")
        if set(ctx) | set(beh) != set(range(d)):
            raise ValueError("attribute sets must cover indices 0..d-1 exactly")

    @property
    def dimension(self) -> int:
        return len(self.contextual) + len(self.behavioral)

    @property
    def mask(self) -> int:
        """Bitmask with one bit per contextual attribute (bit i = feature i)."""
        m = 0
        for i in self.contextual:
            m |= 1 << i
        return m

    @classmethod
    def from_mask(cls, mask: int, dimension: int) -> "Context":
        ctx = tuple(i for i in range(dimension) if mask >> i & 1)
        beh = tuple(i for i in range(dimension) if not mask >> i & 1)
        return cls(ctx, beh)

    def __repr__(self) -> str:  # compact, mask-based
        return f"Context(mask={self.mask:#x}, d={self.dimension})"


@dataclass(frozen=True)
class ContextSet:
    """An ordered collection of contexts over the same feature space."""

    contexts: tuple[Context, ...]
    dimension: int

    def __post_init__(self):
        for c in self.contexts:
            if c.dimension != self.dimension:
                raise ValueError("context dimension mismatch")

    def __len__(self) -> int:
        return len(self.contexts)

    def __iter__(self):
        return iter(self.contexts)

    def __getitem__(self, i: int) -> Context:
        return self.contexts[i]

    def index_of_mask(self, mask: int) -> int:
        for i, c in enumerate(self.contexts):
            if c.mask == mask:
                return i
        raise KeyError(f"no context with mask {mask:#x}")


@dataclass(frozen=True)
class Dataset:
    """A feature matrix with optional ground-truth labels.

    Labels use 1 for anomalies and 0 for normal points. ``true_context`` is
    only present for generated data where the violated bipartition is known.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None
    true_context: Context | None = None
    anomaly_rate: float | None = None

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise MissingLabelsError("this operation needs ground-truth labels")
        return self.labels

    def replace_features(self, features: np.ndarray, feature_names=None) -> "Dataset":
        return Dataset(
            features=_frozen_array(features, np.float64),
            labels=self.labels,
            feature_names=feature_names,
            true_context=None if features.shape[1] != self.d else self.true_context,
            anomaly_rate=self.anomaly_rate,
        )


def validate_dataset(
    features,
    labels=None,
    feature_names: Sequence[str] | None = None,
    true_context: Context | None = None,
    anomaly_rate: float | None = None,
) -> Dataset:
    """Check raw inputs and build an immutable :class:`Dataset`.

    Raises
    ------
    EmptyDatasetError
        No rows or no columns.
    NonFiniteValueError
        A NaN/inf in the features; reports the first offending cell.
    LabelLengthMismatchError, LabelDomainError
        Labels that do not line up with the rows or are outside {0, 1}.
    """
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptyDatasetError(f"expected a non-empty 2-d matrix, got shape {arr.shape}")
    finite = np.isfinite(arr)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise NonFiniteValueError(int(row), int(col))

    lab = None
    if labels is not None:
        lab_arr = np.asarray(labels)
        if lab_arr.ndim != 1 or lab_arr.shape[0] != arr.shape[0]:
            raise LabelLengthMismatchError(arr.shape[0], int(np.size(lab_arr)))
        if lab_arr.dtype.kind == "f" and not np.all(lab_arr == np.floor(lab_arr)):
            raise LabelDomainError("labels must be integers 0 or 1")
        lab = lab_arr.astype(np.int64, copy=True)
        bad = ~np.isin(lab, (0, 1))
        if bad.any():
            raise LabelDomainError(
                f"label {lab[bad][0]!r} at row {int(np.flatnonzero(bad)[0])} is not 0 or 1"
            )
        lab = _frozen_array(lab, np.uint8)

    names = tuple(feature_names) if feature_names is not None else None
    if names is not None and len(names) != arr.shape[1]:
        raise LabelLengthMismatchError(arr.shape[1], len(names))

    return Dataset(
        features=_frozen_array(arr, np.float64),
        labels=lab,
        feature_names=names,
        true_context=true_context,
        anomaly_rate=anomaly_rate,
    )


def stratified_split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split into train/test keeping each class's share within one sample.

    Per-class training counts are the floors of ``fraction * class_size``;
    the remaining slots (up to the overall rounded total) go to the classes
    with the largest fractional parts, ties resolved toward the smaller
    label. Shuffling is governed entirely by ``seed``.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    labels = dataset.require_labels()
    classes = np.unique(labels)
    if classes.size < 2:
        raise DegenerateClassError("need both classes present to stratify")

    rng = np.random.default_rng(seed)
    total_train = int(math.floor(fraction * dataset.n + 0.5))

    sizes = np.array([int(np.sum(labels == c)) for c in classes])
    exact = fraction * sizes
    base = np.floor(exact).astype(int)
    remainder = exact - base
    leftover = total_train - int(base.sum())
    # hand out leftover slots by largest fractional part, smaller label first on ties
    order = np.lexsort((classes, -remainder))
    counts = base.copy()
    for k in range(leftover):
        counts[order[k % len(classes)]] += 1
    counts = np.minimum(counts, sizes)

    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c, take in zip(classes, counts):
        members = np.flatnonzero(labels == c)
        perm = rng.permutation(members.size)
        shuffled = members[perm]
        train_idx.append(shuffled[:take])
        test_idx.append(shuffled[take:])

    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))

    def subset(idx: np.ndarray) -> Dataset:
        return Dataset(
            features=_frozen_array(dataset.features[idx], np.float64),
            labels=_frozen_array(labels[idx], np.uint8),
            feature_names=dataset.feature_names,
            true_context=dataset.true_context,
            anomaly_rate=dataset.anomaly_rate,
        )

    return subset(tr), subset(te)


@dataclass
class PoolEntry:
    index: int
    label: int
    weight: float


class LabeledPool:
    """Labeled samples gathered so far, with their error-estimate weights."""

    def __init__(self, budget: int):
        if budget < 1:
            raise EmptyPoolError(f"budget must be at least 1, got {budget}")
        self.budget = budget
        self.entries: list[PoolEntry] = []
        self._seen: set[int] = set()

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, index: int, label: int, weight: float) -> None:
        if index in self._seen:
            raise ValueError(f"sample {index} already labeled")
        if label not in (0, 1):
            raise LabelDomainError(f"label must be 0 or 1, got {label!r}")
        if not np.isfinite(weight) or weight < 0:
            raise ValueError(f"weight must be finite and non-negative, got {weight}")
        if len(self.entries) >= self.budget:
            raise ValueError("pool already at budget")
        self.entries.append(PoolEntry(int(index), int(label), float(weight)))
        self._seen.add(int(index))

    def indices(self) -> np.ndarray:
        return np.array([e.index for e in self.entries], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.uint8)

    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.entries], dtype=np.float64)


@dataclass(frozen=True)
class ScoreMatrix:
    """Unified anomaly scores: one row per sample, one column per context."""

    scores: np.ndarray
    contexts: ContextSet

    def __post_init__(self):
        s = self.scores
        if s.ndim != 2:
            raise ValueError("scores must be 2-d")
        if s.shape[1] != len(self.contexts):
            raise ValueError(
                f"{s.shape[1]} score columns for {len(self.contexts)} contexts"
            )
        if s.size and (float(s.min()) < 0.0 or float(s.max()) > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        arr = np.ascontiguousarray(s, dtype=np.float32)
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def m(self) -> int:
        return self.scores.shape[1]
