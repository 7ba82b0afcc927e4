"""Context enumeration and dimensionality reduction.

For d features every proper, non-empty subset of attributes can act as the
contextual side of a bipartition, giving 2**d - 2 candidate contexts. That
is only tractable for modest d, so wider datasets are first projected onto
their leading principal components and contexts are enumerated in the
reduced space.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Context, ContextSet
from .errors import (
    DimensionMismatchError,
    DimensionTooLargeError,
    DimensionTooSmallError,
    EmptyDatasetError,
    RankDeficientWarning,
)

__all__ = [
    "MAX_ENUMERABLE_DIM",
    "enumerate_contexts",
    "Standardizer",
    "fit_standardizer",
    "PcaProjection",
    "fit_pca",
    "apply_pca",
]

#: Largest feature count for which all bipartitions are enumerated.
MAX_ENUMERABLE_DIM = 14


def enumerate_contexts(dimension: int) -> ContextSet:
    """All 2**d - 2 context/behavior bipartitions of ``d`` features.

    Contexts are ordered by ascending contextual-attribute bitmask, so the
    layout is stable across runs and machines.
    """
    d = int(dimension)
    if d < 2:
        raise DimensionTooSmallError(
            f"need at least 2 features to form a context, got {d}"
        )
    if d > MAX_ENUMERABLE_DIM:
        raise DimensionTooLargeError(
            f"{d} features would give {2 ** d - 2} contexts; "
            f"reduce to at most {MAX_ENUMERABLE_DIM} dimensions first"
        )
    contexts = tuple(Context.from_mask(m, d) for m in range(1, 2 ** d - 1))
    return ContextSet(contexts=contexts, dimension=d)


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring with statistics taken from the training split."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        if features.shape[1] != self.mean.shape[0]:
            raise DimensionMismatchError(
                f"expected {self.mean.shape[0]} columns, got {features.shape[1]}"
            )
        return (features - self.mean) / self.std


def fit_standardizer(features: np.ndarray) -> Standardizer:
    if features.shape[0] == 0:
        raise EmptyDatasetError("cannot standardize an empty matrix")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0, std, 1.0)  # constant columns pass through unscaled
    return Standardizer(mean=mean, std=std)


@dataclass(frozen=True)
class PcaProjection:
    """Top-k principal directions of the (centered) training features."""

    mean: np.ndarray
    components: np.ndarray  # (k, d), rows orthonormal

    @property
    def k(self) -> int:
        return self.components.shape[0]


def fit_pca(features: np.ndarray, k: int) -> PcaProjection:
    """Fit a k-component projection via SVD of the centered training matrix.

    If the data has fewer than ``k`` non-negligible singular values the
    projection is truncated to the actual rank and a
    :class:`RankDeficientWarning` is emitted.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a projection on an empty matrix")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    k = min(k, X.shape[1], X.shape[0])
    mean = X.mean(axis=0)
    centered = X - mean
    # full_matrices=False keeps this O(n d min(n, d))
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    tol = singular[0] * max(X.shape) * np.finfo(np.float64).eps if singular.size else 0.0
    rank = int(np.sum(singular > tol))
    if rank < k:
        warnings.warn(
            f"requested {k} components but data rank is {rank}; truncating",
            RankDeficientWarning,
        )
        k = max(rank, 1)
    components = vt[:k]
    return PcaProjection(mean=mean, components=np.ascontiguousarray(components))


def apply_pca(projection: PcaProjection, features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != projection.mean.shape[0]:
        raise DimensionMismatchError(
            f"expected {projection.mean.shape[0]} columns, got {X.shape[1] if X.ndim == 2 else X.shape}"
        )
    return (X - projection.mean) @ projection.components.T
