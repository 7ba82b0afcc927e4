"""Cluster-count-free k-means: recursive 2-means splits kept only when BIC improves.

The splitting search follows the classic scheme: start from one cluster,
try to split each cluster in two with k-means++ (best of ten restarts), and
accept the split when the two-cluster model of that cluster's points scores
a higher Bayesian information criterion than the one-cluster model. A final
full-data Lloyd pass polishes the accepted centroids, which also guarantees
every point sits with its nearest centroid.

The model behind the BIC is identical spherical Gaussians with a shared
variance and hard assignments; larger is better.
"""
from __future__ import annotations

import numpy as np

__all__ = ["kmeans", "xmeans", "bic_score"]


def _assign(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2 ; the ||x||^2 term is constant
    # per row and drops out of the argmin.
    d2 = -2.0 * X @ centers.T + np.einsum("ij,ij->i", centers, centers)
    return np.argmin(d2, axis=1)


def _update_centers(X: np.ndarray, labels: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(labels, minlength=k)
    sums = np.empty((k, X.shape[1]))
    for j in range(X.shape[1]):
        sums[:, j] = np.bincount(labels, weights=X[:, j], minlength=k)
    centers = (sums / np.maximum(counts, 1)[:, None]).astype(X.dtype)
    return centers, counts


def _plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = X[rng.integers(n)]
            continue
        probs = d2 / total
        centers[i] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((X - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(
    X: np.ndarray, centers: np.ndarray, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray, float]:
    k = centers.shape[0]
    labels = _assign(X, centers)
    for _ in range(max_iter):
        centers, counts = _update_centers(X, labels, k)
        # revive empty clusters at the point currently farthest from its center
        for empty in np.flatnonzero(counts == 0):
            far = np.argmax(np.sum((X - centers[labels]) ** 2, axis=1))
            centers[empty] = X[far]
        new_labels = _assign(X, centers)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    inertia = float(np.sum((X - centers[labels]) ** 2))
    return centers, labels, inertia


def kmeans(
    X: np.ndarray, k: int, rng: np.random.Generator, n_init: int = 10
) -> tuple[np.ndarray, np.ndarray, float]:
    """Best of ``n_init`` k-means++ starts. Returns (centers, labels, inertia)."""
    best = None
    for _ in range(n_init):
        centers = _plus_plus_init(X, k, rng)
        centers, labels, inertia = _lloyd(X, centers)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    return best


def bic_score(X: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    """BIC of a hard spherical-Gaussian mixture fit; larger is better."""
    n, d = X.shape
    k = centers.shape[0]
    if n <= k:
        return -np.inf
    rss = float(np.sum((X - centers[labels]) ** 2))
    var = max(rss / (d * (n - k)), 1e-12)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    counts = counts[counts > 0]
    log_lik = (
        float(np.sum(counts * np.log(counts)))
        - n * np.log(n)
        - n * d / 2.0 * np.log(2.0 * np.pi * var)
        - d * (n - k) / 2.0
    )
    n_params = k * (d + 1)  # centroid coordinates, mixing weights, shared variance
    return log_lik - n_params / 2.0 * np.log(n)


def xmeans(
    X: np.ndarray,
    max_clusters: int,
    rng: np.random.Generator,
    min_split_size: int = 4,
    n_init: int = 4,
) -> tuple[np.ndarray, np.ndarray]:
    """Grow clusters by BIC-accepted 2-means splits, then polish globally.

    Split attempts use up to ``n_init`` k-means++ restarts (four is already
    overkill for 2-means; the cap is ten). Returns (centers, labels) with
    1 <= len(centers) <= max_clusters and labels equal to each point's
    nearest centroid.
    """
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty matrix")
    centers = [X.mean(axis=0)]
    labels = np.zeros(n, dtype=np.int64)

    while len(centers) < max_clusters:
        improved = False
        for ci in range(len(centers)):
            if len(centers) >= max_clusters:
                break
            members = np.flatnonzero(labels == ci)
            if members.size < min_split_size:
                continue
            pts = X[members]
            parent = pts.mean(axis=0)[None, :]
            pair, sub_labels, _ = kmeans(pts, 2, rng, n_init=n_init)
            if np.bincount(sub_labels, minlength=2).min() == 0:
                continue
            if bic_score(pts, pair, sub_labels) > bic_score(
                pts, parent, np.zeros(members.size, dtype=np.int64)
            ):
                centers[ci] = pair[0]
                centers.append(pair[1])
                labels[members[sub_labels == 1]] = len(centers) - 1
                improved = True
        if not improved:
            break

    final_centers, final_labels, _ = _lloyd(X, np.asarray(centers))
    # drop clusters emptied by the polish and compact the labeling
    counts = np.bincount(final_labels, minlength=final_centers.shape[0])
    keep = np.flatnonzero(counts > 0)
    remap = np.full(final_centers.shape[0], -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    return final_centers[keep], remap[final_labels]
