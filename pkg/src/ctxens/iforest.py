"""Isolation forests with array-packed trees.

Trees live in dense heap-indexed arrays (split feature, split threshold,
leaf path length) and are grown level-synchronously across all trees of a
forest at once. This keeps the per-forest Python overhead tiny, which
matters because a single run fits one forest per reference group per
context -- easily six figures of forests on the larger benchmarks.

Scores follow the classic formulation: a point's score is
``2 ** (-E[h] / c(psi))`` where ``E[h]`` is its mean termination depth and
``c(m)`` the expected path length of an unsuccessful BST search among ``m``
points. Scores therefore always land in (0, 1), higher meaning more
isolated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["IsolationForestModel", "average_path_length", "fit_isolation_forest"]

_EULER_GAMMA = 0.5772156649015329


def average_path_length(m) -> np.ndarray:
    """Expected unsuccessful-search depth c(m) for subsets of size ``m``."""
    m = np.asarray(m, dtype=np.float64)
    out = np.zeros(m.shape)
    out = np.where(m == 2, 1.0, out)
    big = m > 2
    mb = np.where(big, m, 3.0)
    out = np.where(big, 2.0 * (np.log(mb - 1.0) + _EULER_GAMMA) - 2.0 * (mb - 1.0) / mb, out)
    return out


@dataclass
class IsolationForestModel:
    """A fitted forest. ``trained_on`` records the feature indices used."""

    n_trees: int
    subsample_size: int
    split_feature: np.ndarray  # (T, nodes) int16, -1 where the node is a leaf
    split_threshold: np.ndarray  # (T, nodes) float32
    leaf_path: np.ndarray  # (T, nodes) float32: depth + c(node size) at leaves
    trained_on: tuple[int, ...] = ()

    @property
    def depth_cap(self) -> int:
        return int(math.log2(self.split_feature.shape[1] + 1)) - 1

    def score(self, X: np.ndarray) -> np.ndarray:
        """Raw anomaly scores in (0, 1) for each row of ``X``."""
        X = np.ascontiguousarray(X, dtype=np.float32)
        n = X.shape[0]
        T = self.n_trees
        if n == 0:
            return np.zeros(0)
        tree_cols = np.arange(T)[None, :]
        rows = np.arange(n)[:, None]
        node = np.zeros((n, T), dtype=np.int32)
        for _ in range(self.depth_cap):
            feat = self.split_feature[tree_cols, node]
            active = feat >= 0
            if not active.any():
                break
            xv = X[rows, np.where(active, feat, 0)]
            thr = self.split_threshold[tree_cols, node]
            nxt = 2 * node + 1 + (xv >= thr)
            node = np.where(active, nxt, node)
        depths = self.leaf_path[tree_cols, node].astype(np.float64)
        mean_depth = depths.mean(axis=1)
        denom = float(average_path_length(self.subsample_size))
        return np.power(2.0, -mean_depth / denom)


def _subsample(n: int, size: int, n_trees: int, rng: np.random.Generator) -> np.ndarray:
    if size >= n:
        return np.tile(np.arange(n), (n_trees, 1))
    # uniform subsets without replacement for every tree in one shot: the
    # `size` smallest of n iid uniforms index a uniformly random subset
    keys = rng.random((n_trees, n))
    return np.argpartition(keys, size, axis=1)[:, :size]


def fit_isolation_forest(
    X: np.ndarray,
    rng: np.random.Generator,
    n_trees: int = 100,
    subsample_cap: int = 256,
    trained_on: tuple[int, ...] = (),
) -> IsolationForestModel:
    """Grow ``n_trees`` fully random trees on subsamples of ``X``.

    Each node picks a uniformly random feature and a uniform threshold
    strictly inside that feature's range over the node's points; nodes stop
    at single points, constant values, or the ``ceil(log2(psi))`` depth cap,
    with the standard ``c(size)`` credit added to capped leaves.
    """
    X = np.ascontiguousarray(X, dtype=np.float32)
    g, p = X.shape
    if g < 2:
        raise ValueError(f"need at least 2 points to fit a forest, got {g}")
    psi = min(subsample_cap, g)
    depth_cap = max(1, math.ceil(math.log2(psi)))
    n_nodes = 2 ** (depth_cap + 1) - 1
    T = n_trees

    split_feature = np.full((T, n_nodes), -1, dtype=np.int16)
    split_threshold = np.zeros((T, n_nodes), dtype=np.float32)
    node_depth = np.floor(np.log2(np.arange(n_nodes) + 1)).astype(np.float32)
    leaf_path = np.tile(node_depth, (T, 1))

    sub = _subsample(g, psi, T, rng)
    flat = X[sub].reshape(T * psi, p)  # point data, indexed (tree, subsample slot)

    # Block state: a block is one (tree, node) group occupying a contiguous
    # slice of `order`; each level rewrites `order` so children stay grouped.
    order = np.arange(T * psi)
    block_tree = np.arange(T, dtype=np.int32)
    block_node = np.zeros(T, dtype=np.int32)
    block_size = np.full(T, psi, dtype=np.int64)

    def finalize_leaves(trees, nodes, sizes, depth):
        leaf_path[trees, nodes] = depth + average_path_length(sizes)

    for depth in range(depth_cap):
        n_blocks = block_tree.shape[0]
        if n_blocks == 0:
            break
        pos = np.zeros(n_blocks, dtype=np.int64)
        np.cumsum(block_size[:-1], out=pos[1:])

        q = rng.integers(0, p, size=n_blocks)
        u = rng.random(n_blocks)

        xq = flat[order, np.repeat(q, block_size)]
        mins = np.minimum.reduceat(xq, pos)
        maxs = np.maximum.reduceat(xq, pos)
        ranges = maxs - mins

        # float32 thresholds up front so the build-time partition agrees
        # bit-for-bit with score-time traversal
        thr = (mins + np.clip(u, 1e-9, 1.0 - 1e-9) * ranges).astype(np.float32)
        go_left = xq < np.repeat(thr, block_size)
        n_left = np.add.reduceat(go_left.astype(np.int64), pos)
        # size-1 blocks, constant values and rounding-degenerate thresholds
        # all end here as leaves
        splittable = (block_size >= 2) & (ranges > 0) & (n_left > 0) & (n_left < block_size)

        leafy = ~splittable
        if leafy.any():
            finalize_leaves(block_tree[leafy], block_node[leafy], block_size[leafy], depth)
        if not splittable.any():
            block_tree = block_tree[:0]
            break

        split_feature[block_tree[splittable], block_node[splittable]] = q[splittable].astype(np.int16)
        split_threshold[block_tree[splittable], block_node[splittable]] = thr[splittable]

        # Stable partition of every splittable block into (left, right) children.
        keep_point = np.repeat(splittable, block_size)
        kept_sizes = block_size[splittable]
        kept_left = n_left[splittable]
        kept_starts = np.zeros(kept_sizes.shape[0], dtype=np.int64)
        np.cumsum(kept_sizes[:-1], out=kept_starts[1:])

        child_sizes = np.empty(2 * kept_sizes.shape[0], dtype=np.int64)
        child_sizes[0::2] = kept_left
        child_sizes[1::2] = kept_sizes - kept_left
        child_pos = np.zeros(child_sizes.shape[0], dtype=np.int64)
        np.cumsum(child_sizes[:-1], out=child_pos[1:])

        gl = go_left[keep_point]
        pb = np.repeat(np.arange(kept_sizes.shape[0]), kept_sizes)
        idx_in_block = np.arange(gl.shape[0]) - np.repeat(kept_starts, kept_sizes)
        cums = np.cumsum(gl)
        cums_before = np.where(kept_starts > 0, cums[np.maximum(kept_starts - 1, 0)], 0)
        left_rank = cums - np.repeat(cums_before, kept_sizes)  # 1-based among lefts
        right_rank = (idx_in_block + 1) - left_rank
        dest = np.where(
            gl,
            child_pos[2 * pb] + left_rank - 1,
            child_pos[2 * pb + 1] + right_rank - 1,
        )
        new_order = np.empty(gl.shape[0], dtype=np.int64)
        new_order[dest] = order[keep_point]

        order = new_order
        block_tree = np.repeat(block_tree[splittable], 2)
        parent_nodes = block_node[splittable]
        block_node = np.empty(2 * parent_nodes.shape[0], dtype=np.int32)
        block_node[0::2] = 2 * parent_nodes + 1
        block_node[1::2] = 2 * parent_nodes + 2
        block_size = child_sizes

    # blocks that survived to the cap keep their population credit
    if block_tree.shape[0]:
        finalize_leaves(block_tree, block_node, block_size, depth_cap)

    return IsolationForestModel(
        n_trees=T,
        subsample_size=psi,
        split_feature=split_feature,
        split_threshold=split_threshold,
        leaf_path=leaf_path,
        trained_on=tuple(trained_on),
    )
