"""Synthetic benchmark generators, anomaly injection and CSV ingestion.

Two families of generated data:

* ``generate_conditional`` builds points whose behavior is a function of
  context: contextual coordinates come from one Gaussian mixture, behavioral
  coordinates from another, and a fixed bijection couples the two component
  choices. Anomalies are extra rows where that coupling is deliberately
  broken for one declared feature bipartition, so each anomaly is invisible
  marginally but wrong for its reference group.
* ``generate_global`` builds the classic easy case: tight isotropic blobs
  plus sparse uniform box noise, where anomalies are obvious without any
  context.

``inject_behavioral_swaps`` retrofits contextual anomalies onto real data by
swapping a row's behavioral attributes with those of a behaviorally distant
donor row while keeping its contextual attributes.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .data import Context, Dataset, validate_dataset
from .errors import (
    InfeasibleFractionError,
    InfeasibleSpecError,
    LabelDomainError,
    MissingColumnError,
    ParseError,
)

__all__ = [
    "ContextBlock",
    "GeneratorSpec",
    "assign_block_dims",
    "generate_conditional",
    "generate_global",
    "inject_behavioral_swaps",
    "builtin_dataset",
    "BUILTIN_DATASETS",
    "load_csv",
    "save_csv",
    "save_manifest",
]


@dataclass(frozen=True)
class ContextBlock:
    """One declared bipartition in a conditional-anomaly spec.

    ``n_contextual``/``n_behavioral`` are attribute counts; the concrete
    feature indices are assigned deterministically (see
    :func:`assign_block_dims`). Component counts describe the mixtures over
    each side; only the first block's mixtures generate data, so only there
    do they have to agree (the component coupling is a bijection).
    """

    n_contextual: int
    n_behavioral: int
    n_anomalies: int = 0
    n_contextual_components: int = 5
    n_behavioral_components: int = 5

    def __post_init__(self):
        if self.n_contextual < 1 or self.n_behavioral < 1:
            raise InfeasibleSpecError("each block needs at least one attribute per side")
        if self.n_anomalies < 0:
            raise InfeasibleSpecError("anomaly count cannot be negative")
        if self.n_contextual_components < 1 or self.n_behavioral_components < 1:
            raise InfeasibleSpecError("component counts must be positive")


@dataclass(frozen=True)
class GeneratorSpec:
    """Conditional-anomaly generator parameters.

    Per-dimension Gaussian variance is ``spread_factor`` times the mean
    pairwise distance between the relevant mixture's centroids, so cluster
    tightness scales with how far apart the centroids landed.
    """

    n_normal: int
    blocks: tuple[ContextBlock, ...]
    spread_factor: float = 0.25
    centroid_low: float = 0.0
    centroid_high: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise InfeasibleSpecError("at least one context block is required")
        if self.n_normal < 1:
            raise InfeasibleSpecError("n_normal must be positive")
        d = self.dimension
        for i, b in enumerate(self.blocks):
            if b.n_contextual + b.n_behavioral != d:
                raise InfeasibleSpecError(
                    f"block {i} covers {b.n_contextual + b.n_behavioral} attributes, "
                    f"expected {d}"
                )
        base = self.blocks[0]
        if base.n_contextual_components != base.n_behavioral_components:
            raise InfeasibleSpecError(
                "the generating block needs equal component counts on both sides "
                "(the coupling between them is a bijection)"
            )
        if self.total_anomalies and base.n_contextual_components < 2:
            raise InfeasibleSpecError(
                "anomalies need at least two components to draw a wrong one from"
            )
        if not self.centroid_high > self.centroid_low:
            raise InfeasibleSpecError("centroid range is empty")
        if self.spread_factor <= 0:
            raise InfeasibleSpecError("spread_factor must be positive")

    @property
    def dimension(self) -> int:
        return self.blocks[0].n_contextual + self.blocks[0].n_behavioral

    @property
    def total_anomalies(self) -> int:
        return sum(b.n_anomalies for b in self.blocks)


def assign_block_dims(spec: GeneratorSpec) -> list[Context]:
    """Deterministic feature bipartition for each block.

    The first block takes the canonical layout (contextual attributes first,
    behavioral last). Every later block marks as behavioral the attributes
    least often used as behavioral so far (ties broken by ascending index),
    which maximizes overlap variety between the declared contexts.
    """
    d = spec.dimension
    used_as_behavioral = np.zeros(d, dtype=np.int64)
    out: list[Context] = []
    for i, block in enumerate(spec.blocks):
        if i == 0:
            beh = np.arange(block.n_contextual, d)
        else:
            order = np.lexsort((np.arange(d), used_as_behavioral))
            beh = np.sort(order[: block.n_behavioral])
        used_as_behavioral[beh] += 1
        ctx = np.setdiff1d(np.arange(d), beh)
        out.append(Context(tuple(int(v) for v in ctx), tuple(int(v) for v in beh)))
    return out


def _mixture_variance(centroids: np.ndarray, spread: float, span: float) -> float:
    """Per-dimension variance: spread x mean pairwise centroid distance."""
    k = centroids.shape[0]
    if k < 2:
        return spread * span / 2.0
    diffs = centroids[:, None, :] - centroids[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=2))
    mean_dist = dists[np.triu_indices(k, 1)].mean()
    return spread * float(mean_dist)


def _pick_different(rng: np.random.Generator, current: np.ndarray, k: int) -> np.ndarray:
    """For each entry, a uniform component index different from it (k >= 2)."""
    draw = rng.integers(0, k - 1, size=current.shape[0])
    return np.where(draw >= current, draw + 1, draw)


def generate_conditional(spec: GeneratorSpec, seed: int) -> tuple[Dataset, dict]:
    """Sample a conditional-anomaly dataset; returns (dataset, manifest).

    Normal rows: pick contextual component ``i`` uniformly, draw contextual
    coordinates around its centroid and behavioral coordinates around the
    coupled centroid ``f(i)``. Anomalous rows (appended after the normals)
    start as a fresh normal draw; then, for their target block, behavioral
    attributes that the generating mixtures cover are redrawn from a
    *different* component on each side, so the row contradicts its context
    exactly along that block's behavioral attributes.
    """
    rng = np.random.default_rng(seed)
    contexts = assign_block_dims(spec)
    base_block = spec.blocks[0]
    base_ctx = contexts[0]
    c_dims = np.array(base_ctx.contextual, dtype=np.int64)
    b_dims = np.array(base_ctx.behavioral, dtype=np.int64)
    k = base_block.n_contextual_components

    cent_u = rng.uniform(spec.centroid_low, spec.centroid_high, (k, c_dims.size))
    cent_v = rng.uniform(spec.centroid_low, spec.centroid_high, (k, b_dims.size))
    span = spec.centroid_high - spec.centroid_low
    var_u = _mixture_variance(cent_u, spec.spread_factor, span)
    var_v = _mixture_variance(cent_v, spec.spread_factor, span)
    coupling = rng.permutation(k)

    n_anom = spec.total_anomalies
    total = spec.n_normal + n_anom
    X = np.empty((total, spec.dimension), dtype=np.float64)

    comp = rng.integers(0, k, size=spec.n_normal)
    X[: spec.n_normal][:, c_dims] = cent_u[comp] + rng.normal(
        0.0, math.sqrt(var_u), (spec.n_normal, c_dims.size)
    )
    X[: spec.n_normal][:, b_dims] = cent_v[coupling[comp]] + rng.normal(
        0.0, math.sqrt(var_v), (spec.n_normal, b_dims.size)
    )

    anomaly_meta: list[dict] = []
    row = spec.n_normal
    for block_idx, block in enumerate(spec.blocks):
        if block.n_anomalies == 0:
            continue
        na = block.n_anomalies
        ai = rng.integers(0, k, size=na)
        base_pts = np.empty((na, spec.dimension))
        base_pts[:, c_dims] = cent_u[ai] + rng.normal(0.0, math.sqrt(var_u), (na, c_dims.size))
        base_pts[:, b_dims] = cent_v[coupling[ai]] + rng.normal(
            0.0, math.sqrt(var_v), (na, b_dims.size)
        )
        # Redraw the block's behavioral attributes from mismatched components.
        target_beh = np.array(contexts[block_idx].behavioral, dtype=np.int64)
        wrong_v = _pick_different(rng, coupling[ai], k)
        wrong_u = _pick_different(rng, ai, k)
        swap_b = np.intersect1d(target_beh, b_dims)
        if swap_b.size:
            cols = np.searchsorted(b_dims, swap_b)
            base_pts[:, swap_b] = cent_v[wrong_v][:, cols] + rng.normal(
                0.0, math.sqrt(var_v), (na, swap_b.size)
            )
        swap_c = np.intersect1d(target_beh, c_dims)
        if swap_c.size:
            cols = np.searchsorted(c_dims, swap_c)
            base_pts[:, swap_c] = cent_u[wrong_u][:, cols] + rng.normal(
                0.0, math.sqrt(var_u), (na, swap_c.size)
            )
        X[row : row + na] = base_pts
        anomaly_meta.append(
            {
                "block": block_idx,
                "rows": [int(row), int(row + na)],
                "base_component": [int(v) for v in ai],
                "behavioral_component": [int(v) for v in wrong_v],
                "contextual_component": [int(v) for v in wrong_u],
            }
        )
        row += na

    labels = np.zeros(total, dtype=np.uint8)
    labels[spec.n_normal :] = 1
    names = tuple(f"f{i}" for i in range(spec.dimension))
    dataset = validate_dataset(
        X,
        labels,
        feature_names=names,
        true_context=base_ctx,
        anomaly_rate=(n_anom / total) if n_anom else None,
    )
    manifest = {
        "kind": "conditional",
        "seed": int(seed),
        "n_rows": int(total),
        "n_normal": int(spec.n_normal),
        "dimension": int(spec.dimension),
        "true_context_bitmask": int(base_ctx.mask),
        "blocks": [
            {
                "index": i,
                "contextual_dims": list(contexts[i].contextual),
                "behavioral_dims": list(contexts[i].behavioral),
                "bitmask": int(contexts[i].mask),
                "n_anomalies": int(b.n_anomalies),
            }
            for i, b in enumerate(spec.blocks)
        ],
        "component_coupling": [int(v) for v in coupling],
        "normal_component": [int(v) for v in comp],
        "variance_contextual": float(var_u),
        "variance_behavioral": float(var_v),
        "centroids_contextual": cent_u.tolist(),
        "centroids_behavioral": cent_v.tolist(),
        "anomalies": anomaly_meta,
    }
    return dataset, manifest


def generate_global(
    n: int = 5100,
    dimension: int = 10,
    n_clusters: int = 5,
    anomaly_fraction: float = 0.02,
    seed: int = 0,
) -> tuple[Dataset, dict]:
    """Isotropic Gaussian blobs of uneven sizes plus uniform box outliers."""
    if n_clusters < 1:
        raise InfeasibleSpecError("need at least one cluster")
    if not 0.0 <= anomaly_fraction < 1.0:
        raise InfeasibleFractionError(f"anomaly fraction {anomaly_fraction} not in [0, 1)")
    rng = np.random.default_rng(seed)
    n_anom = int(round(n * anomaly_fraction))
    n_norm = n - n_anom
    if n_norm < n_clusters:
        raise InfeasibleSpecError("more clusters than normal points")

    weights = rng.dirichlet(np.full(n_clusters, 2.0))
    sizes = np.maximum(1, np.floor(weights * n_norm).astype(np.int64))
    while sizes.sum() > n_norm:
        sizes[int(np.argmax(sizes))] -= 1
    sizes[int(np.argmax(sizes))] += n_norm - sizes.sum()

    low, high = 0.0, 10.0
    centers = rng.uniform(low, high, (n_clusters, dimension))
    stds = rng.uniform(0.5, 1.5, n_clusters)
    parts = [
        centers[c] + rng.normal(0.0, stds[c], (int(sizes[c]), dimension))
        for c in range(n_clusters)
    ]
    outliers = rng.uniform(low - 2.0, high + 2.0, (n_anom, dimension))
    X = np.vstack(parts + [outliers]) if n_anom else np.vstack(parts)
    labels = np.zeros(n, dtype=np.uint8)
    labels[n_norm:] = 1
    dataset = validate_dataset(
        X,
        labels,
        feature_names=tuple(f"f{i}" for i in range(dimension)),
        anomaly_rate=(n_anom / n) if n_anom else None,
    )
    manifest = {
        "kind": "global",
        "seed": int(seed),
        "n_rows": int(n),
        "n_normal": int(n_norm),
        "dimension": int(dimension),
        "cluster_sizes": [int(s) for s in sizes],
        "cluster_stds": [float(s) for s in stds],
        "centers": centers.tolist(),
    }
    return dataset, manifest


def inject_behavioral_swaps(
    dataset: Dataset,
    context: Context,
    fraction: float,
    seed: int,
    candidate_pool: int = 100,
) -> tuple[Dataset, dict]:
    """Make ceil(fraction*n) rows contextually anomalous by donor swapping.

    Each selected row keeps its contextual attributes but adopts the
    behavioral attributes of the most behaviorally distant row among a
    random candidate sample (distances in z-scored behavioral space, donors
    taken from the unmodified matrix). Existing labels are ignored; the
    output labels mark exactly the swapped rows.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InfeasibleFractionError(f"fraction {fraction} not in [0, 1]")
    n = dataset.n
    beh = np.array(context.behavioral, dtype=np.int64)
    if beh.max(initial=-1) >= dataset.d:
        raise InfeasibleSpecError("context references attributes beyond the data")
    k = math.ceil(fraction * n)
    rng = np.random.default_rng(seed)
    X = np.array(dataset.features, dtype=np.float64)
    original = X.copy()

    B = original[:, beh]
    std = B.std(axis=0)
    std[std == 0] = 1.0
    ZB = (B - B.mean(axis=0)) / std

    targets = rng.choice(n, size=k, replace=False) if k else np.empty(0, dtype=np.int64)
    donors = np.empty(k, dtype=np.int64)
    for j, t in enumerate(targets):
        cand = rng.choice(n, size=min(candidate_pool, n), replace=False)
        cand = cand[cand != t]
        if cand.size == 0:
            cand = np.array([(t + 1) % n])
        dist = ((ZB[cand] - ZB[t]) ** 2).sum(axis=1)
        donor = int(cand[int(np.argmax(dist))])
        donors[j] = donor
        X[t, beh] = original[donor, beh]

    labels = np.zeros(n, dtype=np.uint8)
    labels[targets] = 1
    out = validate_dataset(
        X,
        labels,
        feature_names=dataset.feature_names,
        true_context=context,
        anomaly_rate=(k / n) if k else None,
    )
    manifest = {
        "kind": "perturbed",
        "seed": int(seed),
        "n_rows": int(n),
        "n_injected": int(k),
        "true_context_bitmask": int(context.mask),
        "targets": [int(t) for t in targets],
        "donors": [int(d) for d in donors],
    }
    return out, manifest


# -- canned benchmark datasets -------------------------------------------------

def _spec_one_block(n_normal: int, n_anomalies: int, per_side: int = 5) -> GeneratorSpec:
    return GeneratorSpec(
        n_normal=n_normal,
        blocks=(ContextBlock(per_side, per_side, n_anomalies=n_anomalies),),
    )


_S2_BLOCKS = ((5, 5), (6, 4), (7, 3))


def _spec_three_blocks(n_normal: int, counts: tuple[int, int, int]) -> GeneratorSpec:
    return GeneratorSpec(
        n_normal=n_normal,
        blocks=tuple(
            ContextBlock(c, b, n_anomalies=a) for (c, b), a in zip(_S2_BLOCKS, counts)
        ),
    )


BUILTIN_DATASETS = (
    "synthetic1",
    "synthetic1-small",
    "synthetic2",
    "synthetic2-heavy",
    "synthetic3",
    "synthetic4",
)


def builtin_dataset(name: str, seed: int = 0) -> tuple[Dataset, dict]:
    """The bundled benchmark configurations, generated on demand.

    ``synthetic1``        one 5/5 context, 25,000 normals + 1% anomalies
    ``synthetic1-small``  same shape at 5,000 normals + 1% (for quick runs)
    ``synthetic2``        three contexts (5/5, 6/4, 7/3), 5,000 normals,
                          anomaly counts (50, 30, 20)
    ``synthetic2-heavy``  same contexts with counts (500, 300, 200)
    ``synthetic3``        one 25/25 context in 50 dimensions, 5,000 normals
                          + 100 anomalies (exercises the projection path)
    ``synthetic4``        context-free blobs + uniform outliers, 5,100 rows
    """
    if name == "synthetic1":
        return generate_conditional(_spec_one_block(25000, 250), seed)
    if name == "synthetic1-small":
        return generate_conditional(_spec_one_block(5000, 50), seed)
    if name == "synthetic2":
        return generate_conditional(_spec_three_blocks(5000, (50, 30, 20)), seed)
    if name == "synthetic2-heavy":
        return generate_conditional(_spec_three_blocks(5000, (500, 300, 200)), seed)
    if name == "synthetic3":
        return generate_conditional(_spec_one_block(5000, 100, per_side=25), seed)
    if name == "synthetic4":
        return generate_global(seed=seed)
    raise InfeasibleSpecError(
        f"unknown dataset {name!r}; available: {', '.join(BUILTIN_DATASETS)}"
    )


# -- CSV + manifest I/O --------------------------------------------------------

def load_csv(path, label_column: str | None = None) -> Dataset:
    """Read a headered numeric CSV; the label column is optional.

    With the default ``label_column=None`` a column named ``label`` is used
    when present and silently skipped when absent (unlabeled data). Passing
    an explicit name makes that column mandatory. Cell coordinates in errors
    are 1-based file line and column numbers.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, 1, "file is empty") from None
        header = [h.strip() for h in header]
        wanted = "label" if label_column is None else label_column
        label_idx = None
        if wanted in header:
            label_idx = header.index(wanted)
        elif label_column is not None:
            raise MissingColumnError(label_column)
        feat_cols = [i for i in range(len(header)) if i != label_idx]

        rows: list[list[float]] = []
        labels: list[int] = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != len(header):
                raise ParseError(line_no, len(rec) + 1, f"expected {len(header)} fields, got {len(rec)}")
            vals = []
            for col in feat_cols:
                cell = rec[col].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(line_no, col + 1, f"not a number: {cell!r}") from None
            rows.append(vals)
            if label_idx is not None:
                cell = rec[label_idx].strip()
                if cell not in ("0", "1"):
                    raise LabelDomainError(
                        f"label {cell!r} at line {line_no} is not 0 or 1"
                    )
                labels.append(int(cell))

    if not rows:
        raise ParseError(2, 1, "no data rows")
    names = tuple(header[i] for i in feat_cols)
    return validate_dataset(
        np.array(rows, dtype=np.float64),
        np.array(labels, dtype=np.uint8) if label_idx is not None else None,
        feature_names=names,
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write a headered CSV; adds a ``label`` column when labels exist."""
    names = dataset.feature_names or tuple(f"f{i}" for i in range(dataset.d))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        labeled = dataset.labels is not None
        writer.writerow(list(names) + (["label"] if labeled else []))
        for i in range(dataset.n):
            row = [format(v, ".10g") for v in dataset.features[i]]
            if labeled:
                row.append(str(int(dataset.labels[i])))
            writer.writerow(row)


def save_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
