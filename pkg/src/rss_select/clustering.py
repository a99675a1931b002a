"""Feature parcellation by k-means over per-feature sample profiles.

Each feature becomes a vector of its standardized values across samples,
optionally extended with weighted grid coordinates so clusters prefer
spatial contiguity. Lloyd's algorithm runs from k-means++ starts; empty
clusters are reseeded with the point currently farthest from its centroid,
which keeps the within-cluster sum of squares non-increasing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, Parcellation, RngStream
from .solver import standardize_columns


@dataclass(frozen=True)
class ClusterConfig:
    """Parcellation settings: target cluster count and k-means knobs."""

    q: int
    seed: RngStream
    restarts: int = 10
    max_lloyd_iters: int = 300
    spatial_weight: float = 0.0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")
        if self.max_lloyd_iters < 1:
            raise ValueError("max_lloyd_iters must be positive")
        if not self.spatial_weight >= 0:
            raise ValueError("spatial_weight must be non-negative")


def build_feature_vectors(dataset: Dataset, spatial_weight: float = 0.0) -> np.ndarray:
    """Per-feature clustering vectors: standardized sample profile per row.

    Returns a p×n matrix (constant features become zero rows), or p×(n+3)
    when ``spatial_weight > 0``: each grid axis is scaled to [0, 1] and
    multiplied by the weight, so the weight is relative to standardized
    signal entries of unit variance.
    """
    if not spatial_weight >= 0:
        raise ValueError("spatial_weight must be non-negative")
    Z, _, _, keep = standardize_columns(dataset.X)
    vectors = np.zeros((dataset.p, dataset.n))
    vectors[keep] = Z.T
    if spatial_weight > 0:
        if dataset.geometry is None:
            raise ValueError("spatial_weight > 0 requires grid geometry")
        denom = np.maximum(np.asarray(dataset.geometry.dims) - 1, 1)
        coords = dataset.geometry.mask / denom
        vectors = np.hstack([vectors, spatial_weight * coords])
    return vectors


def _kmeanspp(features, q, rng):
    npts = features.shape[0]
    centers = np.empty((q, features.shape[1]))
    centers[0] = features[rng.integers(npts)]
    d2 = ((features - centers[0]) ** 2).sum(axis=1)
    for j in range(1, q):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(npts, p=d2 / total)
        else:
            idx = rng.integers(npts)  # all points coincide with a center
        centers[j] = features[idx]
        d2 = np.minimum(d2, ((features - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(features, centers, max_iters):
    """Lloyd iterations with deterministic empty-cluster repair.

    Returns (assignment, inertia, history); history holds the WCSS after
    each center update and is non-increasing.
    """
    npts = features.shape[0]
    q = centers.shape[0]
    centers = centers.copy()
    sq_all = float((features**2).sum())
    prev = None
    history = []
    assign = np.zeros(npts, dtype=np.int64)
    for _ in range(max_iters):
        d = (
            (features**2).sum(axis=1)[:, None]
            - 2.0 * (features @ centers.T)
            + (centers**2).sum(axis=1)[None, :]
        )
        assign = d.argmin(axis=1)  # ties go to the lowest cluster id
        counts = np.bincount(assign, minlength=q)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            d_own = d[np.arange(npts), assign]
            for e in empties:
                # reseed with the farthest point whose cluster keeps a member
                eligible = counts[assign] > 1
                cand = np.where(eligible, d_own, -np.inf)
                far = int(cand.argmax())
                counts[assign[far]] -= 1
                assign[far] = e
                counts[e] = 1
                centers[e] = features[far]
                d_own[far] = 0.0
        if prev is not None and np.array_equal(assign, prev):
            break
        prev = assign
        sums = np.zeros((q, features.shape[1]))
        np.add.at(sums, assign, features)
        centers = sums / counts[:, None]
        # WCSS identity: sum ||x||^2 - sum_g n_g ||mean_g||^2
        history.append(sq_all - float((counts * (centers**2).sum(axis=1)).sum()))
    return assign, history[-1], history


def kmeans(features, config: ClusterConfig) -> Parcellation:
    """Best-of-restarts k-means, deterministic for a given seed.

    Restarts run sequentially on the configured stream; the assignment with
    the lowest within-cluster sum of squares wins, first winner on ties.
    """
    features = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("features must be a non-empty 2-D matrix")
    if not np.isfinite(features).all():
        raise ValueError("features contain NaN or Inf")
    if config.q > features.shape[0]:
        raise ValueError(f"q={config.q} exceeds the number of features {features.shape[0]}")
    rng = config.seed.generator()
    best_assign, best_inertia = None, np.inf
    for _ in range(config.restarts):
        centers = _kmeanspp(features, config.q, rng)
        assign, inertia, _ = _lloyd(features, centers, config.max_lloyd_iters)
        if inertia < best_inertia:
            best_assign, best_inertia = assign, inertia
    return Parcellation(assignment=best_assign, q=config.q)


def within_cluster_ss(features, parcellation: Parcellation) -> float:
    """WCSS of a parcellation against cluster means of the given vectors."""
    features = np.asarray(features, dtype=np.float64)
    total = 0.0
    for members in parcellation.members():
        block = features[members]
        total += float(((block - block.mean(axis=0)) ** 2).sum())
    return total


def save_parcellation(parcellation: Parcellation, path, sidecar: dict | None = None) -> None:
    """Write feature->cluster CSV plus a JSON sidecar next to it."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["feature", "cluster"])
        for i, g in enumerate(parcellation.assignment):
            writer.writerow([i, int(g)])
    meta = {"q": parcellation.q, "checksum": parcellation.checksum()}
    if sidecar:
        meta.update(sidecar)
    with open(path.with_suffix(".json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_parcellation(path) -> Parcellation:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:2] != ["feature", "cluster"]:
            raise ValueError(f"unexpected parcellation header {header!r}")
        rows = [(int(r[0]), int(r[1])) for r in reader]
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError("parcellation must cover features 0..p-1 exactly once")
    assignment = np.array([r[1] for r in rows], dtype=np.int64)
    return Parcellation(assignment=assignment, q=int(assignment.max()) + 1)
