"""Item clustering for the serendipity metric.

Items are grouped by k-means on their embeddings into ``isqrt(num_items)``
clusters, and the cluster centroids are clustered once more into
meta-clusters. Two clusters are "nearby" when they share a meta-cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_THRESHOLD = 4.0


def _sq_distances(points, centroids):
    # |x|^2 - 2 x.c + |c|^2 cancels badly for near-identical points
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen centroid
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[rng.integers(len(free))])
        chosen.append(idx)
        closest = np.minimum(closest, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _repair_empty(points, assignments, dist, k):
    """Move the point farthest from its centroid into each empty cluster."""
    counts = np.bincount(assignments, minlength=k)
    own = dist[np.arange(len(points)), assignments]
    for c in np.flatnonzero(counts == 0):
        donors = counts[assignments] > 1
        candidates = np.flatnonzero(donors)
        far = candidates[np.argmax(own[candidates])]
        counts[assignments[far]] -= 1
        assignments[far] = c
        counts[c] += 1
        own[far] = 0.0
    return assignments


def inertia(points, assignments, centroids) -> float:
    diff = points - centroids[assignments]
    return float((diff * diff).sum())


def kmeans(points, k: int, seed: int = 0, max_iters: int = 300, tol: float = 1e-10,
           return_history: bool = False):
    """Lloyd's algorithm from a k-means++ start.

    Returns ``(assignments, centroids)``; with ``return_history`` a third
    element lists the inertia after every assignment/update round.
    The returned centroids are the exact means of the returned assignments.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n (k={k}, n={n})")
    if not np.isfinite(points).all():
        raise ValueError("points contain non-finite values")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(points, k, rng)
    history = []
    for _ in range(max_iters):
        dist = _sq_distances(points, centroids)
        assignments = np.argmin(dist, axis=1)
        assignments = _repair_empty(points, assignments, dist, k)
        new = np.zeros_like(centroids)
        np.add.at(new, assignments, points)
        new /= np.bincount(assignments, minlength=k)[:, None]
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        history.append(inertia(points, assignments, centroids))
        if shift < tol:
            break
    if return_history:
        return assignments, centroids, history
    return assignments, centroids


@dataclass(frozen=True, eq=False)
class ClusterModel:
    assignments: np.ndarray
    centroids: np.ndarray
    meta_assignments: np.ndarray

    def __post_init__(self):
        for name in ("assignments", "centroids", "meta_assignments"):
            arr = np.asarray(getattr(self, name)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.meta_assignments) != len(self.centroids):
            raise ValueError("meta_assignments must have one entry per centroid")

    @property
    def k_items(self) -> int:
        return len(self.centroids)

    @property
    def k_meta(self) -> int:
        return int(self.meta_assignments.max()) + 1

    @property
    def num_items(self) -> int:
        return len(self.assignments)

    def members_of_meta(self, meta: int) -> set[int]:
        return set(np.flatnonzero(self.meta_assignments == meta).tolist())


@dataclass(frozen=True)
class RelevantClusters:
    clusters: frozenset
    threshold: float = DEFAULT_THRESHOLD

    def __len__(self):
        return len(self.clusters)


def cluster_counts(num_items: int) -> tuple[int, int]:
    k_items = math.isqrt(num_items)
    return k_items, max(1, math.isqrt(k_items))


def build_cluster_model(item_embeddings, seed: int = 0, k_items: int | None = None,
                        k_meta: int | None = None) -> ClusterModel:
    """Two-level k-means over item embeddings.

    Defaults: ``k_items = isqrt(num_items)`` and ``k_meta = max(1, isqrt(k_items))``.
    """
    item_embeddings = np.asarray(item_embeddings, dtype=np.float64)
    n = item_embeddings.shape[0]
    if n < 4:
        raise ValueError(f"need at least 4 items to cluster, got {n}")
    default_items, _ = cluster_counts(n)
    k_items = k_items or default_items
    k_meta = k_meta or max(1, math.isqrt(k_items))
    seeds = np.random.SeedSequence(seed).generate_state(2)
    assignments, centroids = kmeans(item_embeddings, k_items, seed=int(seeds[0]))
    meta, _ = kmeans(centroids, k_meta, seed=int(seeds[1]))
    return ClusterModel(assignments, centroids, meta)


def relevant_clusters(model: ClusterModel, history: Iterable[tuple[int, float]],
                      threshold: float = DEFAULT_THRESHOLD) -> RelevantClusters:
    """Clusters holding an item rated ``>= threshold`` plus every cluster in
    the same meta-cluster as one of those."""
    seeds = set()
    for item, rating in history:
        if not 0 <= item < model.num_items:
            raise IndexError(f"item index {item} out of range [0, {model.num_items})")
        if rating >= threshold:
            seeds.add(int(model.assignments[item]))
    if not seeds:
        return RelevantClusters(frozenset(), threshold)
    metas = {int(model.meta_assignments[c]) for c in seeds}
    hit = np.isin(model.meta_assignments, list(metas))
    return RelevantClusters(frozenset(np.flatnonzero(hit).tolist()), threshold)


def dump_clusters(model: ClusterModel, item_ids: Sequence[int], path: str | Path):
    """Write ``item_id<TAB>cluster_id<TAB>meta_id`` per item."""
    with open(path, "w") as fh:
        for idx, c in enumerate(model.assignments.tolist()):
            fh.write(f"{int(item_ids[idx])}\t{c}\t{int(model.meta_assignments[c])}\n")
