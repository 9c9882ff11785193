"""Pairwise distances and a deterministic from-scratch DBSCAN."""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import OUTLIER, FeatureMatrix, PseudoLabeling


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric N x N distance matrix with zero diagonal."""

    values: np.ndarray
    metric: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if self.metric not in ("euclidean", "cosine_distance"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if not np.allclose(v, v.T, atol=1e-9):
            raise ValueError("distance matrix is not symmetric")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


_DEFAULT_WORKERS = 1


def set_default_workers(n: int) -> None:
    """Bound worker parallelism for distance computation (CLI --threads)."""
    global _DEFAULT_WORKERS
    _DEFAULT_WORKERS = max(1, int(n))


def pairwise_distances(m: FeatureMatrix, metric: str = "cosine_distance",
                       n_workers: int | None = None) -> DistanceMatrix:
    """All-pairs distances; cosine_distance requires unit-norm rows."""
    if n_workers is None:
        n_workers = _DEFAULT_WORKERS
    x = m.data
    if metric == "cosine_distance":
        if not m.normalized:
            raise ValueError("cosine_distance requires L2-normalized features")
        gram = _gram(x, n_workers)
        dist = 1.0 - gram
        np.clip(dist, 0.0, None, out=dist)
    elif metric == "euclidean":
        gram = _gram(x, n_workers)
        sq = np.einsum("ij,ij->i", x, x)
        dist = sq[:, None] + sq[None, :] - 2.0 * gram
        np.clip(dist, 0.0, None, out=dist)
        np.sqrt(dist, out=dist)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return DistanceMatrix(values=dist, metric=metric)


def _gram(x: np.ndarray, n_workers: int) -> np.ndarray:
    if n_workers <= 1 or x.shape[0] < 2 * n_workers:
        return x @ x.T
    chunks = np.array_split(np.arange(x.shape[0]), n_workers)
    out = np.empty((x.shape[0], x.shape[0]))
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(lambda idx: out.__setitem__(idx, x[idx] @ x.T), c)
                   for c in chunks]
        for f in futures:
            f.result()
    return out


def dbscan(dist: DistanceMatrix, eps: float, min_pts: int) -> PseudoLabeling:
    """DBSCAN over a precomputed distance matrix.

    A point is core iff it has >= min_pts neighbors within eps (inclusive,
    counting itself).  Cluster ids are assigned in discovery order of the
    first core point, so the labeling is deterministic for a given input
    order.  Border points keep the first cluster that reaches them.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    n = dist.n
    within = dist.values <= eps
    neighbor_lists = [np.flatnonzero(within[i]) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbor_lists])

    labels = np.full(n, OUTLIER, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    next_id = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        labels[i] = next_id
        visited[i] = True
        queue = deque(neighbor_lists[i])
        while queue:
            j = queue.popleft()
            if labels[j] == OUTLIER:
                labels[j] = next_id
            if visited[j] or not core[j]:
                visited[j] = True
                continue
            visited[j] = True
            labels[j] = next_id
            queue.extend(neighbor_lists[j])
        next_id += 1
    return PseudoLabeling(labels=labels, y_count=next_id)
