"""Noisy pseudo-label calibration.

Reliability of a sample inside its cluster is scored by how much local
neighborhood structure it shares with the other members: reciprocal
nearest-neighbor sets give a Jaccard affinity matrix, a counter tallies
high-affinity partners, and the top-K most reliable members form a robust
prototype.  Every sample is then relabeled to its most-cosine-similar
prototype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import DistanceMatrix, pairwise_distances
from .core import OUTLIER, FeatureMatrix, PipelineConfig, PseudoLabeling


@dataclass(frozen=True)
class NeighborSets:
    """Per-sample reciprocal nearest-neighbor index sets."""

    sets: tuple
    kappa: int

    def __len__(self):
        return len(self.sets)


@dataclass(frozen=True)
class AffinityMatrix:
    values: np.ndarray  # n_c x n_c, entries in [0, 1], symmetric


@dataclass(frozen=True)
class PrototypeSet:
    """Y x d matrix of unit-norm cluster prototypes."""

    protos: np.ndarray
    kind: str

    def __post_init__(self):
        p = np.asarray(self.protos, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1:
            raise ValueError("prototype set must be a non-empty 2-D matrix")
        if self.kind not in ("robust", "centroid"):
            raise ValueError(f"unknown prototype kind {self.kind!r}")
        object.__setattr__(self, "protos", p)

    @property
    def y(self) -> int:
        return self.protos.shape[0]


def k_reciprocal_neighbors(dist: DistanceMatrix, kappa: int) -> NeighborSets:
    """Reciprocal kappa-nearest-neighbor sets, ties broken by ascending index."""
    n = dist.n
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    if kappa >= n:
        raise ValueError(f"kappa={kappa} must be smaller than the sample count {n}")
    d = dist.values.copy()
    np.fill_diagonal(d, np.inf)  # self excluded
    order = np.argsort(d, axis=1, kind="stable")[:, :kappa]
    member = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), kappa)
    member[rows, order.ravel()] = True
    mutual = member & member.T
    sets = tuple(np.flatnonzero(mutual[i]) for i in range(n))
    return NeighborSets(sets=sets, kappa=kappa)


def jaccard_affinity(nbrs: NeighborSets, cluster_members: np.ndarray) -> AffinityMatrix:
    """Jaccard overlap of reciprocal-neighbor sets for intra-cluster pairs."""
    members = np.asarray(cluster_members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("cluster must be non-empty")
    n = len(nbrs)
    mask = np.zeros((members.size, n), dtype=np.float64)
    for row, i in enumerate(members):
        mask[row, nbrs.sets[i]] = 1.0
    inter = mask @ mask.T
    sizes = mask.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return AffinityMatrix(values=values)


def similarity_counter(affinity: AffinityMatrix, rho: float) -> np.ndarray:
    """Count, per member, how many cluster partners exceed the threshold."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    return (affinity.values > rho).sum(axis=1).astype(np.int64)


def robust_prototype(features: FeatureMatrix, cluster_members: np.ndarray,
                     counts: np.ndarray, top_k: int) -> np.ndarray:
    """Unit-norm mean of the top-K most reliable cluster members."""
    members = np.asarray(cluster_members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("cluster must be non-empty")
    if members.size <= top_k:
        chosen = members
    else:
        # stable sort on -counts keeps ascending sample index on ties
        order = np.argsort(-np.asarray(counts), kind="stable")[:top_k]
        chosen = members[order]
    proto = features.data[chosen].mean(axis=0)
    norm = np.linalg.norm(proto)
    if norm == 0.0:
        raise ValueError("degenerate prototype with zero norm")
    return proto / norm


def centroid_prototypes(features: FeatureMatrix, labeling: PseudoLabeling) -> PrototypeSet:
    """Plain per-cluster centroids, unit-normalized."""
    protos = np.empty((labeling.y_count, features.d))
    for c in range(labeling.y_count):
        mean = features.data[labeling.members(c)].mean(axis=0)
        protos[c] = mean / np.linalg.norm(mean)
    return PrototypeSet(protos=protos, kind="centroid")


def calibrate(features: FeatureMatrix, labeling: PseudoLabeling,
              config: PipelineConfig) -> tuple[PseudoLabeling, PrototypeSet]:
    """Relabel every non-outlier sample to its nearest robust prototype.

    Reciprocal-neighbor sets are computed over the whole modality; affinity
    and counting happen per cluster.  Clusters emptied by the relabeling are
    dropped and ids compacted so the output labeling stays well-formed.
    """
    if labeling.y_count == 0:
        raise ValueError("no clusters to calibrate")
    if not features.normalized:
        raise ValueError("calibration requires L2-normalized features")
    dist = pairwise_distances(features, "cosine_distance")
    kappa = min(config.kappa, features.n - 1)
    nbrs = k_reciprocal_neighbors(dist, kappa)

    protos = np.empty((labeling.y_count, features.d))
    for c in range(labeling.y_count):
        members = labeling.members(c)
        affinity = jaccard_affinity(nbrs, members)
        counts = similarity_counter(affinity, config.rho)
        protos[c] = robust_prototype(features, members, counts, config.top_k)
    prototype_set = PrototypeSet(protos=protos, kind="robust")

    scores = features.data @ protos.T  # cosine: both sides unit-norm
    new_labels = np.where(labeling.labels == OUTLIER, OUTLIER,
                          np.argmax(scores, axis=1))
    new_labels, kept = _compact(new_labels, labeling.y_count)
    return (PseudoLabeling(labels=new_labels, y_count=kept.size),
            PrototypeSet(protos=protos[kept], kind="robust"))


def _compact(labels: np.ndarray, y_count: int) -> tuple[np.ndarray, np.ndarray]:
    kept = np.unique(labels[labels != OUTLIER])
    remap = np.full(y_count, OUTLIER, dtype=np.int64)
    remap[kept] = np.arange(kept.size)
    out = labels.copy()
    mask = out != OUTLIER
    out[mask] = remap[out[mask]]
    return out, kept
