"""Clustering-quality, matching-accuracy, and retrieval metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn import metrics as skm

from .core import OUTLIER
from .otmatch import CrossModalMatch


@dataclass(frozen=True)
class EvalReport:
    ari: float | None = None
    nmi: float | None = None
    v_measure: float | None = None
    homogeneity: float | None = None
    completeness: float | None = None
    match_accuracy: float | None = None
    rank_k: dict = field(default_factory=dict)
    map_score: float | None = None
    skipped_queries: int = 0

    def to_json(self) -> str:
        payload = {
            "ari": self.ari, "nmi": self.nmi, "v_measure": self.v_measure,
            "homogeneity": self.homogeneity, "completeness": self.completeness,
            "match_accuracy": self.match_accuracy,
            "rank_k": {str(k): v for k, v in self.rank_k.items()},
            "map_score": self.map_score, "skipped_queries": self.skipped_queries,
        }
        return json.dumps(payload, sort_keys=True)


def _as_singletons(labels: np.ndarray) -> np.ndarray:
    """Give every outlier its own fresh cluster id."""
    labels = np.asarray(labels, dtype=np.int64)
    out = labels.copy()
    outliers = np.flatnonzero(labels == OUTLIER)
    base = labels.max() + 1 if labels.size else 0
    out[outliers] = base + np.arange(outliers.size)
    return out


def _check_lengths(pred, truth):
    if len(pred) != len(truth):
        raise ValueError(f"label length mismatch: {len(pred)} vs {len(truth)}")


def ari(pred: np.ndarray, truth: np.ndarray) -> float:
    """Adjusted Rand Index; outliers count as singleton clusters."""
    _check_lengths(pred, truth)
    return float(skm.adjusted_rand_score(_as_singletons(truth), _as_singletons(pred)))


def nmi(pred: np.ndarray, truth: np.ndarray) -> float:
    """Normalized mutual information with arithmetic-mean normalization."""
    _check_lengths(pred, truth)
    return float(skm.normalized_mutual_info_score(
        _as_singletons(truth), _as_singletons(pred), average_method="arithmetic"))


def v_measure(pred: np.ndarray, truth: np.ndarray) -> float:
    _check_lengths(pred, truth)
    return float(skm.v_measure_score(_as_singletons(truth), _as_singletons(pred)))


def homogeneity(pred: np.ndarray, truth: np.ndarray) -> float:
    _check_lengths(pred, truth)
    return float(skm.homogeneity_score(_as_singletons(truth), _as_singletons(pred)))


def completeness(pred: np.ndarray, truth: np.ndarray) -> float:
    _check_lengths(pred, truth)
    return float(skm.completeness_score(_as_singletons(truth), _as_singletons(pred)))


def majority_identity(labeling, truth: np.ndarray) -> np.ndarray:
    """Majority ground-truth identity per cluster; ties to the smallest id."""
    truth = np.asarray(truth, dtype=np.int64)
    out = np.empty(labeling.y_count, dtype=np.int64)
    for c in range(labeling.y_count):
        ids, counts = np.unique(truth[labeling.members(c)], return_counts=True)
        out[c] = ids[np.argmax(counts)]  # np.unique sorts, argmax keeps first max
    return out


def match_accuracy(match: CrossModalMatch, proto_truth_v: np.ndarray,
                   proto_truth_r: np.ndarray) -> float:
    """Mean directional agreement of the cluster match with identity truth."""
    proto_truth_v = np.asarray(proto_truth_v, dtype=np.int64)
    proto_truth_r = np.asarray(proto_truth_r, dtype=np.int64)
    r_correct = np.mean(proto_truth_v[match.r2v] == proto_truth_r)
    v_correct = np.mean(proto_truth_r[match.v2r] == proto_truth_v)
    return float((r_correct + v_correct) / 2.0)


def cmc_map(query_embeddings: np.ndarray, query_truth: np.ndarray,
            gallery_embeddings: np.ndarray, gallery_truth: np.ndarray,
            ranks: tuple = (1, 5, 10)) -> tuple[dict, float, int]:
    """CMC Rank-k and mAP for cosine-similarity retrieval.

    Gallery items are ranked by descending similarity, ties broken by
    ascending gallery index.  Queries whose identity is absent from the
    gallery are excluded and counted in the returned skip count.
    """
    query_truth = np.asarray(query_truth, dtype=np.int64)
    gallery_truth = np.asarray(gallery_truth, dtype=np.int64)
    sims = np.asarray(query_embeddings) @ np.asarray(gallery_embeddings).T
    present = np.isin(query_truth, gallery_truth)
    skipped = int((~present).sum())
    if not present.any():
        return {k: 0.0 for k in ranks}, 0.0, skipped

    hits_at = {k: 0 for k in ranks}
    ap_sum = 0.0
    n_eval = 0
    for qi in np.flatnonzero(present):
        order = np.argsort(-sims[qi], kind="stable")
        correct = gallery_truth[order] == query_truth[qi]
        first = int(np.flatnonzero(correct)[0])
        for k in ranks:
            hits_at[k] += first < k
        positions = np.flatnonzero(correct)
        precision = np.arange(1, positions.size + 1) / (positions + 1)
        ap_sum += precision.mean()
        n_eval += 1
    rank_k = {k: hits_at[k] / n_eval for k in ranks}
    return rank_k, ap_sum / n_eval, skipped
