"""Modality-specific and hybrid memory banks with momentum updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import PrototypeSet
from .core import FeatureMatrix, PseudoLabeling
from .otmatch import CrossModalMatch


@dataclass
class MemoryBank:
    """Y x d prototype store; rows stay unit-norm across updates."""

    rows: np.ndarray
    mu: float
    kind: str

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("memory bank needs at least one row")
        if not np.all(np.isfinite(rows)):
            raise ValueError("memory bank contains non-finite entries")
        if self.kind not in ("visible", "infrared", "hybrid"):
            raise ValueError(f"unknown memory kind {self.kind!r}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        self.rows = rows

    @property
    def y(self) -> int:
        return self.rows.shape[0]

    def copy(self) -> "MemoryBank":
        return MemoryBank(rows=self.rows.copy(), mu=self.mu, kind=self.kind)


def init_from_centroids(features: FeatureMatrix, labeling: PseudoLabeling,
                        mu: float, kind: str) -> MemoryBank:
    """Bank row c = unit-norm mean of the features labeled c; outliers skipped."""
    if labeling.y_count < 1:
        raise ValueError("cannot build a memory bank without clusters")
    rows = np.empty((labeling.y_count, features.d))
    for c in range(labeling.y_count):
        mean = features.data[labeling.members(c)].mean(axis=0)
        rows[c] = mean / np.linalg.norm(mean)
    return MemoryBank(rows=rows, mu=mu, kind=kind)


def build_hybrid(mr: MemoryBank, robust_pv: PrototypeSet, robust_pr: PrototypeSet,
                 match: CrossModalMatch, alpha: float) -> MemoryBank:
    """Mix each infrared prototype with its matched visible prototype.

    alpha=1 keeps the infrared side, alpha=0 the matched visible side; both
    endpoints bit-preserve the corresponding input prototypes.
    """
    if match.r2v.shape[0] != robust_pr.y:
        raise ValueError("match does not cover every infrared cluster")
    if match.r2v.max() >= robust_pv.y:
        raise ValueError("match refers to a missing visible prototype")
    if alpha == 1.0:
        rows = robust_pr.protos.copy()
    elif alpha == 0.0:
        rows = robust_pv.protos[match.r2v].copy()
    else:
        mixed = alpha * robust_pr.protos + (1.0 - alpha) * robust_pv.protos[match.r2v]
        rows = mixed / np.linalg.norm(mixed, axis=1, keepdims=True)
    return MemoryBank(rows=rows, mu=mr.mu, kind="hybrid")


def momentum_update(bank: MemoryBank, label: int, f: np.ndarray, mu: float) -> None:
    """In-place row <- normalize(mu*row + (1-mu)*f); exact at mu in {0, 1}."""
    if not 0 <= label < bank.y:
        raise ValueError(f"label {label} outside memory bank of size {bank.y}")
    if mu == 1.0:
        return
    if mu == 0.0:
        bank.rows[label] = f
        return
    mixed = mu * bank.rows[label] + (1.0 - mu) * f
    bank.rows[label] = mixed / np.linalg.norm(mixed)


def hybrid_update(bank: MemoryBank, epoch: int, batch, v2r_map: np.ndarray | None,
                  mu: float, r2h_map: np.ndarray | None = None) -> None:
    """Parity-alternating momentum updates of the hybrid bank.

    Even epochs push visible features into rows v2r_map[label]; odd epochs
    push infrared features into rows r2h_map[label] (native labels when the
    map is None).  Updates run per sample, in batch order.
    """
    if bank.kind != "hybrid":
        raise ValueError("hybrid_update requires a hybrid bank")
    if epoch % 2 == 0:
        if batch.modality != "visible":
            raise ValueError("even epochs update with visible batches")
        if v2r_map is None:
            raise ValueError("even epochs require a visible-to-hybrid label map")
        targets = np.asarray(v2r_map, dtype=np.int64)[batch.labels]
    else:
        if batch.modality != "infrared":
            raise ValueError("odd epochs update with infrared batches")
        targets = batch.labels if r2h_map is None \
            else np.asarray(r2h_map, dtype=np.int64)[batch.labels]
    for f, label in zip(batch.features, targets):
        momentum_update(bank, int(label), f, mu)
