"""Training losses with analytic gradients w.r.t. batch embeddings.

All gradients flow into the batch features only.  The neighbor-relation
weights and the memory rows are treated as constants (stop-gradient), and
every finite-difference check in the test suite freezes them the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Batch:
    """Unit-norm feature rows with their pseudo-labels and modality tag."""

    features: np.ndarray
    labels: np.ndarray
    modality: str

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or labels.shape != (f.shape[0],):
            raise ValueError("features must be N_B x d with one label per row")
        if self.modality not in ("visible", "infrared"):
            raise ValueError(f"unknown modality {self.modality!r}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class LossValue:
    value: float
    grad: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.value) or not np.all(np.isfinite(self.grad)):
            raise ValueError("loss produced non-finite value or gradient")


def zero_loss(shape) -> LossValue:
    return LossValue(value=0.0, grad=np.zeros(shape))


def nrl_loss(batch: Batch, gamma: float, sigma: float) -> LossValue:
    """Relaxed contrastive loss over all sample pairs in one batch.

    Pairs are pulled together proportionally to a Gaussian-kernel weight of
    their distance and pushed apart (up to margin gamma) by its complement.
    The kernel weight is frozen for the gradient.
    """
    if batch.size < 2:
        raise ValueError("neighbor-relation loss needs at least 2 samples")
    f = batch.features
    n = batch.size
    diff = f[:, None, :] - f[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    d = np.sqrt(d2)
    omega = np.exp(-d2 / sigma)
    hinge = np.maximum(0.0, gamma - d)
    value = float((omega * d2 + (1.0 - omega) * hinge**2).sum() / n)

    # dL/df_i = (2/N) sum_j [2*w_ij - 2*(1-w_ij)*hinge_ij/d_ij] (f_i - f_j)
    with np.errstate(invalid="ignore", divide="ignore"):
        repel = np.where(d > 0, hinge / np.where(d > 0, d, 1.0), 0.0)
    coef = 2.0 * omega - 2.0 * (1.0 - omega) * repel
    grad = (2.0 / n) * (coef.sum(axis=1)[:, None] * f - coef @ f)
    return LossValue(value=value, grad=grad)


def cluster_nce(batch: Batch, memory, label_map: np.ndarray | None = None,
                tau: float = 0.5) -> LossValue:
    """Cluster-level InfoNCE against a memory bank of prototypes.

    The positive for each sample is its (optionally translated) cluster's
    memory row; all rows act as logits.  Memory rows are constants.
    """
    rows = memory.rows if hasattr(memory, "rows") else np.asarray(memory, dtype=np.float64)
    labels = batch.labels
    if label_map is not None:
        label_map = np.asarray(label_map, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= label_map.shape[0]:
            raise ValueError("batch label outside the translation map")
        labels = label_map[labels]
    if labels.min() < 0 or labels.max() >= rows.shape[0]:
        raise ValueError("batch label outside the memory bank")

    logits = batch.features @ rows.T / tau
    shift = logits.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    pos = logits[np.arange(batch.size), labels]
    value = float(np.mean(lse - pos))

    softmax = np.exp(logits - lse[:, None])
    softmax[np.arange(batch.size), labels] -= 1.0
    grad = softmax @ rows / (batch.size * tau)
    return LossValue(value=value, grad=grad)


def modality_invariant_loss(batch: Batch, hybrid, epoch: int,
                            v2r_map: np.ndarray | None, tau: float,
                            r2h_map: np.ndarray | None = None) -> LossValue:
    """Alternating contrastive loss against the hybrid memory.

    Even epochs consume a visible batch with labels translated into hybrid
    row indices; odd epochs consume an infrared batch (native labels unless
    the hybrid is indexed by visible clusters).
    """
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if epoch % 2 == 0:
        if batch.modality != "visible":
            raise ValueError("even epochs require a visible batch")
        if v2r_map is None:
            raise ValueError("even epochs require a visible-to-hybrid label map")
        return cluster_nce(batch, hybrid, label_map=v2r_map, tau=tau)
    if batch.modality != "infrared":
        raise ValueError("odd epochs require an infrared batch")
    return cluster_nce(batch, hybrid, label_map=r2h_map, tau=tau)


def total_loss(ms: LossValue, mi: LossValue, nrl: LossValue,
               beta1: float, beta2: float) -> LossValue:
    """Weighted sum L_MS + beta1*L_MI + beta2*L_NRL, linear in values and grads."""
    if ms.grad.shape != mi.grad.shape or ms.grad.shape != nrl.grad.shape:
        raise ValueError("component gradients have incompatible shapes")
    return LossValue(
        value=ms.value + beta1 * mi.value + beta2 * nrl.value,
        grad=ms.grad + beta1 * mi.grad + beta2 * nrl.grad,
    )
