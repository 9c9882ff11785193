"""Seeded synthetic two-modality datasets with known identities.

Each identity gets a base direction on the unit sphere; every modality adds
a fixed random offset (the modality gap) and per-sample Gaussian jitter,
then rows are re-normalized so the cosine-based pipeline sees unit vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, ModalityDataset, l2_normalize


@dataclass(frozen=True)
class SynthSpec:
    n_identities: int
    per_identity_per_modality: int
    d: int
    intra_sigma: float = 0.05
    modality_shift_norm: float = 0.5
    noise_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_identities < 2:
            raise ValueError("need at least 2 identities")
        if self.per_identity_per_modality < 2:
            raise ValueError("need at least 2 samples per identity per modality")
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.intra_sigma < 0 or self.modality_shift_norm < 0:
            raise ValueError("spreads must be non-negative")
        if not 0.0 <= self.noise_frac < 1.0:
            raise ValueError("noise_frac must lie in [0, 1)")


def generate(spec: SynthSpec) -> tuple[ModalityDataset, ModalityDataset]:
    """Deterministically generate (visible, infrared) datasets with truth."""
    rng = np.random.default_rng(spec.seed)
    bases = rng.normal(size=(spec.n_identities, spec.d))
    bases /= np.linalg.norm(bases, axis=1, keepdims=True)

    offsets = {}
    for modality in ("visible", "infrared"):
        direction = rng.normal(size=spec.d)
        direction /= np.linalg.norm(direction)
        offsets[modality] = direction * spec.modality_shift_norm

    datasets = []
    per = spec.per_identity_per_modality
    truth = np.repeat(np.arange(spec.n_identities), per)
    for modality in ("visible", "infrared"):
        noise = rng.normal(scale=spec.intra_sigma, size=(len(truth), spec.d)) \
            if spec.intra_sigma > 0 else np.zeros((len(truth), spec.d))
        rows = bases[truth] + offsets[modality] + noise
        features = l2_normalize(FeatureMatrix(rows))
        datasets.append(ModalityDataset(features=features, modality=modality, truth=truth))
    return datasets[0], datasets[1]


def identity_bases(spec: SynthSpec) -> np.ndarray:
    """Re-derive the identity base directions used by :func:`generate`."""
    rng = np.random.default_rng(spec.seed)
    bases = rng.normal(size=(spec.n_identities, spec.d))
    return bases / np.linalg.norm(bases, axis=1, keepdims=True)


def corrupt_labels(truth: np.ndarray, noise_frac: float, n_classes: int,
                   seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Reassign floor(noise_frac*N) labels to uniformly chosen other classes.

    Returns the corrupted copy and the (sorted) corrupted index set.
    """
    if not 0.0 <= noise_frac < 1.0:
        raise ValueError("noise_frac must lie in [0, 1)")
    truth = np.asarray(truth, dtype=np.int64)
    n_corrupt = int(noise_frac * truth.shape[0])
    if n_corrupt == 0:
        return truth.copy(), np.empty(0, dtype=np.int64)
    if n_classes < 2:
        raise ValueError("need at least 2 classes to corrupt labels")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(truth.shape[0], size=n_corrupt, replace=False))
    corrupted = truth.copy()
    for i in idx:
        shift = rng.integers(1, n_classes)  # never maps back to the original
        corrupted[i] = (truth[i] + shift) % n_classes
    return corrupted, idx
