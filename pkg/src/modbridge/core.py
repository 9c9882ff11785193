"""Shared domain types, configuration, and deterministic file I/O."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

OUTLIER = -1

_MAGIC = b"MBRG"
_BINARY_VERSION = 1


class LoadError(ValueError):
    """Raised when a feature or label file cannot be parsed."""


@dataclass(frozen=True)
class FeatureMatrix:
    """N x d matrix of sample embeddings, optionally L2-normalized."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        # private copy so freezing never mutates the caller's array flags
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"feature matrix must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.normalized:
            norms = np.linalg.norm(arr, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("normalized flag set but rows are not unit-norm")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PseudoLabeling:
    """Per-sample cluster assignment with outlier sentinel and cluster count."""

    labels: np.ndarray
    y_count: int

    def __post_init__(self):
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-D integer array")
        if self.y_count < 0:
            raise ValueError("cluster count must be non-negative")
        bad = labels[(labels != OUTLIER) & ((labels < 0) | (labels >= self.y_count))]
        if bad.size:
            raise ValueError(f"label {bad[0]} outside 0..{self.y_count - 1}")
        present = np.unique(labels[labels != OUTLIER])
        if present.size != self.y_count:
            missing = sorted(set(range(self.y_count)) - set(present.tolist()))
            raise ValueError(f"empty cluster ids: {missing}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


@dataclass(frozen=True)
class ModalityDataset:
    """Feature matrix plus modality tag and optional ground-truth identities."""

    features: FeatureMatrix
    modality: str
    truth: np.ndarray | None = None

    def __post_init__(self):
        if self.modality not in ("visible", "infrared"):
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.truth is not None:
            truth = np.ascontiguousarray(np.asarray(self.truth, dtype=np.int64))
            if truth.shape != (self.features.n,):
                raise ValueError("truth must have exactly one entry per sample")
            truth.setflags(write=False)
            object.__setattr__(self, "truth", truth)


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters for the full training pipeline.

    Defaults follow the reference configuration: kappa=30 reciprocal
    neighbors, top-20 reliable samples, affinity threshold 0.5, transport
    regularization 25, temperature 0.5, momentum 0.1, margin and kernel
    bandwidth 1.0, hybrid mix 0.5, loss weights 0.5 / 10.0, and a
    100-epoch schedule with a 50-epoch warmup.
    """

    kappa: int = 30
    top_k: int = 20
    rho: float = 0.5
    lambda_reg: float = 25.0
    tau: float = 0.5
    mu: float = 0.1
    gamma: float = 1.0
    sigma: float = 1.0
    alpha: float = 0.5
    beta1: float = 0.5
    beta2: float = 10.0
    dbscan_eps: float = 0.6
    dbscan_min_pts: int = 4
    warmup_epochs: int = 50
    total_epochs: int = 100
    batch_p: int = 8
    batch_k: int = 4
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        positive = ("rho", "lambda_reg", "tau", "gamma", "sigma", "dbscan_eps")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.rho >= 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.kappa < 1 or self.top_k < 1:
            raise ValueError("kappa and top_k must be at least 1")
        if self.dbscan_min_pts < 1:
            raise ValueError("dbscan_min_pts must be at least 1")
        if self.batch_p < 1 or self.batch_k < 1:
            raise ValueError("batch_p and batch_k must be at least 1")
        if self.warmup_epochs < 0 or self.total_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PipelineConfig":
        kwargs = {f.name: _cast(f.name, mapping[f.name]) for f in fields(cls) if f.name in mapping}
        unknown = set(mapping) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        mapping = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise LoadError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)

    def override(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name}={value!r}" if isinstance(value, str) else f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_INT_FIELDS = {
    "kappa", "top_k", "dbscan_min_pts", "warmup_epochs", "total_epochs",
    "batch_p", "batch_k", "seed",
}


def _cast(name: str, raw):
    if isinstance(raw, (int, float)):
        return int(raw) if name in _INT_FIELDS else raw
    return int(raw) if name in _INT_FIELDS else float(raw)


def l2_normalize(m: FeatureMatrix) -> FeatureMatrix:
    """Scale every row to unit Euclidean norm."""
    norms = np.linalg.norm(m.data, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cannot normalize zero-norm row {zero[0]}")
    return FeatureMatrix(m.data / norms[:, None], normalized=True)


def save_features(m: FeatureMatrix, path, format: str = "binary") -> None:
    """Write a feature matrix; binary format round-trips bit-exactly."""
    path = Path(path)
    if format == "binary":
        payload = m.data.astype("<f4").tobytes(order="C")
        header = _MAGIC + struct.pack("<III", _BINARY_VERSION, m.n, m.d)
        path.write_bytes(header + payload)
    elif format == "csv":
        lines = [",".join(repr(float(x)) for x in row) for row in m.data]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown feature format {format!r}")


def load_features(path, format: str = "binary") -> FeatureMatrix:
    """Read a feature matrix written by :func:`save_features`."""
    path = Path(path)
    if format == "binary":
        blob = path.read_bytes()
        if len(blob) == 0:
            raise LoadError("empty feature file")
        if len(blob) < 16 or blob[:4] != _MAGIC:
            raise LoadError(f"{path}: missing or malformed header")
        version, n, d = struct.unpack("<III", blob[4:16])
        if version != _BINARY_VERSION:
            raise LoadError(f"{path}: unsupported version {version}")
        expected = 16 + 4 * n * d
        if len(blob) != expected:
            raise LoadError(f"{path}: expected {expected} bytes, got {len(blob)}")
        data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(n, d).astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise LoadError(f"{path}: non-finite value in feature data")
        return FeatureMatrix(data)
    if format == "csv":
        text = path.read_text()
        rows = []
        width = None
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise LoadError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            if not all(math.isfinite(x) for x in row):
                raise LoadError(f"{path}:{lineno}: non-finite value")
            rows.append(row)
        if not rows:
            raise LoadError("empty feature file")
        return FeatureMatrix(np.array(rows, dtype=np.float64))
    raise ValueError(f"unknown feature format {format!r}")


def save_labels(labels: np.ndarray, path) -> None:
    """Write one integer per line; -1 marks outliers."""
    Path(path).write_text("\n".join(str(int(v)) for v in labels) + "\n")


def load_labels(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise LoadError("empty label file")
    try:
        return np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise LoadError(f"{path}: {exc}") from None
