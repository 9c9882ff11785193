"""Cross-modality pseudo-label learning toolkit.

Library + CLI for two-modality embedding data: density clustering,
noisy pseudo-label calibration, neighbor-relation and cluster-contrastive
losses, entropic optimal-transport cluster matching, hybrid memory banks,
and retrieval/clustering evaluation.
"""

from .core import (OUTLIER, FeatureMatrix, LoadError, ModalityDataset,
                   PipelineConfig, PseudoLabeling, l2_normalize, load_features,
                   load_labels, save_features, save_labels)

__all__ = [
    "OUTLIER", "FeatureMatrix", "LoadError", "ModalityDataset",
    "PipelineConfig", "PseudoLabeling", "l2_normalize", "load_features",
    "load_labels", "save_features", "save_labels",
]

__version__ = "0.1.0"
