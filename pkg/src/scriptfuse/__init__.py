"""Word-level handwritten script identification.

Ten small convolutional networks over spatial and wavelet high-pass
representations of word images, 1024-dim features each, fused by
concatenation into a single vector classified by an MLP head.  Everything
is seeded and bitwise deterministic.
"""

from .data import (
    CANONICAL_SCRIPTS,
    NUM_CLASSES,
    DatasetManifest,
    DatasetSplit,
    discover_corpus,
    load_image,
    prepare_input,
    resize_bilinear,
    split_dataset,
)
from .metrics import ConfusionMatrix, MetricsReport, evaluate, metrics_from_matrix
from .pipeline import (
    CANONICAL_SPECS,
    FEATURE_WIDTH,
    FUSED_WIDTH,
    NetworkSpec,
    TrainConfig,
    build_fusion_head,
    build_network,
    evaluate_ensemble_subset,
    extract_features,
    fuse_features,
    train_cnn,
    train_fusion_mlp,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .wavelet import (
    WaveletConfig,
    WaveletPyramid,
    haar_dwt2_multi,
    haar_idwt2_multi,
    suppress_approximation,
    wavelet_preprocess,
)

__version__ = "0.1.0"

__all__ = [
    "CANONICAL_SCRIPTS",
    "CANONICAL_SPECS",
    "CheckpointError",
    "ConfusionMatrix",
    "DatasetManifest",
    "DatasetSplit",
    "FEATURE_WIDTH",
    "FUSED_WIDTH",
    "MetricsReport",
    "NUM_CLASSES",
    "NetworkSpec",
    "TrainConfig",
    "WaveletConfig",
    "WaveletPyramid",
    "build_fusion_head",
    "build_network",
    "discover_corpus",
    "evaluate",
    "evaluate_ensemble_subset",
    "extract_features",
    "fuse_features",
    "haar_dwt2_multi",
    "haar_idwt2_multi",
    "load_checkpoint",
    "load_image",
    "metrics_from_matrix",
    "prepare_input",
    "resize_bilinear",
    "save_checkpoint",
    "split_dataset",
    "suppress_approximation",
    "train_cnn",
    "train_fusion_mlp",
    "wavelet_preprocess",
    "__version__",
]
