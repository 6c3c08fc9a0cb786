"""Dense tensor arithmetic, layer primitives, losses and the Adam optimizer.

Everything operates on plain numpy arrays.  Training code runs in float32;
the gradient-check suite drives the identical code paths in float64.
"""

from .ops import (
    conv2d,
    dense,
    dropout,
    maxpool2d,
    relu,
    softmax_cross_entropy,
    softmax_cross_entropy_batch,
)
from .layers import Conv2d, Dense, Dropout, Flatten, MaxPool2d, Network, ReLU
from .adam import Adam, AdamConfig, AdamState, adam_step

__all__ = [
    "conv2d",
    "maxpool2d",
    "dense",
    "relu",
    "dropout",
    "softmax_cross_entropy",
    "softmax_cross_entropy_batch",
    "Conv2d",
    "MaxPool2d",
    "Dense",
    "ReLU",
    "Dropout",
    "Flatten",
    "Network",
    "Adam",
    "AdamConfig",
    "AdamState",
    "adam_step",
]
