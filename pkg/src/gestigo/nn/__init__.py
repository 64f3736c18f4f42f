"""Minimal reverse-mode autodiff engine and layer set."""

from .tensor import Tensor, parameter, stack, node, accumulate
from .layers import (
    Conv2d, MaxPool2d, AdaptiveAvgPool, AdaptiveMaxPool,
    BatchNorm2d, BatchNorm1d, Dropout, ReLU, Flatten, Linear,
    concat, softmax, cross_entropy, expand_cells, cell_edges,
)
from .optim import Adam, cosine_lr
from .checkpoint import write_checkpoint, read_checkpoint, MAGIC, VERSION

__all__ = [
    "Tensor", "parameter", "stack", "node", "accumulate",
    "Conv2d", "MaxPool2d", "AdaptiveAvgPool", "AdaptiveMaxPool",
    "BatchNorm2d", "BatchNorm1d", "Dropout", "ReLU", "Flatten", "Linear",
    "concat", "softmax", "cross_entropy", "expand_cells", "cell_edges",
    "Adam", "cosine_lr",
    "write_checkpoint", "read_checkpoint", "MAGIC", "VERSION",
]
