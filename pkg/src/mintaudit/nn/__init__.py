"""Minimal neural-network substrate shared by the audited model and the audit classifiers."""

from .checkpoint import CheckpointError, load_network, save_network
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    GlobalMaxPerMap,
    LayerSpec,
    MaxPool2d,
    ReLU,
    Sigmoid,
)
from .losses import bce_grad, bce_l1_loss, softmax_cross_entropy
from .network import (
    ForwardCache,
    Network,
    ShapeMismatch,
    TrainConfig,
    TrainMetrics,
    backward,
    dropout_streams,
    fit,
    forward,
    sgd_step,
)
from .rng import derive_seed, stream

__all__ = [
    "CheckpointError", "load_network", "save_network",
    "Conv2d", "Dense", "Dropout", "Flatten", "GlobalMaxPerMap", "LayerSpec",
    "MaxPool2d", "ReLU", "Sigmoid",
    "bce_grad", "bce_l1_loss", "softmax_cross_entropy",
    "ForwardCache", "Network", "ShapeMismatch", "TrainConfig", "TrainMetrics",
    "backward", "dropout_streams", "fit", "forward", "sgd_step",
    "derive_seed", "stream",
]
