"""Inference-only neural network primitives and executors."""

from .graph import Network, Node, UnboundWeightsError, forward
from .init import he_normal, init_weights
from .layers import (
    AvgPool,
    BatchNorm,
    Concat,
    Conv3d,
    Dense,
    Dropout,
    Flatten,
    LayerSpec,
    LeakyReLU,
    ReLU,
    Sigmoid,
)
from .ops import avgpool3d, batchnorm_inference, concat, conv3d, dense, leaky_relu, relu, sigmoid
from .reference import reference_forward

__all__ = [
    "AvgPool", "BatchNorm", "Concat", "Conv3d", "Dense", "Dropout", "Flatten", "LayerSpec",
    "LeakyReLU", "Network", "Node", "ReLU", "Sigmoid", "UnboundWeightsError", "avgpool3d",
    "batchnorm_inference", "concat", "conv3d", "dense", "forward", "he_normal", "init_weights",
    "leaky_relu", "reference_forward", "relu", "sigmoid",
]
