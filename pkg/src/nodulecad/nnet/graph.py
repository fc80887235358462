"""Inference graphs: declarative nodes, shape inference, weight binding and
the vectorised executor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import ops
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
    Shape,
    Sigmoid,
)


class UnboundWeightsError(RuntimeError):
    pass


@dataclass(frozen=True)
class Node:
    name: str
    layer: LayerSpec
    inputs: Tuple[str, ...]
    tag: str = ""


@dataclass
class Network:
    """A DAG of layers over a single input tensor.

    Nodes must be added after all of their inputs, so insertion order is a
    topological order. Parameters are addressed as ``"<node>.<param>"``.
    """

    input_shape: Shape
    input_name: str = "input"
    nodes: List[Node] = field(default_factory=list)
    output: Optional[str] = None
    weights: Optional[Dict[str, np.ndarray]] = None
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self._index: Dict[str, Node] = {n.name: n for n in self.nodes}

    def add(self, name: str, layer: LayerSpec, inputs, tag: str = "") -> str:
        if isinstance(inputs, str):
            inputs = (inputs,)
        inputs = tuple(inputs)
        if name in self._index or name == self.input_name:
            raise ValueError(f"duplicate node name {name!r}")
        for src in inputs:
            if src != self.input_name and src not in self._index:
                raise ValueError(f"node {name!r} consumes unknown node {src!r}")
        if layer.n_inputs != -1 and len(inputs) != layer.n_inputs:
            raise ValueError(f"{type(layer).__name__} takes {layer.n_inputs} input(s), got {len(inputs)}")
        node = Node(name, layer, inputs, tag)
        self.nodes.append(node)
        self._index[name] = node
        self.output = name
        return name

    def node(self, name: str) -> Node:
        return self._index[name]

    @property
    def output_name(self) -> str:
        return self.output if self.output is not None else self.input_name

    def shapes(self) -> Dict[str, Shape]:
        out = {self.input_name: self.input_shape}
        for n in self.nodes:
            out[n.name] = n.layer.out_shape([out[i] for i in n.inputs])
        return out

    def param_shapes(self) -> Dict[str, Tuple[Shape, bool]]:
        shapes = self.shapes()
        out = {}
        for n in self.nodes:
            for pname, spec in n.layer.param_shapes([shapes[i] for i in n.inputs]).items():
                out[f"{n.name}.{pname}"] = spec
        return out

    def n_params(self, trainable_only: bool = True) -> int:
        total = 0
        for shape, trainable in self.param_shapes().values():
            if trainable or not trainable_only:
                total += int(np.prod(shape))
        return total

    def bind(self, weights: Mapping[str, np.ndarray]) -> "Network":
        """Attach weights after checking names and shapes; returns ``self``."""
        expected = self.param_shapes()
        missing = sorted(set(expected) - set(weights))
        if missing:
            raise UnboundWeightsError(f"missing weights: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        bound = {}
        for key, (shape, _) in expected.items():
            arr = np.asarray(weights[key], dtype=np.float64)
            if arr.shape != tuple(shape):
                raise ValueError(f"weight {key!r} has shape {arr.shape}, expected {tuple(shape)}")
            bound[key] = arr
        self.weights = bound
        return self

    def require_weights(self) -> Dict[str, np.ndarray]:
        if self.weights is None:
            if not self.param_shapes():
                return {}
            raise UnboundWeightsError("network weights are not bound")
        return self.weights

    def last_use(self) -> Dict[str, int]:
        """Index of the last node consuming each tensor."""
        last = {}
        for k, n in enumerate(self.nodes):
            for src in n.inputs:
                last[src] = k
        return last

    def count_tags(self, prefix: str) -> int:
        return len({n.tag for n in self.nodes if n.tag.startswith(prefix)})


def _apply(node: Node, args: List[np.ndarray], weights: Dict[str, np.ndarray]) -> np.ndarray:
    layer = node.layer
    p = lambda name: weights.get(f"{node.name}.{name}")  # noqa: E731
    if isinstance(layer, Conv3d):
        return ops.conv3d(args[0], p("weight"), p("bias"), layer.s3, layer.p3)
    if isinstance(layer, BatchNorm):
        return ops.batchnorm_inference(args[0], p("mean"), p("var"), p("gamma"), p("beta"), layer.eps)
    if isinstance(layer, ReLU):
        return ops.relu(args[0])
    if isinstance(layer, LeakyReLU):
        return ops.leaky_relu(args[0], layer.slope)
    if isinstance(layer, Sigmoid):
        return ops.sigmoid(args[0])
    if isinstance(layer, Dropout):
        return args[0]
    if isinstance(layer, AvgPool):
        return ops.avgpool3d(args[0], layer.size, layer.stride)
    if isinstance(layer, Flatten):
        return args[0].reshape(-1)
    if isinstance(layer, Dense):
        return ops.dense(args[0], p("weight"), p("bias"))
    if isinstance(layer, Concat):
        return ops.concat(args)
    raise TypeError(f"unsupported layer {type(layer).__name__}")


def forward(net: Network, x: np.ndarray, keep: Iterable[str] = ()) -> np.ndarray:
    """Evaluate ``net`` on ``x`` with the vectorised kernels.

    Returns the output tensor, or a dict of tensors when ``keep`` names
    intermediate nodes to return alongside ``"output"``.
    """
    weights = net.require_weights()
    x = np.asarray(x, dtype=np.float64)
    if x.shape != net.input_shape:
        raise ValueError(f"input shape {x.shape} != network input {net.input_shape}")
    keep = set(keep)
    last = net.last_use()
    out_name = net.output_name
    values = {net.input_name: x}
    kept = {}
    for k, node in enumerate(net.nodes):
        values[node.name] = _apply(node, [values[i] for i in node.inputs], weights)
        if node.name in keep:
            kept[node.name] = values[node.name]
        for src in node.inputs:
            if last.get(src) == k and src != out_name:
                values.pop(src, None)
    result = values[out_name]
    if keep:
        kept["output"] = result
        return kept
    return result
