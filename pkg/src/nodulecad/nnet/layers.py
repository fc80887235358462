"""Layer specifications with shape inference and parameter shapes.

Feature tensors are ``(C, D, H, W)`` arrays; after :class:`Flatten` they are
1-D vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple, Union

Shape = Tuple[int, ...]
Triple = Tuple[int, int, int]


def triple(v, name: str = "value") -> Triple:
    if isinstance(v, int):
        return (v, v, v)
    t = tuple(int(x) for x in v)
    if len(t) != 3:
        raise ValueError(f"{name} must be an int or 3 ints, got {v!r}")
    return t  # type: ignore[return-value]


class LayerSpec:
    """Base class; subclasses define :meth:`out_shape` and :meth:`param_shapes`."""

    n_inputs = 1

    def out_shape(self, in_shapes: Sequence[Shape]) -> Shape:
        raise NotImplementedError

    def param_shapes(self, in_shapes: Sequence[Shape]) -> Dict[str, Tuple[Shape, bool]]:
        """Parameter name -> (shape, trainable)."""
        return {}

    def _one(self, in_shapes: Sequence[Shape]) -> Shape:
        if len(in_shapes) != 1:
            raise ValueError(f"{type(self).__name__} takes one input, got {len(in_shapes)}")
        return tuple(in_shapes[0])

    def _feature(self, in_shapes: Sequence[Shape]) -> Shape:
        s = self._one(in_shapes)
        if len(s) != 4:
            raise ValueError(f"{type(self).__name__} expects a (C, D, H, W) input, got {s}")
        return s


@dataclass(frozen=True)
class Conv3d(LayerSpec):
    out_ch: int
    kernel: Union[int, Triple] = 3
    stride: Union[int, Triple] = 1
    pad: Union[int, Triple, str] = 0
    bias: bool = True

    def __post_init__(self):
        if self.out_ch < 1:
            raise ValueError("out_ch must be >= 1")
        if min(triple(self.kernel, "kernel")) < 1:
            raise ValueError("kernel must be >= 1")
        if min(triple(self.stride, "stride")) < 1:
            raise ValueError("stride must be >= 1")
        if isinstance(self.pad, str):
            if self.pad not in ("same", "valid"):
                raise ValueError(f"pad must be 'same', 'valid' or ints, got {self.pad!r}")
        elif min(triple(self.pad, "pad")) < 0:
            raise ValueError("pad must be >= 0")

    @property
    def k3(self) -> Triple:
        return triple(self.kernel)

    @property
    def s3(self) -> Triple:
        return triple(self.stride)

    @property
    def p3(self) -> Triple:
        if self.pad == "valid":
            return (0, 0, 0)
        if self.pad == "same":
            return tuple(k // 2 for k in self.k3)  # type: ignore[return-value]
        return triple(self.pad)

    def out_shape(self, in_shapes):
        c, *spatial = self._feature(in_shapes)
        out = [self.out_ch]
        for n, k, s, p in zip(spatial, self.k3, self.s3, self.p3):
            m = (n + 2 * p - k) // s + 1
            if m < 1:
                raise ValueError(f"conv output extent < 1 for input {n}, kernel {k}, pad {p}")
            out.append(m)
        return tuple(out)

    def param_shapes(self, in_shapes):
        c = self._feature(in_shapes)[0]
        shapes = {"weight": ((self.out_ch, c) + self.k3, True)}
        if self.bias:
            shapes["bias"] = ((self.out_ch,), True)
        return shapes


@dataclass(frozen=True)
class BatchNorm(LayerSpec):
    eps: float = 1e-3

    def out_shape(self, in_shapes):
        return self._one(in_shapes)

    def param_shapes(self, in_shapes):
        c = (self._one(in_shapes)[0],)
        return {"gamma": (c, True), "beta": (c, True), "mean": (c, False), "var": (c, False)}


@dataclass(frozen=True)
class ReLU(LayerSpec):
    def out_shape(self, in_shapes):
        return self._one(in_shapes)


@dataclass(frozen=True)
class LeakyReLU(LayerSpec):
    slope: float = 0.1

    def out_shape(self, in_shapes):
        return self._one(in_shapes)


@dataclass(frozen=True)
class Sigmoid(LayerSpec):
    def out_shape(self, in_shapes):
        return self._one(in_shapes)


@dataclass(frozen=True)
class Dropout(LayerSpec):
    """Identity at inference; ``rate`` is kept as metadata."""

    rate: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")

    def out_shape(self, in_shapes):
        return self._one(in_shapes)


@dataclass(frozen=True)
class AvgPool(LayerSpec):
    size: Union[int, Triple] = 2
    stride: Union[int, Triple] = 2

    def out_shape(self, in_shapes):
        c, *spatial = self._feature(in_shapes)
        out = [c]
        for n, k, s in zip(spatial, triple(self.size), triple(self.stride)):
            m = (n - k) // s + 1
            if m < 1:
                raise ValueError(f"pool window {k} larger than input extent {n}")
            out.append(m)
        return tuple(out)


@dataclass(frozen=True)
class Flatten(LayerSpec):
    def out_shape(self, in_shapes):
        n = 1
        for d in self._one(in_shapes):
            n *= d
        return (n,)


@dataclass(frozen=True)
class Dense(LayerSpec):
    out: int
    bias: bool = True

    def _vec(self, in_shapes) -> int:
        s = self._one(in_shapes)
        if len(s) != 1:
            raise ValueError(f"Dense expects a flat vector, got shape {s}")
        return s[0]

    def out_shape(self, in_shapes):
        self._vec(in_shapes)
        return (self.out,)

    def param_shapes(self, in_shapes):
        shapes = {"weight": ((self.out, self._vec(in_shapes)), True)}
        if self.bias:
            shapes["bias"] = ((self.out,), True)
        return shapes


@dataclass(frozen=True)
class Concat(LayerSpec):
    """Channel-axis concatenation of feature tensors with equal spatial extent."""

    n_inputs = -1

    def out_shape(self, in_shapes):
        if not in_shapes:
            raise ValueError("Concat needs at least one input")
        first = tuple(in_shapes[0])
        for s in in_shapes[1:]:
            if len(s) != len(first) or tuple(s[1:]) != first[1:]:
                raise ValueError(f"Concat shape mismatch: {first} vs {tuple(s)}")
        return (sum(s[0] for s in in_shapes),) + first[1:]
