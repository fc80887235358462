"""Multi-scale dense 3-D classifier as a declarative inference graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

from ..nnet import (
    AvgPool,
    BatchNorm,
    Concat,
    Conv3d,
    Dense,
    Dropout,
    Flatten,
    Network,
    ReLU,
    Sigmoid,
)
from ..volume import round_half_up

LOGIT_NODE = "classifier.logit"


@dataclass(frozen=True)
class MsdNetSpec:
    """Architecture hyper-parameters.

    Scale ``s`` (1-based) holds features at ``input_size / 2**(s-1)`` and is
    active for depths ``1..scale_end_depths[s-1]``. A transition block
    follows the basic block at each depth in ``transition_depths`` on every
    scale active at that depth.
    """

    scales: int = 3
    initial_filters: Tuple[int, ...] = (32, 64, 128)
    growth: Tuple[int, ...] = (8, 16, 32)
    scale_end_depths: Tuple[int, ...] = (16, 24, 32)
    max_depth: int = 32
    transition_depths: Tuple[int, ...] = (16, 24)
    bottleneck_reduction: float = 0.75
    transition_compression: float = 0.5
    classifier_channels: int = 128
    pool_size: int = 2
    pool_stride: int = 2
    dense_units: Tuple[int, ...] = (128, 32)
    dropout_rates: Tuple[float, ...] = (0.5, 0.2)
    bn_eps: float = 1e-3
    input_size: int = 32
    in_channels: int = 1

    def validate(self) -> None:
        def fail(msg):
            raise ValueError(f"invalid MsdNetSpec: {msg}")

        if self.scales < 1:
            fail("scales must be >= 1")
        for name in ("initial_filters", "growth", "scale_end_depths"):
            if len(getattr(self, name)) != self.scales:
                fail(f"len({name}) must equal scales={self.scales}")
        if self.max_depth < 1:
            fail("max_depth must be >= 1")
        if not 0.0 < self.bottleneck_reduction < 1.0:
            fail("bottleneck_reduction must be in (0, 1)")
        if not 0.0 < self.transition_compression <= 1.0:
            fail("transition_compression must be in (0, 1]")
        if any(not 1 <= t < self.max_depth for t in self.transition_depths):
            fail("transition depths must satisfy 1 <= t < max_depth")
        ends = self.scale_end_depths
        if any(e < 1 for e in ends) or list(ends) != sorted(ends):
            fail("scale_end_depths must be >= 1 and non-decreasing")
        if ends[-1] != self.max_depth:
            fail("the coarsest scale must run to max_depth (it feeds the classifier)")
        if any(f < 1 for f in self.initial_filters) or any(g < 1 for g in self.growth):
            fail("filter counts and growth rates must be >= 1")
        for s in range(1, self.scales):
            if self.growth[s] % 2:
                fail(f"growth rate of scale {s + 1} must be even (split between two paths)")
        if self.input_size % (2 ** (self.scales - 1)):
            fail("input_size must be divisible by 2**(scales-1)")
        final = self.input_size // 2 ** (self.scales - 1)
        if final < self.pool_size:
            fail("coarsest feature map smaller than the pooling window")
        if len(self.dense_units) != len(self.dropout_rates):
            fail("dense_units and dropout_rates must pair up")

    def bottleneck_width(self, channels: int) -> int:
        return max(1, int(round_half_up((1.0 - self.bottleneck_reduction) * channels)))

    def active(self, s: int, d: int) -> bool:
        """Whether scale ``s`` (1-based) has a basic-block layer at depth ``d``."""
        return d <= self.scale_end_depths[s - 1]


def _conv_block(net: Network, name: str, src: str, out_ch: int, kernel: int, stride: int, pad: int, eps: float, tag: str) -> str:
    net.add(f"{name}.conv", Conv3d(out_ch, kernel, stride, pad, bias=False), src, tag)
    net.add(f"{name}.bn", BatchNorm(eps), f"{name}.conv", tag)
    return net.add(f"{name}.relu", ReLU(), f"{name}.bn", tag)


def _bottleneck(net, name, src, in_ch, out_ch, stride, spec, tag) -> str:
    """1x1x1 reduction to a quarter of the channels, then a 3x3x3 conv block."""
    mid = spec.bottleneck_width(in_ch)
    h = _conv_block(net, f"{name}.reduce", src, mid, 1, 1, 0, spec.bn_eps, tag)
    return _conv_block(net, f"{name}.conv3", h, out_ch, 3, stride, 1, spec.bn_eps, tag)


def build_msdnet(spec: MsdNetSpec = MsdNetSpec()) -> Network:
    """Emit the classifier graph for a ``(in_channels, N, N, N)`` cube.

    ``net.meta`` records the block counts and the channel count of every
    scale after every depth.
    """
    spec.validate()
    n = spec.input_size
    net = Network((spec.in_channels, n, n, n))
    eps = spec.bn_eps

    feats: Dict[int, str] = {}
    chans: Dict[int, int] = {}
    prev = net.input_name
    for s in range(1, spec.scales + 1):
        stride = 1 if s == 1 else 2
        prev = _conv_block(net, f"init{s}", prev, spec.initial_filters[s - 1], 3, stride, 1, eps, f"initial:{s}")
        feats[s], chans[s] = prev, spec.initial_filters[s - 1]

    history: List[Dict[int, int]] = []
    n_transitions = 0
    for d in range(1, spec.max_depth + 1):
        tag = f"basic:{d}"
        new_feats, new_chans = {}, {}
        for s in range(1, spec.scales + 1):
            if not spec.active(s, d):
                continue
            g = spec.growth[s - 1]
            # the finer scale contributes if it had features at depth d-1
            has_down = s > 1 and (d == 1 or spec.active(s - 1, d - 1))
            parts = [feats[s]]
            h_out = g // 2 if has_down else g
            parts.append(_bottleneck(net, f"d{d}.s{s}.h", feats[s], chans[s], h_out, 1, spec, tag))
            if has_down:
                parts.append(_bottleneck(net, f"d{d}.s{s}.v", feats[s - 1], chans[s - 1], g // 2, 2, spec, tag))
            new_feats[s] = net.add(f"d{d}.s{s}.cat", Concat(), parts, tag)
            new_chans[s] = chans[s] + g
        feats, chans = new_feats, new_chans
        if d in spec.transition_depths:
            for s in sorted(feats):
                out = max(1, int(chans[s] * spec.transition_compression))
                feats[s] = _conv_block(net, f"t{d}.s{s}", feats[s], out, 1, 1, 0, eps, f"transition:{d}:{s}")
                chans[s] = out
                n_transitions += 1
        history.append(dict(chans))

    tag = "classifier"
    top = feats[spec.scales]
    x = _conv_block(net, "cls.conv1", top, spec.classifier_channels, 3, 1, 1, eps, tag)
    x = _conv_block(net, "cls.conv2", x, spec.classifier_channels, 3, 1, 1, eps, tag)
    x = net.add("cls.pool", AvgPool(spec.pool_size, spec.pool_stride), x, tag)
    x = net.add("cls.flatten", Flatten(), x, tag)
    for k, (units, rate) in enumerate(zip(spec.dense_units, spec.dropout_rates), start=1):
        x = net.add(f"cls.dense{k}", Dense(units), x, tag)
        x = net.add(f"cls.relu{k}", ReLU(), x, tag)
        x = net.add(f"cls.drop{k}", Dropout(rate), x, tag)
    net.add(LOGIT_NODE, Dense(1), x, tag)
    net.add("cls.sigmoid", Sigmoid(), LOGIT_NODE, tag)

    net.meta.update(
        basic_blocks=net.count_tags("basic:"),
        transition_blocks=n_transitions,
        classifier_blocks=net.count_tags("classifier"),
        channels_by_depth=history,
        spec=spec,
    )
    return net
