"""Nested U-net (U-net++) decoder topology and channel bookkeeping.

Only the graph is modelled: nodes ``X^{i,j}`` with their channel counts and
spatial sizes, and the typed edges between them. Level ``i`` runs down the
encoder, column ``j`` across the decoder.

Node families for ``L`` levels:

* encoder ``X^{i,0}``, ``0 <= i <= L``;
* grid decoder nodes ``X^{i,j}``, ``j >= 1``, ``i + j <= L``;
* the bridge ``X^{L,1}``, reached from ``X^{L,0}`` by a plain convolution;
* ultimate nodes ``X^{i,L+1-i}`` (``i < L``), where every level's
  concatenated maps end up.

Every decoder node other than the bridge receives one upsample edge from
``X^{i+1,j-1}`` and skip edges from all of ``X^{i,0..j-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

NodeId = Tuple[int, int]


@dataclass(frozen=True)
class TopoNode:
    level: int
    column: int
    kind: str  # encoder | grid | bridge | ultimate
    channels: Optional[int]
    size: int
    module: Optional[int]  # decoder module (= column), None for the encoder

    @property
    def id(self) -> NodeId:
        return (self.level, self.column)


@dataclass(frozen=True)
class TopoEdge:
    src: NodeId
    dst: NodeId
    kind: str  # upsample | skip | conv


@dataclass
class UnetPPTopology:
    levels: int
    input_size: int
    mid_channels: int
    module_channels: List[int]
    nodes: Dict[NodeId, TopoNode] = field(default_factory=dict)
    edges: List[TopoEdge] = field(default_factory=list)
    # channel count of the last module is not pinned down by the source; it
    # repeats the previous module and is flagged here
    assumed_last_module: bool = True

    def in_edges(self, node: NodeId) -> List[TopoEdge]:
        return [e for e in self.edges if e.dst == node]

    def in_degree(self, node: NodeId) -> int:
        return len(self.in_edges(node))

    def nodes_of(self, kind: str) -> List[NodeId]:
        return sorted(n for n, v in self.nodes.items() if v.kind == kind)

    @property
    def grid_nodes(self) -> List[NodeId]:
        """The triangular grid ``i + j <= L`` (encoder column included)."""
        return sorted(n for n in self.nodes if n[0] + n[1] <= self.levels)

    @property
    def ultimate_nodes(self) -> List[NodeId]:
        return sorted(self.nodes_of("ultimate"), reverse=True)

    def module_nodes(self, m: int) -> List[NodeId]:
        """Nodes of decoder module ``m`` from the deepest level upwards."""
        return sorted((n for n, v in self.nodes.items() if v.module == m), reverse=True)

    def transposed_convs(self, m: int) -> int:
        """Upsampling layers along module ``m``'s column (one fewer per module)."""
        return max(0, self.levels + 1 - m)

    def concat_channels(self, node: NodeId) -> Optional[int]:
        """Channels entering the concatenation at ``node``.

        Skip inputs contribute their own channels; the upsample path
        contributes the node's module width. ``None`` when an encoder width
        is unknown.
        """
        total = 0
        for e in self.in_edges(node):
            if e.kind == "skip":
                c = self.nodes[e.src].channels
            elif e.kind == "upsample":
                c = self.nodes[node].channels
            else:
                continue
            if c is None:
                return None
            total += c
        return total

    def shape(self, node: NodeId) -> Tuple[Optional[int], int, int]:
        n = self.nodes[node]
        return (n.channels, n.size, n.size)


def build_unetpp_topology(
    levels: int = 4,
    mid_channels: int = 256,
    decoder_base: int = 128,
    input_size: int = 512,
    encoder_channels: Optional[Sequence[int]] = None,
) -> UnetPPTopology:
    """Emit the node grid, typed edges and per-module channel counts.

    Module ``m`` (``1..L+1``) uses ``decoder_base / 2**(m-1)`` channels,
    except the last which repeats module ``L``.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if input_size % (2**levels):
        raise ValueError(f"input_size {input_size} not divisible by 2**{levels}")
    if encoder_channels is not None and len(encoder_channels) != levels + 1:
        raise ValueError(f"need {levels + 1} encoder channel counts")
    L = levels
    module_channels = [max(1, decoder_base // 2 ** (m - 1)) for m in range(1, L + 1)]
    module_channels.append(module_channels[-1])
    topo = UnetPPTopology(L, input_size, mid_channels, module_channels)

    def add(i, j, kind, channels, module):
        topo.nodes[(i, j)] = TopoNode(i, j, kind, channels, input_size // 2**i, module)

    for i in range(L + 1):
        add(i, 0, "encoder", None if encoder_channels is None else int(encoder_channels[i]), None)
    for j in range(1, L + 1):
        for i in range(0, L - j + 1):
            add(i, j, "grid", module_channels[j - 1], j)
    add(L, 1, "bridge", mid_channels, 1)
    for i in range(L):
        j = L + 1 - i
        add(i, j, "ultimate", module_channels[j - 1], j)

    topo.edges.append(TopoEdge((L, 0), (L, 1), "conv"))
    for (i, j), node in sorted(topo.nodes.items()):
        if j == 0 or node.kind == "bridge":
            continue
        topo.edges.append(TopoEdge((i + 1, j - 1), (i, j), "upsample"))
        for jj in range(j):
            topo.edges.append(TopoEdge((i, jj), (i, j), "skip"))
    return topo
