"""Symbolic construction and static analysis of the residual UNet.

Builds the layer graph (no tensors, no weights): an encoder of
pre-activation residual blocks with 1x1-conv shortcuts and max-pooling, a
bottleneck with an optional extra 5x5 residual block for a wider
field-of-view, and a mirrored decoder with long skip concatenations.  A
learned 1x1 "colorspace" convolution can collapse RGB to one channel at
the input, and a final 1x1 convolution plus sigmoid produces the one-channel
probability map.

The analyses are structural: per-node output shapes (inputs must be
divisible by 2^depth), learnable parameter totals, and the receptive field
at the output via (size, jump) propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

CONV = "conv"
BATCHNORM = "batchnorm"
ACTIVATION = "activation"
MAXPOOL = "maxpool"
UPSAMPLE = "upsample"
ADD = "add"
CONCAT = "concat"
INPUT = "input"


@dataclass(frozen=True)
class ArchConfig:
    depth: int = 4
    base_filters: int = 16
    filter_growth: int = 2
    colorspace_conv: bool = True
    extra_bottleneck_block: bool = True
    bottleneck_kernel: int = 5
    standard_kernel: int = 3
    transposed_upsample: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_filters < 1:
            raise ValueError(f"base_filters must be >= 1, got {self.base_filters}")
        for k in (self.bottleneck_kernel, self.standard_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernels must be odd and positive, got {k}")

    def filters_at(self, level: int) -> int:
        return self.base_filters * self.filter_growth ** level


@dataclass(frozen=True)
class LayerNode:
    id: int
    kind: str
    inputs: tuple[int, ...]
    kernel: int = 1
    stride: int = 1
    in_channels: int = 0
    out_channels: int = 0
    transposed: bool = False
    name: str = ""


@dataclass(frozen=True)
class ArchGraph:
    nodes: list[LayerNode]
    output_id: int
    config: ArchConfig

    def node(self, node_id: int) -> LayerNode:
        return self.nodes[node_id]


@dataclass(frozen=True)
class ArchSummary:
    shapes: dict[int, tuple[int, int, int]]  # node id -> (h, w, channels)
    total_params: int
    receptive_field: tuple[int, int]
    divisibility: int


class _Builder:
    def __init__(self, config: ArchConfig):
        self.config = config
        self.nodes: list[LayerNode] = []

    def add(self, kind, inputs, name, **kw) -> int:
        node = LayerNode(id=len(self.nodes), kind=kind,
                         inputs=tuple(inputs), name=name, **kw)
        self.nodes.append(node)
        return node.id

    def conv(self, x, in_c, out_c, kernel, name) -> int:
        return self.add(CONV, [x], name, kernel=kernel,
                        in_channels=in_c, out_channels=out_c)

    def residual_block(self, x, in_c, out_c, kernel, name) -> int:
        """Two batchnorm-activation-conv sequences plus a shortcut.

        The shortcut is a 1x1 convolution whenever the block changes the
        channel count (every encoder and decoder block does), identity
        otherwise.
        """
        h = self.add(BATCHNORM, [x], f"{name}.bn1", in_channels=in_c, out_channels=in_c)
        h = self.add(ACTIVATION, [h], f"{name}.act1", in_channels=in_c, out_channels=in_c)
        h = self.conv(h, in_c, out_c, kernel, f"{name}.conv1")
        h = self.add(BATCHNORM, [h], f"{name}.bn2", in_channels=out_c, out_channels=out_c)
        h = self.add(ACTIVATION, [h], f"{name}.act2", in_channels=out_c, out_channels=out_c)
        h = self.conv(h, out_c, out_c, kernel, f"{name}.conv2")
        if in_c != out_c:
            shortcut = self.conv(x, in_c, out_c, 1, f"{name}.shortcut")
        else:
            shortcut = x
        return self.add(ADD, [h, shortcut], f"{name}.add",
                        in_channels=out_c, out_channels=out_c)


def build_resunet(cfg: ArchConfig = ArchConfig()) -> ArchGraph:
    """Assemble the residual UNet layer graph for the given configuration."""
    b = _Builder(cfg)
    x = b.add(INPUT, [], "input", in_channels=3, out_channels=3)
    channels = 3
    if cfg.colorspace_conv:
        x = b.conv(x, 3, 1, 1, "colorspace")
        channels = 1

    skips = []
    for level in range(cfg.depth):
        out_c = cfg.filters_at(level)
        x = b.residual_block(x, channels, out_c, cfg.standard_kernel, f"enc{level}")
        skips.append((x, out_c))
        x = b.add(MAXPOOL, [x], f"pool{level}", kernel=2, stride=2,
                  in_channels=out_c, out_channels=out_c)
        channels = out_c

    out_c = cfg.filters_at(cfg.depth)
    x = b.residual_block(x, channels, out_c, cfg.standard_kernel, "bottleneck")
    channels = out_c
    if cfg.extra_bottleneck_block:
        x = b.residual_block(x, channels, channels, cfg.bottleneck_kernel,
                             "bottleneck_wide")

    for level in reversed(range(cfg.depth)):
        out_c = cfg.filters_at(level)
        if cfg.transposed_upsample:
            x = b.add(UPSAMPLE, [x], f"up{level}", kernel=2, stride=2,
                      in_channels=channels, out_channels=out_c, transposed=True)
        else:
            x = b.add(UPSAMPLE, [x], f"up{level}", kernel=1, stride=2,
                      in_channels=channels, out_channels=channels)
            x = b.conv(x, channels, out_c, cfg.standard_kernel, f"up{level}.conv")
        skip_id, skip_c = skips[level]
        x = b.add(CONCAT, [x, skip_id], f"merge{level}",
                  in_channels=out_c + skip_c, out_channels=out_c + skip_c)
        x = b.residual_block(x, out_c + skip_c, out_c, cfg.standard_kernel,
                             f"dec{level}")
        channels = out_c

    x = b.conv(x, channels, 1, 1, "head")
    x = b.add(ACTIVATION, [x], "sigmoid", in_channels=1, out_channels=1)
    return ArchGraph(nodes=b.nodes, output_id=x, config=cfg)


def shape_inference(g: ArchGraph, input_shape: tuple[int, int, int]) -> dict[int, tuple[int, int, int]]:
    """Per-node output shapes (h, w, c) for a given input shape.

    The input must be divisible by 2^depth so every pooling stage halves
    evenly; same-padding keeps the output spatial size equal to the input.
    """
    h, w, c = input_shape
    required = 2 ** g.config.depth
    if h % required or w % required:
        raise ValueError(
            f"input {h}x{w} is not divisible by {required} "
            f"(required for depth {g.config.depth})"
        )
    shapes: dict[int, tuple[int, int, int]] = {}
    for node in g.nodes:
        if node.kind == INPUT:
            if c != node.out_channels:
                raise ValueError(f"expected {node.out_channels} input channels, got {c}")
            shapes[node.id] = (h, w, c)
            continue
        ins = [shapes[i] for i in node.inputs]
        ih, iw, ic = ins[0]
        if node.kind in (CONV,):
            if ic != node.in_channels:
                raise ValueError(f"{node.name}: expected {node.in_channels} channels, got {ic}")
            shapes[node.id] = (ih, iw, node.out_channels)
        elif node.kind in (BATCHNORM, ACTIVATION):
            shapes[node.id] = (ih, iw, ic)
        elif node.kind == MAXPOOL:
            shapes[node.id] = (ih // 2, iw // 2, ic)
        elif node.kind == UPSAMPLE:
            out_c = node.out_channels if node.transposed else ic
            shapes[node.id] = (ih * 2, iw * 2, out_c)
        elif node.kind == ADD:
            if ins[0] != ins[1]:
                raise ValueError(f"{node.name}: add inputs differ: {ins[0]} vs {ins[1]}")
            shapes[node.id] = ins[0]
        elif node.kind == CONCAT:
            if ins[0][:2] != ins[1][:2]:
                raise ValueError(f"{node.name}: concat spatial mismatch: {ins[0]} vs {ins[1]}")
            shapes[node.id] = (ih, iw, ins[0][2] + ins[1][2])
        else:
            raise ValueError(f"unknown node kind {node.kind!r}")
    return shapes


def param_count(g: ArchGraph) -> int:
    """Learnable parameters: convs (weights + bias) and batchnorms (gamma, beta)."""
    total = 0
    for node in g.nodes:
        if node.kind == CONV or (node.kind == UPSAMPLE and node.transposed):
            total += node.kernel * node.kernel * node.in_channels * node.out_channels
            total += node.out_channels
        elif node.kind == BATCHNORM:
            total += 2 * node.out_channels
    return total


def receptive_field(g: ArchGraph) -> tuple[int, int]:
    """Receptive field extent at the output, in input pixels.

    Propagates (size, jump) through every node; merge nodes take the
    element-wise maximum over branches.  Jumps are powers of two, so the
    arithmetic is exact.
    """
    rf: dict[int, tuple[float, float]] = {}  # id -> (size, jump), per axis symmetric
    for node in g.nodes:
        if node.kind == INPUT:
            rf[node.id] = (1.0, 1.0)
            continue
        ins = [rf[i] for i in node.inputs]
        size, jump = ins[0]
        if node.kind == CONV:
            rf[node.id] = (size + (node.kernel - 1) * jump, jump)
        elif node.kind in (BATCHNORM, ACTIVATION):
            rf[node.id] = (size, jump)
        elif node.kind == MAXPOOL:
            rf[node.id] = (size + (node.kernel - 1) * jump, jump * node.stride)
        elif node.kind == UPSAMPLE:
            # Nearest copy and 2x2-stride-2 transposed conv alike: each
            # output position depends on exactly one input position.
            rf[node.id] = (size, jump / 2.0)
        elif node.kind in (ADD, CONCAT):
            sizes = [s for s, _ in ins]
            jumps = {j for _, j in ins}
            if len(jumps) != 1:
                raise ValueError(f"{node.name}: branches disagree on stride")
            rf[node.id] = (max(sizes), jumps.pop())
        else:
            raise ValueError(f"unknown node kind {node.kind!r}")
    size = int(round(rf[g.output_id][0]))
    return (size, size)


def summarize(g: ArchGraph, input_shape: tuple[int, int, int]) -> ArchSummary:
    return ArchSummary(
        shapes=shape_inference(g, input_shape),
        total_params=param_count(g),
        receptive_field=receptive_field(g),
        divisibility=2 ** g.config.depth,
    )


def summary_json_dict(g: ArchGraph, input_shape: tuple[int, int, int]) -> dict:
    """JSON-friendly dump: node table, shapes, parameter total, receptive field."""
    summary = summarize(g, input_shape)
    return {
        "config": {
            "depth": g.config.depth,
            "base_filters": g.config.base_filters,
            "filter_growth": g.config.filter_growth,
            "colorspace_conv": g.config.colorspace_conv,
            "extra_bottleneck_block": g.config.extra_bottleneck_block,
            "bottleneck_kernel": g.config.bottleneck_kernel,
            "standard_kernel": g.config.standard_kernel,
            "transposed_upsample": g.config.transposed_upsample,
        },
        "input_shape": list(input_shape),
        "divisibility": summary.divisibility,
        "total_params": summary.total_params,
        "receptive_field": list(summary.receptive_field),
        "output_shape": list(summary.shapes[g.output_id]),
        "nodes": [
            {
                "id": n.id,
                "name": n.name,
                "kind": n.kind,
                "kernel": n.kernel,
                "stride": n.stride,
                "in_channels": n.in_channels,
                "out_channels": n.out_channels,
                "inputs": list(n.inputs),
                "output_shape": list(summary.shapes[n.id]),
            }
            for n in g.nodes
        ],
    }
