"""Analytic FLOP and parameter counts for a :class:`~mixtconv.netgraph.NetworkSpec`.

Conventions: one multiply-accumulate is one FLOP; only convolutions,
temporal ops and the classifier are counted (batch norm, ReLU, pooling and
the residual add are free). FLOPs are per video, i.e. per-frame costs
times T. The shift op moves data and costs nothing. Dilation never changes
the count because a kernel of size k always has k taps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import netgraph, temporal
from .netgraph import Layer, NetworkSpec

CONVENTIONS = {
    "mac": "one multiply-accumulate = 1 FLOP",
    "counted": "conv2d, temporal (mixtconv, ordinary1d), fc",
    "free": "batchnorm, relu, maxpool, avgpool, residual add, shift",
    "flops_scope": "per video (per-frame cost x frames)",
    "conv_flops": "H_out*W_out*C_out*(C_in/groups)*k_h*k_w",
    "mixtconv_flops": "T*H*W*sum_m(c_m*k_m)",
    "ordinary1d_flops": "T*H*W*C_in*C_out*k",
    "fc_flops": "C_in*C_out*T (per-frame scores before consensus)",
    "params": "conv weights (no bias), batchnorm gamma+beta (running stats excluded), fc weight+bias, temporal kernels",
}


@dataclass(frozen=True)
class LayerCost:
    path: str
    kind: str
    flops: int
    params: int


@dataclass
class CostReport:
    network: str
    records: list[LayerCost] = field(default_factory=list)
    conventions: dict = field(default_factory=lambda: dict(CONVENTIONS))
    notes: list[str] = field(default_factory=list)

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.records)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.records)

    def by_kind(self, kind: str) -> "CostReport":
        return CostReport(self.network, [r for r in self.records if r.kind == kind], self.conventions)

    def lines(self) -> list[str]:
        """``layer<TAB>flops<TAB>params`` per layer plus a ``TOTAL`` line."""
        out = [f"{r.path}\t{r.flops}\t{r.params}" for r in self.records]
        out.append(f"TOTAL\t{self.total_flops}\t{self.total_params}")
        return out

    def to_text(self) -> str:
        head = [f"network={self.network}", "[conventions]"]
        head += [f"{k}={v}" for k, v in self.conventions.items()]
        if self.notes:
            head.append("[notes]")
            head += self.notes
        head.append("[layers]")
        head.append("layer\tflops\tparams")
        summary = [
            "[summary]",
            f"total_flops={self.total_flops}",
            f"total_gflops={self.total_flops / 1e9:.4f}",
            f"total_params={self.total_params}",
            f"total_mparams={self.total_params / 1e6:.4f}",
        ]
        return "\n".join(head + self.lines() + summary) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


def temporal_flops(block, channels: int, hw: tuple[int, int], frames: int) -> int:
    op = block.temporal
    positions = frames * hw[0] * hw[1]
    if op.kind == "mixtconv":
        split = temporal.partition_channels(channels, len(op.mix.kernel_sizes))
        return positions * sum(c * k for c, k in zip(split, op.mix.kernel_sizes))
    if op.kind == "ordinary1d":
        return positions * channels * channels * op.kernel_size
    return 0


def temporal_params(block, channels: int) -> int:
    op = block.temporal
    if op.kind == "mixtconv":
        split = temporal.partition_channels(channels, len(op.mix.kernel_sizes))
        return sum(c * k for c, k in zip(split, op.mix.kernel_sizes))
    if op.kind == "ordinary1d":
        return channels * channels * op.kernel_size
    return 0


def _layer_cost(layer: Layer, frames: int) -> LayerCost | None:
    if layer.kind == "conv":
        ho, wo = layer.conv.output_hw(*layer.hw)
        per_frame = ho * wo * math.prod(layer.conv.weight_shape)
        return LayerCost(layer.path, "conv", per_frame * frames, layer.conv.param_count(with_bias=False))
    if layer.kind == "bn":
        return LayerCost(layer.path, "bn", 0, 2 * layer.channels)
    if layer.kind == "temporal":
        return LayerCost(
            layer.path,
            "temporal",
            temporal_flops(layer.block, layer.channels, layer.hw, frames),
            temporal_params(layer.block, layer.channels),
        )
    if layer.kind == "fc":
        n = layer.channels * layer.out_features
        return LayerCost(layer.path, "fc", n * frames, n + layer.out_features)
    return None


def cost_network(net: NetworkSpec) -> CostReport:
    """Per-layer FLOPs and parameters in execution order."""
    report = CostReport(net.name)
    for layer in netgraph.layer_plan(net):
        rec = _layer_cost(layer, net.frames)
        if rec is not None:
            report.records.append(rec)
    if "ordinary1d" in net.temporal_kinds():
        report.notes.append(
            "ordinary1d: dense C_in x C_out temporal kernels at the configured position; "
            "the total depends strongly on head vs inner placement"
        )
    return report


def flops_network(net: NetworkSpec) -> CostReport:
    return cost_network(net)


def params_network(net: NetworkSpec) -> CostReport:
    return cost_network(net)
