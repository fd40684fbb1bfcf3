"""Executable properties: shift equivalence, gradient checks, oracle equivalence
and identity insertion. Each returns a :class:`PropResult` whose
:meth:`~PropResult.line` is ``PROP <name> PASS|FAIL max_err=<v>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import netgraph, spatial, temporal
from ..temporal import MixTConvConfig, ShiftSpec
from . import oracles
from .gradcheck import finite_diff_check


@dataclass(frozen=True)
class PropResult:
    name: str
    passed: bool
    max_err: float
    cases: int = 1

    def line(self) -> str:
        return f"PROP {self.name} {'PASS' if self.passed else 'FAIL'} max_err={self.max_err:.3e}"


# Temporal configurations compared in the kernel-size ablation.
ABLATION_CONFIGS = {
    "tsm_shift": ("shift", None),
    "ordinary1d_k3": ("ordinary1d", 3),
    "ks3": ("mixtconv", MixTConvConfig((3,))),
    "ks5": ("mixtconv", MixTConvConfig((5,))),
    "ks7": ("mixtconv", MixTConvConfig((7,))),
    "ks13": ("mixtconv", MixTConvConfig((1, 3))),
    "ks135": ("mixtconv", MixTConvConfig((1, 3, 5))),
    "ks1357": ("mixtconv", MixTConvConfig((1, 3, 5, 7))),
    "ks357_dilated": ("mixtconv", MixTConvConfig((3, 3, 3), (1, 2, 3))),
}


def shift_equivalence(channels=(8, 64, 256), T: int = 8, batch: int = 2, hw: int = 3, seed: int = 7, tol: float = 1e-6):
    """Shift vs the fixed-weight kernel-3 MixTConv, in float32."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for C in channels:
        F = rng.standard_normal((batch, T, C, hw, hw)).astype(np.float32)
        a = temporal.shift_forward(F, ShiftSpec())
        b = temporal.mixtconv_forward(F, temporal.shift_as_mixtconv(C, ShiftSpec(), np.float32))
        worst = max(worst, float(np.max(np.abs(a - b))))
    return PropResult("shift_equivalence", worst <= tol, worst, len(channels))


def gradcheck_instance(kind, config, rng, T=8, C=12, hw=2, batch=1, h=1e-5, threshold=1e-5):
    """Finite-difference check of one random instance of a temporal op (float64)."""
    F = rng.standard_normal((batch, T, C, hw, hw))
    if kind == "mixtconv":
        spec = config.build(C, dtype=np.float64)
        weights = [rng.standard_normal(w.shape) for w in spec.weights]

        def fwd(inp):
            return temporal.mixtconv_forward(inp[0], spec.with_weights(inp[1:]))

        def bwd(inp, dz):
            dF, dW = temporal.mixtconv_backward(inp[0], spec.with_weights(inp[1:]), dz)
            return [dF, *dW]

        inputs = [F, *weights]
        names = ["F"] + [f"W{m}" for m in range(len(weights))]
    elif kind == "ordinary1d":
        Wt = rng.standard_normal((C, C, config)) / np.sqrt(C)

        def fwd(inp):
            return temporal.ordinary_conv1d_forward(inp[0], inp[1])

        def bwd(inp, dz):
            return list(temporal.ordinary_conv1d_backward(inp[0], inp[1], dz))

        inputs, names = [F, Wt], ["F", "W"]
    elif kind == "shift":

        def fwd(inp):
            return temporal.shift_forward(inp[0])

        def bwd(inp, dz):
            return [temporal.shift_backward(dz)]

        inputs, names = [F], ["F"]
    else:
        raise ValueError(f"unknown temporal op {kind!r}")
    seed = int(rng.integers(2**31))
    return finite_diff_check(fwd, bwd, inputs, h=h, threshold=threshold, names=names, seed=seed)


def gradient_suite(instances: int = 20, seed: int = 0, configs=None, threshold: float = 1e-5):
    """One result per configuration, each over ``instances`` random instances."""
    rng = np.random.default_rng(seed)
    results = []
    for name, (kind, config) in (configs or ABLATION_CONFIGS).items():
        worst = max(gradcheck_instance(kind, config, rng, threshold=threshold).max_error for _ in range(instances))
        results.append(PropResult(f"gradcheck_{name}", worst <= threshold, worst, instances))
    return results


# --- oracle equivalence -------------------------------------------------------

ORACLE_KERNEL_SETS = [cfg for kind, cfg in ABLATION_CONFIGS.values() if kind == "mixtconv"]


def _random_mix_case(rng):
    cfg = ORACLE_KERNEL_SETS[rng.integers(len(ORACLE_KERNEL_SETS))]
    g = len(cfg.kernel_sizes)
    C = int(rng.integers(g, 17))
    T, H, W, B = (int(v) for v in rng.integers(1, [9, 5, 5, 3]))
    spec = cfg.build(C, dtype=np.float64)
    spec = spec.with_weights([rng.standard_normal(w.shape) for w in spec.weights])
    return rng.standard_normal((B, T, C, H, W)), spec


def oracle_equivalence(cases: int = 200, seed: int = 3, tol: float = 1e-6, dtype=np.float64):
    """Vectorized operators vs the nested-loop oracles on random small instances."""
    rng = np.random.default_rng(seed)
    worst = {"depthwise1d": 0.0, "mixtconv": 0.0, "ordinary1d": 0.0, "conv2d": 0.0}

    for _ in range(cases):
        N, c, T = (int(v) for v in rng.integers(1, [5, 9, 9]))
        k = int(rng.choice([1, 3, 5, 7]))
        d = int(rng.integers(1, 4))
        x = rng.standard_normal((N, c, T)).astype(dtype)
        w = rng.standard_normal((c, k)).astype(dtype)
        diff = np.abs(temporal.depthwise_conv1d_forward(x, w, d) - oracles.naive_depthwise_conv1d(x, w, d))
        worst["depthwise1d"] = max(worst["depthwise1d"], float(diff.max()))

        F, spec = _random_mix_case(rng)
        F = F.astype(dtype)
        spec = spec.astype(dtype)
        ref = oracles.naive_mixtconv(F, spec.kernel_sizes, spec.dilations, spec.channel_split, spec.weights)
        worst["mixtconv"] = max(worst["mixtconv"], float(np.abs(temporal.mixtconv_forward(F, spec) - ref).max()))

        Ci, Co = (int(v) for v in rng.integers(1, 7, size=2))
        T, H, W = (int(v) for v in rng.integers(1, [9, 4, 4]))
        k = int(rng.choice([1, 3, 5]))
        F = rng.standard_normal((1, T, Ci, H, W)).astype(dtype)
        Wt = rng.standard_normal((Co, Ci, k)).astype(dtype)
        diff = np.abs(temporal.ordinary_conv1d_forward(F, Wt) - oracles.naive_ordinary_conv1d(F, Wt))
        worst["ordinary1d"] = max(worst["ordinary1d"], float(diff.max()))

        worst["conv2d"] = max(worst["conv2d"], _conv2d_case(rng, dtype))

    return [PropResult(f"oracle_{name}", err <= tol, err, cases) for name, err in worst.items()]


def _conv2d_case(rng, dtype) -> float:
    groups = int(rng.choice([1, 2, 4]))
    cin = groups * int(rng.integers(1, 4 // groups + 1)) if groups < 4 else 4
    cout = groups * int(rng.integers(1, 4 // groups + 1)) if groups < 4 else 4
    k = int(rng.choice([1, 3, 5]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, k // 2 + 1))
    n = int(rng.integers(1, 5))
    h = int(rng.integers(max(1, k - 2 * pad), 9))
    w = int(rng.integers(max(1, k - 2 * pad), 9))
    x = rng.standard_normal((n, cin, h, w)).astype(dtype)
    weight = rng.standard_normal((cout, cin // groups, k, k)).astype(dtype)
    bias = rng.standard_normal(cout).astype(dtype) if rng.random() < 0.5 else None
    spec = spatial.Conv2DSpec(cin, cout, (k, k), stride, pad, groups, weight, bias)
    ref = oracles.naive_conv2d(x, weight, bias, stride, pad, groups)
    return float(np.abs(spatial.conv2d_forward(x, spec) - ref).max())


# --- network-level properties ---------------------------------------------------


def toy_networks(frames: int = 2, classes: int = 10, mixspec="ks=1,3,5,7", position="head"):
    """TSN and MSTNet at toy scale (widths / 8, 32x32 input)."""
    tsn = netgraph.build_tsn(frames, classes, resolution=32, width_scale=1 / 8)
    mst = netgraph.build_mstnet(frames, classes, mixspec, position, resolution=32, width_scale=1 / 8)
    return tsn, mst


def identity_insertion(seed: int = 11, frames: int = 2, batch: int = 2, tol: float = 1e-5, positions=("head", "inner")):
    """Identity-initialized MSTNet equals TSN on the same 2D weights."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for position in positions:
        tsn, mst = toy_networks(frames, position=position)
        weights = netgraph.init_weights(mst, seed=seed, temporal_init="identity")
        weights_2d = {k: v for k, v in weights.items() if ".temporal." not in k}
        x = rng.standard_normal((batch, frames, 3, 32, 32)).astype(np.float32)
        diff = np.abs(netgraph.network_forward(mst, weights, x) - netgraph.network_forward(tsn, weights_2d, x))
        worst = max(worst, float(diff.max()))
    return PropResult("identity_insertion", worst <= tol, worst, len(positions))


def tsn_permutation_invariance(seed: int = 5, frames: int = 4, batch: int = 2, tol: float = 1e-6, trials: int = 3):
    rng = np.random.default_rng(seed)
    tsn, _ = toy_networks(frames)
    weights = netgraph.init_weights(tsn, seed=seed)
    x = rng.standard_normal((batch, frames, 3, 32, 32)).astype(np.float32)
    base = netgraph.network_forward(tsn, weights, x)
    worst = 0.0
    for _ in range(trials):
        perm = rng.permutation(frames)
        worst = max(worst, float(np.abs(netgraph.network_forward(tsn, weights, x[:, perm]) - base).max()))
    return PropResult("tsn_permutation_invariance", worst <= tol, worst, trials)


def mstnet_order_sensitivity(seed: int = 5, frames: int = 4, batch: int = 2, threshold: float = 1e-3):
    """Passes when reversing the frames changes MSTNet scores by more than ``threshold``."""
    rng = np.random.default_rng(seed)
    _, mst = toy_networks(frames)
    weights = netgraph.init_weights(mst, seed=seed, temporal_init="uniform")
    x = rng.standard_normal((batch, frames, 3, 32, 32)).astype(np.float32)
    a = netgraph.network_forward(mst, weights, x)
    b = netgraph.network_forward(mst, weights, x[:, ::-1])
    diff = float(np.abs(a - b).max())
    return PropResult("mstnet_order_sensitivity", diff > threshold, diff)
