"""TSN and MSTNet networks on a ResNet-50 skeleton.

A network is described declaratively by :class:`NetworkSpec`. The layer
plan (:func:`layer_plan`) and :func:`block_convs` drive weight shapes, the
forward pass and the cost model, so they cannot disagree about geometry.

Weight layer paths (one ``<path>.mxt`` file each in a weight bundle)::

    stem.conv.weight                 stem.bn.{gamma,beta,mean,var}
    layer{s}.{b}.conv{1,2,3}.weight  layer{s}.{b}.bn{1,2,3}.{gamma,beta,mean,var}
    layer{s}.{b}.downsample.conv.weight
    layer{s}.{b}.downsample.bn.{gamma,beta,mean,var}
    layer{s}.{b}.temporal.weight     one record per group (mixtconv) or [C, C, k] (ordinary1d)
    fc.weight                        fc.bias

Stages are ``layer1`` .. ``layer4`` and blocks are numbered from 0.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from . import spatial, temporal
from .errors import InvalidShape
from .temporal import MixTConvConfig, MixTConvSpec, ShiftSpec
from .tensor import load_tensors, save_tensors

STAGE_BLOCKS = (3, 4, 6, 3)
STAGE_MID_WIDTHS = (64, 128, 256, 512)
STEM_WIDTH = 64
EXPANSION = 4
TEMPORAL_KINDS = ("none", "mixtconv", "shift", "ordinary1d")
POSITIONS = ("head", "inner")
BN_FIELDS = ("gamma", "beta", "mean", "var")


@dataclass(frozen=True)
class TemporalOp:
    """Which temporal operator a block carries and how it is configured."""

    kind: str = "none"
    mix: MixTConvConfig | None = None
    shift: ShiftSpec | None = None
    kernel_size: int = 3  # ordinary1d only

    def __post_init__(self):
        if self.kind not in TEMPORAL_KINDS:
            raise ValueError(f"unknown temporal op {self.kind!r}")
        if self.kind == "mixtconv" and self.mix is None:
            object.__setattr__(self, "mix", MixTConvConfig())
        if self.kind == "shift" and self.shift is None:
            object.__setattr__(self, "shift", ShiftSpec())
        if self.kind == "ordinary1d":
            temporal._check_kernel_size(self.kernel_size)


@dataclass(frozen=True)
class BlockSpec:
    """Bottleneck block: 1x1 (c_in->c_mid), 3x3 stride s, 1x1 (c_mid->c_out).

    ``head`` puts the temporal op on the residual branch input, before the
    first 1x1 conv; ``inner`` puts it right after the first 1x1 conv (and
    its BN/ReLU). The shortcut never passes through the temporal op.
    """

    name: str
    c_in: int
    c_mid: int
    c_out: int
    stride: int = 1
    temporal: TemporalOp = TemporalOp()
    position: str = "head"

    def __post_init__(self):
        if self.c_out != EXPANSION * self.c_mid:
            raise InvalidShape(f"{self.name}: c_out={self.c_out} must be {EXPANSION} * c_mid={self.c_mid}")
        if self.position not in POSITIONS:
            raise ValueError(f"unknown position {self.position!r}")

    @property
    def temporal_channels(self) -> int:
        return self.c_in if self.position == "head" else self.c_mid

    @property
    def has_downsample(self) -> bool:
        return self.stride != 1 or self.c_in != self.c_out


@dataclass
class NetworkSpec:
    name: str
    frames: int
    classes: int
    resolution: int = 224
    stem_width: int = STEM_WIDTH
    blocks: list[BlockSpec] = field(default_factory=list)
    stage_blocks: tuple[int, ...] = STAGE_BLOCKS
    consensus: str = "average"

    def __post_init__(self):
        if self.frames < 1 or self.classes < 1 or self.resolution < 1:
            raise InvalidShape("frames, classes and resolution must be positive")
        if len(self.blocks) != sum(self.stage_blocks):
            raise InvalidShape(f"{len(self.blocks)} blocks for stages {self.stage_blocks}")
        prev = self.stem_width
        for b in self.blocks:
            if b.c_in != prev:
                raise InvalidShape(f"{b.name}: c_in={b.c_in} but predecessor emits {prev}")
            prev = b.c_out

    @property
    def feature_width(self) -> int:
        return self.blocks[-1].c_out

    def stage_widths(self) -> list[int]:
        widths, i = [], 0
        for n in self.stage_blocks:
            i += n
            widths.append(self.blocks[i - 1].c_out)
        return widths

    def temporal_kinds(self) -> set[str]:
        return {b.temporal.kind for b in self.blocks}


def _backbone(name, frames, classes, resolution, width_scale, op: TemporalOp, position) -> NetworkSpec:
    if width_scale <= 0:
        raise InvalidShape("width_scale must be positive")
    stem = max(1, int(round(STEM_WIDTH * width_scale)))
    blocks, c_in = [], stem
    for s, (n, mid) in enumerate(zip(STAGE_BLOCKS, STAGE_MID_WIDTHS), start=1):
        c_mid = max(1, int(round(mid * width_scale)))
        for b in range(n):
            stride = 2 if (b == 0 and s > 1) else 1
            block = BlockSpec(f"layer{s}.{b}", c_in, c_mid, EXPANSION * c_mid, stride, op, position)
            if op.kind == "mixtconv":
                temporal.partition_channels(block.temporal_channels, len(op.mix.kernel_sizes))
            elif op.kind == "shift":
                op.shift.channel_counts(block.temporal_channels)
            blocks.append(block)
            c_in = block.c_out
    return NetworkSpec(name, frames, classes, resolution, stem, blocks)


def build_tsn(frames: int, classes: int, resolution: int = 224, width_scale: float = 1.0) -> NetworkSpec:
    """ResNet-50 per-frame network with average consensus and no temporal ops."""
    return _backbone("tsn", frames, classes, resolution, width_scale, TemporalOp("none"), "head")


def build_mstnet(
    frames: int,
    classes: int,
    mixspec: MixTConvConfig | str | None = None,
    position: str = "head",
    resolution: int = 224,
    width_scale: float = 1.0,
) -> NetworkSpec:
    """ResNet-50 with a MixTConv in every one of the 16 bottleneck blocks.

    Raises:
        InvalidPartition: a block has fewer channels than MixTConv groups.
    """
    if mixspec is None:
        mixspec = MixTConvConfig()
    elif isinstance(mixspec, str):
        mixspec = MixTConvConfig.parse(mixspec)
    op = TemporalOp("mixtconv", mix=mixspec)
    return _backbone("mstnet", frames, classes, resolution, width_scale, op, position)


def build_network(
    net: str = "tsn",
    frames: int = 8,
    classes: int = 174,
    resolution: int = 224,
    position: str = "head",
    temporal_kind: str | None = None,
    mixspec: MixTConvConfig | str | None = None,
    shift: ShiftSpec | None = None,
    kernel_size: int = 3,
    width_scale: float = 1.0,
) -> NetworkSpec:
    """Generic builder covering TSN, MSTNet and the shift / ordinary-1D variants."""
    if net not in ("tsn", "mstnet"):
        raise ValueError(f"unknown network {net!r}")
    kind = temporal_kind or ("none" if net == "tsn" else "mixtconv")
    if net == "tsn" and kind != "none":
        raise ValueError("tsn carries no temporal op; use net=mstnet with temporal=...")
    if kind == "mixtconv":
        return build_mstnet(frames, classes, mixspec, position, resolution, width_scale)
    if kind == "none":
        return build_tsn(frames, classes, resolution, width_scale)
    op = TemporalOp(kind, shift=shift, kernel_size=kernel_size)
    return _backbone(f"mstnet-{kind}", frames, classes, resolution, width_scale, op, position)


# --- layer plan --------------------------------------------------------------


@dataclass(frozen=True)
class Layer:
    """One step of the forward plan with its geometry at the input."""

    path: str
    kind: str  # conv | bn | relu | maxpool | temporal | add | avgpool | fc
    channels: int
    hw: tuple[int, int]
    conv: spatial.Conv2DSpec | None = None
    block: BlockSpec | None = None
    out_features: int = 0


def stem_conv(net: NetworkSpec) -> spatial.Conv2DSpec:
    return spatial.Conv2DSpec(3, net.stem_width, (7, 7), stride=2, padding=3)


def block_convs(block: BlockSpec) -> dict[str, spatial.Conv2DSpec]:
    """Weightless conv geometry of a bottleneck block, keyed by layer name."""
    convs = {
        "conv1": spatial.Conv2DSpec(block.c_in, block.c_mid, (1, 1)),
        "conv2": spatial.Conv2DSpec(block.c_mid, block.c_mid, (3, 3), stride=block.stride, padding=1),
        "conv3": spatial.Conv2DSpec(block.c_mid, block.c_out, (1, 1)),
    }
    if block.has_downsample:
        convs["downsample.conv"] = spatial.Conv2DSpec(block.c_in, block.c_out, (1, 1), stride=block.stride)
    return convs


def _pool_hw(h: int, w: int) -> tuple[int, int]:
    return (h + 2 - 3) // 2 + 1, (w + 2 - 3) // 2 + 1


def layer_plan(net: NetworkSpec) -> Iterator[Layer]:
    """Yield the parameterised and pooling layers with their input geometry."""
    r = net.resolution
    stem = stem_conv(net)
    yield Layer("stem.conv", "conv", 3, (r, r), stem)
    h, w = stem.output_hw(r, r)
    yield Layer("stem.bn", "bn", net.stem_width, (h, w))
    yield Layer("stem.maxpool", "maxpool", net.stem_width, (h, w))
    h, w = _pool_hw(h, w)
    for b in net.blocks:
        p, convs = b.name, block_convs(b)
        if b.temporal.kind != "none" and b.position == "head":
            yield Layer(f"{p}.temporal", "temporal", b.c_in, (h, w), block=b)
        yield Layer(f"{p}.conv1", "conv", b.c_in, (h, w), convs["conv1"])
        yield Layer(f"{p}.bn1", "bn", b.c_mid, (h, w))
        if b.temporal.kind != "none" and b.position == "inner":
            yield Layer(f"{p}.temporal", "temporal", b.c_mid, (h, w), block=b)
        yield Layer(f"{p}.conv2", "conv", b.c_mid, (h, w), convs["conv2"])
        ho, wo = convs["conv2"].output_hw(h, w)
        yield Layer(f"{p}.bn2", "bn", b.c_mid, (ho, wo))
        yield Layer(f"{p}.conv3", "conv", b.c_mid, (ho, wo), convs["conv3"])
        yield Layer(f"{p}.bn3", "bn", b.c_out, (ho, wo))
        if b.has_downsample:
            yield Layer(f"{p}.downsample.conv", "conv", b.c_in, (h, w), convs["downsample.conv"])
            yield Layer(f"{p}.downsample.bn", "bn", b.c_out, (ho, wo))
        h, w = ho, wo
    yield Layer("avgpool", "avgpool", net.feature_width, (h, w))
    yield Layer("fc", "fc", net.feature_width, (1, 1), out_features=net.classes)


def temporal_weight_shape(block: BlockSpec):
    """Shape of the temporal weights of ``block`` (a list of shapes for MixTConv)."""
    op, c = block.temporal, block.temporal_channels
    if op.kind == "mixtconv":
        split = temporal.partition_channels(c, len(op.mix.kernel_sizes))
        return [(cm, k) for cm, k in zip(split, op.mix.kernel_sizes)]
    if op.kind == "ordinary1d":
        return (c, c, op.kernel_size)
    return None


def weight_shapes(net: NetworkSpec) -> dict:
    shapes = {}
    for layer in layer_plan(net):
        if layer.kind == "conv":
            shapes[f"{layer.path}.weight"] = layer.conv.weight_shape
        elif layer.kind == "bn":
            for f in BN_FIELDS:
                shapes[f"{layer.path}.{f}"] = (layer.channels,)
        elif layer.kind == "temporal":
            shape = temporal_weight_shape(layer.block)
            if shape is not None:
                shapes[f"{layer.path}.weight"] = shape
        elif layer.kind == "fc":
            shapes["fc.weight"] = (layer.out_features, layer.channels)
            shapes["fc.bias"] = (layer.out_features,)
    return shapes


def init_weights(net: NetworkSpec, seed: int = 42, dtype=np.float32, temporal_init: str | None = None) -> dict:
    """Seeded weights: He-normal convs, mildly perturbed frozen BN, small fc.

    Temporal kernels follow the MixTConv ``init`` mode unless
    ``temporal_init`` overrides it. Ordinary 1D weights start as identity
    (center tap is the identity matrix).
    """
    rng = np.random.default_rng(seed)
    weights = {}
    for layer in layer_plan(net):
        if layer.kind == "conv":
            shape = layer.conv.weight_shape
            fan_in = int(np.prod(shape[1:]))
            weights[f"{layer.path}.weight"] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
        elif layer.kind == "bn":
            c = layer.channels
            # bn3 damped so the residual stream stays O(1) through 16 blocks
            g_hi = 0.5 if layer.path.endswith("bn3") else 1.0
            weights[f"{layer.path}.gamma"] = rng.uniform(0.5 * g_hi, g_hi, c).astype(dtype)
            weights[f"{layer.path}.beta"] = rng.normal(0, 0.1, c).astype(dtype)
            weights[f"{layer.path}.mean"] = rng.normal(0, 0.1, c).astype(dtype)
            weights[f"{layer.path}.var"] = rng.uniform(0.5, 1.5, c).astype(dtype)
        elif layer.kind == "temporal":
            op = layer.block.temporal
            if op.kind == "mixtconv":
                split = temporal.partition_channels(layer.channels, len(op.mix.kernel_sizes))
                mode = temporal_init or op.mix.init
                weights[f"{layer.path}.weight"] = temporal.init_kernels(op.mix.kernel_sizes, split, mode, rng, dtype)
            elif op.kind == "ordinary1d":
                c, k = layer.channels, op.kernel_size
                w = np.zeros((c, c, k), dtype=dtype)
                w[:, :, (k - 1) // 2] = np.eye(c, dtype=dtype)
                if temporal_init == "uniform":
                    w = rng.uniform(-1, 1, (c, c, k)).astype(dtype) / np.sqrt(c * k)
                weights[f"{layer.path}.weight"] = w
        elif layer.kind == "fc":
            bound = 1.0 / np.sqrt(layer.channels)
            weights["fc.weight"] = rng.uniform(-bound, bound, (layer.out_features, layer.channels)).astype(dtype)
            weights["fc.bias"] = rng.uniform(-bound, bound, layer.out_features).astype(dtype)
    return weights


def check_weights(net: NetworkSpec, weights: dict) -> None:
    """Raise :class:`InvalidShape` unless ``weights`` has exactly the expected entries."""
    shapes = weight_shapes(net)
    missing = sorted(set(shapes) - set(weights))
    extra = sorted(set(weights) - set(shapes))
    if missing or extra:
        raise InvalidShape(f"weight bundle mismatch: missing={missing[:5]} unexpected={extra[:5]}")
    for key, shape in shapes.items():
        value = weights[key]
        got = [tuple(np.shape(v)) for v in value] if isinstance(shape, list) else tuple(np.shape(value))
        if isinstance(shape, list) and (not isinstance(value, (list, tuple)) or got != shape):
            raise InvalidShape(f"{key}: shapes {got}, expected {shape}")
        if not isinstance(shape, list) and got != tuple(shape):
            raise InvalidShape(f"{key}: shape {got}, expected {tuple(shape)}")


# --- forward -------------------------------------------------------------------


def _bn(weights, path) -> spatial.BatchNormSpec:
    return spatial.BatchNormSpec(*(weights[f"{path}.{f}"] for f in BN_FIELDS))


def _conv(spec: spatial.Conv2DSpec, weights, path) -> spatial.Conv2DSpec:
    return replace(spec, weight=np.asarray(weights[f"{path}.weight"]))


def mixtconv_spec_for(block: BlockSpec, weights: dict) -> MixTConvSpec:
    op = block.temporal
    split = temporal.partition_channels(block.temporal_channels, len(op.mix.kernel_sizes))
    return MixTConvSpec(op.mix.kernel_sizes, op.mix.dilations, split, list(weights[f"{block.name}.temporal.weight"]))


def apply_temporal(x: np.ndarray, block: BlockSpec, weights: dict, frames: int) -> np.ndarray:
    """Run the block's temporal op on per-frame features ``[B*T, C, H, W]``."""
    n, c, h, w = x.shape
    video = x.reshape(n // frames, frames, c, h, w)
    op = block.temporal
    if op.kind == "mixtconv":
        out = temporal.mixtconv_forward(video, mixtconv_spec_for(block, weights))
    elif op.kind == "shift":
        out = temporal.shift_forward(video, op.shift)
    elif op.kind == "ordinary1d":
        out = temporal.ordinary_conv1d_forward(video, weights[f"{block.name}.temporal.weight"])
    else:
        return x
    return out.reshape(n, c, h, w)


def consensus_average(scores) -> np.ndarray:
    """Video score as the arithmetic mean of per-frame scores ``[B, T, K] -> [B, K]``."""
    scores = np.asarray(scores)
    if scores.ndim != 3 or scores.shape[1] < 1:
        raise InvalidShape(f"expected [B, T, K], got {scores.shape}")
    return scores.mean(axis=1)


def block_forward(x: np.ndarray, block: BlockSpec, weights: dict, frames: int) -> np.ndarray:
    """Bottleneck block on ``[B*T, C, H, W]``; the temporal op touches only the residual branch."""
    p, convs = block.name, block_convs(block)
    out = x
    if block.position == "head":
        out = apply_temporal(out, block, weights, frames)
    out = spatial.conv2d_forward(out, _conv(convs["conv1"], weights, f"{p}.conv1"))
    out = spatial.relu(spatial.batchnorm_infer(out, _bn(weights, f"{p}.bn1")))
    if block.position == "inner":
        out = apply_temporal(out, block, weights, frames)
    out = spatial.conv2d_forward(out, _conv(convs["conv2"], weights, f"{p}.conv2"))
    out = spatial.relu(spatial.batchnorm_infer(out, _bn(weights, f"{p}.bn2")))
    out = spatial.conv2d_forward(out, _conv(convs["conv3"], weights, f"{p}.conv3"))
    out = spatial.batchnorm_infer(out, _bn(weights, f"{p}.bn3"))
    shortcut = x
    if block.has_downsample:
        shortcut = spatial.conv2d_forward(x, _conv(convs["downsample.conv"], weights, f"{p}.downsample.conv"))
        shortcut = spatial.batchnorm_infer(shortcut, _bn(weights, f"{p}.downsample.bn"))
    return spatial.relu(out + shortcut)


def network_forward(net: NetworkSpec, weights: dict, x, return_frame_scores: bool = False):
    """Per-video class scores ``[B, classes]`` for clips ``x`` of shape ``[B, T, 3, H, W]``.

    Each frame goes through the 2D pathway, temporal ops mix frames inside
    the blocks, and the video score is the mean of the frame scores. With
    ``return_frame_scores`` the ``[B, T, classes]`` frame scores are returned
    as a second value.
    """
    x = np.asarray(x)
    T, r = net.frames, net.resolution
    if x.ndim != 5 or x.shape[1:] != (T, 3, r, r):
        raise InvalidShape(f"input {x.shape}, expected [B, {T}, 3, {r}, {r}]")
    check_weights(net, weights)
    B = x.shape[0]
    h = x.reshape(B * T, 3, r, r)
    h = spatial.conv2d_forward(h, _conv(stem_conv(net), weights, "stem.conv"))
    h = spatial.relu(spatial.batchnorm_infer(h, _bn(weights, "stem.bn")))
    h = spatial.maxpool2d(h, 3, 2, 1)
    for block in net.blocks:
        h = block_forward(h, block, weights, T)
    h = spatial.global_avgpool(h)
    h = spatial.linear_forward(h, weights["fc.weight"], weights["fc.bias"])
    frame_scores = h.reshape(B, T, net.classes)
    video_scores = consensus_average(frame_scores)
    return (video_scores, frame_scores) if return_frame_scores else video_scores


# --- segment sampling ----------------------------------------------------------


def sample_segments(n_frames: int, T: int, mode: str = "center", seed: int | None = None) -> list[int]:
    """One frame index per segment of a video split into ``T`` contiguous segments.

    Segments are as even as possible, earlier ones taking the extra frames.
    ``center`` picks offset ``(len - 1) // 2`` inside each segment, ``random``
    a seeded uniform offset. With fewer frames than segments, frames are
    repeated (``[0, 0, 0, 1, 1, 1, 2, 2]`` for 3 frames, T=8).
    """
    if n_frames < 1 or T < 1:
        raise ValueError("n_frames and T must be positive")
    if mode not in ("center", "random"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    if n_frames < T:
        base, extra = divmod(T, n_frames)
        out = []
        for f in range(n_frames):
            out += [f] * (base + (1 if f < extra else 0))
        return out
    base, extra = divmod(n_frames, T)
    rng = np.random.default_rng(seed) if mode == "random" else None
    out, start = [], 0
    for i in range(T):
        length = base + (1 if i < extra else 0)
        offset = (length - 1) // 2 if rng is None else int(rng.integers(length))
        out.append(start + offset)
        start += length
    return out


# --- config and weight bundles ------------------------------------------------------


CONFIG_KEYS = ("net", "frames", "classes", "resolution", "position", "temporal", "mixtconv", "width_scale")


def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines (``#`` comments allowed) into a dict of strings."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unrecognised config entry {raw!r}")
        cfg[key] = value.strip()
    return cfg


def network_from_config(cfg: dict) -> NetworkSpec:
    """Build a network from a (string or typed) config mapping."""
    net = cfg.get("net", "tsn")
    kind = cfg.get("temporal") or None
    mix = cfg.get("mixtconv")
    return build_network(
        net=net,
        frames=int(cfg.get("frames", 8)),
        classes=int(cfg.get("classes", 174)),
        resolution=int(cfg.get("resolution", 224)),
        position=cfg.get("position", "head"),
        temporal_kind=kind,
        mixspec=MixTConvConfig.parse(mix) if isinstance(mix, str) else mix,
        width_scale=float(cfg.get("width_scale", 1.0)),
    )


def save_weights(directory: str | os.PathLike, weights: dict) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for key, value in weights.items():
        records = value if isinstance(value, (list, tuple)) else [value]
        save_tensors(d / f"{key}.mxt", records)


def load_weights(directory: str | os.PathLike, net: NetworkSpec) -> dict:
    """Load a bundle written by :func:`save_weights` and validate it against ``net``."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"weight directory {d} does not exist")
    shapes = weight_shapes(net)
    weights = {}
    for key, shape in shapes.items():
        f = d / f"{key}.mxt"
        if not f.exists():
            raise InvalidShape(f"weight bundle is missing {f.name}")
        records = [t.numpy() for t in load_tensors(f)]
        weights[key] = records if isinstance(shape, list) else (records[0] if len(records) == 1 else records)
    check_weights(net, weights)
    return weights
