"""Temporal operators on ``[B, T, C, H, W]`` feature maps.

MixTConv splits the channels into groups and runs a depthwise 1D
convolution along T in each group, every group with its own kernel size and
dilation. Kernels are applied as cross-correlations: weight slot
``(k - 1) // 2 + j`` multiplies the input ``j * d`` frames ahead, and taps
that fall outside ``[0, T)`` read zeros, so T is preserved. There is no
bias anywhere.

The shift operation and the ordinary (channel-mixing) 1D convolution live
here too because MixTConv is measured against them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidKernel, InvalidPartition, InvalidShape

TIME_AXIS = 1
CHANNEL_AXIS = 2
INIT_MODES = ("identity", "uniform")


def partition_channels(C: int, g: int) -> list[int]:
    """Split C channels into g groups: floor(C/g) each, remainder to the earliest groups.

    >>> partition_channels(10, 4)
    [3, 3, 2, 2]
    """
    if g < 1 or C < g:
        raise InvalidPartition(f"cannot split {C} channels into {g} non-empty groups")
    base, extra = divmod(C, g)
    return [base + 1 if m < extra else base for m in range(g)]


def _check_kernel_size(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise InvalidKernel(f"kernel size must be odd and positive, got {k}")


def _offsets(k: int, dilation: int) -> list[int]:
    half = (k - 1) // 2
    return [(slot - half) * dilation for slot in range(k)]


def _shifted(x: np.ndarray, offset: int, axis: int) -> np.ndarray:
    """``y[t] = x[t + offset]`` along ``axis``, zero where ``t + offset`` is out of range."""
    y = np.zeros_like(x)
    n = x.shape[axis]
    if offset == 0:
        y[...] = x
    elif abs(offset) < n:
        dst = [slice(None)] * x.ndim
        src = [slice(None)] * x.ndim
        if offset > 0:
            dst[axis], src[axis] = slice(0, n - offset), slice(offset, n)
        else:
            dst[axis], src[axis] = slice(-offset, n), slice(0, n + offset)
        y[tuple(dst)] = x[tuple(src)]
    return y


def _channel_view(w_col: np.ndarray, ndim: int, channel_axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[channel_axis] = w_col.shape[0]
    return w_col.reshape(shape)


def _depthwise(x, w, dilation, time_axis, channel_axis):
    out = np.zeros_like(x)
    for slot, off in enumerate(_offsets(w.shape[1], dilation)):
        out += _channel_view(w[:, slot], x.ndim, channel_axis) * _shifted(x, off, time_axis)
    return out


def _depthwise_backward(x, w, dz, dilation, time_axis, channel_axis):
    dx = np.zeros_like(dz)
    dw = np.zeros_like(w)
    reduce_axes = tuple(a for a in range(x.ndim) if a != channel_axis)
    for slot, off in enumerate(_offsets(w.shape[1], dilation)):
        dx += _channel_view(w[:, slot], x.ndim, channel_axis) * _shifted(dz, -off, time_axis)
        dw[:, slot] = np.sum(_shifted(x, off, time_axis) * dz, axis=reduce_axes)
    return dx, dw


def _check_depthwise_args(x, w, dilation, channels):
    if w.ndim != 2:
        raise InvalidShape(f"depthwise weights must be [c, k], got {w.shape}")
    _check_kernel_size(w.shape[1])
    if w.shape[0] != channels:
        raise InvalidShape(f"weights cover {w.shape[0]} channels, input has {channels}")
    if dilation < 1:
        raise InvalidKernel(f"dilation must be >= 1, got {dilation}")


def depthwise_conv1d_forward(x, w, dilation: int = 1) -> np.ndarray:
    """Depthwise temporal convolution of fibers ``x`` shaped ``[N, c, T]`` with ``w`` ``[c, k]``."""
    x = np.asarray(x)
    w = np.asarray(w, dtype=x.dtype)
    if x.ndim != 3:
        raise InvalidShape(f"expected [N, c, T], got {x.shape}")
    _check_depthwise_args(x, w, dilation, x.shape[1])
    return _depthwise(x, w, dilation, time_axis=2, channel_axis=1)


def depthwise_conv1d_backward(x, w, dz, dilation: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Gradients ``(dx, dw)`` of :func:`depthwise_conv1d_forward`."""
    x = np.asarray(x)
    w = np.asarray(w, dtype=x.dtype)
    dz = np.asarray(dz, dtype=x.dtype)
    if x.ndim != 3 or dz.shape != x.shape:
        raise InvalidShape(f"upstream {dz.shape} does not match input {x.shape}")
    _check_depthwise_args(x, w, dilation, x.shape[1])
    return _depthwise_backward(x, w, dz, dilation, time_axis=2, channel_axis=1)


# --- MixTConv -------------------------------------------------------------


@dataclass
class MixTConvSpec:
    """Groups of depthwise temporal kernels covering consecutive channel ranges.

    ``weights[m]`` has shape ``[channel_split[m], kernel_sizes[m]]``.
    """

    kernel_sizes: tuple[int, ...]
    dilations: tuple[int, ...]
    channel_split: tuple[int, ...]
    weights: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        self.dilations = tuple(int(d) for d in self.dilations)
        self.channel_split = tuple(int(c) for c in self.channel_split)
        g = len(self.kernel_sizes)
        if g < 1 or len(self.dilations) != g or len(self.channel_split) != g:
            raise InvalidShape("kernel_sizes, dilations and channel_split must have one entry per group")
        for k in self.kernel_sizes:
            _check_kernel_size(k)
        if any(d < 1 for d in self.dilations):
            raise InvalidKernel(f"dilations must be >= 1, got {self.dilations}")
        if any(c < 1 for c in self.channel_split):
            raise InvalidPartition(f"empty group in split {self.channel_split}")
        if len(self.weights) != g:
            raise InvalidShape(f"expected {g} weight arrays, got {len(self.weights)}")
        self.weights = [np.asarray(w) for w in self.weights]
        for w, c, k in zip(self.weights, self.channel_split, self.kernel_sizes):
            if w.shape != (c, k):
                raise InvalidShape(f"group weight shape {w.shape}, expected {(c, k)}")

    @property
    def group_count(self) -> int:
        return len(self.kernel_sizes)

    @property
    def channels(self) -> int:
        return sum(self.channel_split)

    def group_bounds(self) -> list[tuple[int, int]]:
        bounds, start = [], 0
        for c in self.channel_split:
            bounds.append((start, start + c))
            start += c
        return bounds

    def param_count(self) -> int:
        return sum(c * k for c, k in zip(self.channel_split, self.kernel_sizes))

    def with_weights(self, weights: Sequence[np.ndarray]) -> "MixTConvSpec":
        return MixTConvSpec(self.kernel_sizes, self.dilations, self.channel_split, list(weights))

    def astype(self, dtype) -> "MixTConvSpec":
        return self.with_weights([w.astype(dtype) for w in self.weights])


def init_kernels(kernel_sizes, channel_split, mode="identity", rng=None, dtype=np.float32):
    """Per-group weight arrays.

    ``identity`` puts a 1 on the center tap (the operator starts as a no-op);
    ``uniform`` draws from ``U(-sqrt(1/k), sqrt(1/k))``.
    """
    weights = []
    for c, k in zip(channel_split, kernel_sizes):
        if mode == "identity":
            w = np.zeros((c, k), dtype=dtype)
            w[:, (k - 1) // 2] = 1
        elif mode == "uniform":
            rng = rng if rng is not None else np.random.default_rng(0)
            bound = np.sqrt(1.0 / k)
            w = rng.uniform(-bound, bound, size=(c, k)).astype(dtype)
        else:
            raise ValueError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")
        weights.append(w)
    return weights


@dataclass(frozen=True)
class MixTConvConfig:
    """Channel-count-independent description of a MixTConv, e.g. ``ks=1,3,5,7;dil=1,1,1,1;init=identity``."""

    kernel_sizes: tuple[int, ...] = (1, 3, 5, 7)
    dilations: tuple[int, ...] | None = None
    init: str = "identity"

    def __post_init__(self):
        ks = tuple(int(k) for k in self.kernel_sizes)
        dil = tuple(int(d) for d in self.dilations) if self.dilations else (1,) * len(ks)
        if not ks:
            raise InvalidKernel("at least one kernel size is required")
        for k in ks:
            _check_kernel_size(k)
        if len(dil) != len(ks):
            raise InvalidKernel(f"{len(dil)} dilations for {len(ks)} kernel sizes")
        if any(d < 1 for d in dil):
            raise InvalidKernel(f"dilations must be >= 1, got {dil}")
        if self.init not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init!r}")
        object.__setattr__(self, "kernel_sizes", ks)
        object.__setattr__(self, "dilations", dil)

    @classmethod
    def parse(cls, text: str) -> "MixTConvConfig":
        fields = {}
        for item in filter(None, (p.strip() for p in text.split(";"))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"malformed MixTConv field {item!r}")
            fields[key.strip()] = value.strip()
        unknown = set(fields) - {"ks", "dil", "init"}
        if unknown:
            raise ValueError(f"unknown MixTConv fields {sorted(unknown)}")
        if "ks" not in fields:
            raise ValueError("MixTConv string needs ks=...")
        try:
            ks = tuple(int(v) for v in fields["ks"].split(","))
            dil = tuple(int(v) for v in fields["dil"].split(",")) if "dil" in fields else None
        except ValueError as exc:
            raise InvalidKernel(f"non-integer kernel field in {text!r}") from exc
        return cls(ks, dil, fields.get("init", "identity"))

    def __str__(self):
        ks = ",".join(map(str, self.kernel_sizes))
        dil = ",".join(map(str, self.dilations))
        return f"ks={ks};dil={dil};init={self.init}"

    @property
    def mean_kernel_size(self) -> float:
        return sum(self.kernel_sizes) / len(self.kernel_sizes)

    def build(self, channels: int, rng=None, dtype=np.float32) -> MixTConvSpec:
        """Spec for ``channels`` input channels; kernel sizes ascend with channel index."""
        split = partition_channels(channels, len(self.kernel_sizes))
        weights = init_kernels(self.kernel_sizes, split, self.init, rng, dtype)
        return MixTConvSpec(self.kernel_sizes, self.dilations, tuple(split), weights)


def _check_video(F: np.ndarray) -> None:
    if F.ndim != 5:
        raise InvalidShape(f"expected [B, T, C, H, W], got {F.shape}")


def mixtconv_forward(F, spec: MixTConvSpec) -> np.ndarray:
    """Mixed depthwise temporal convolution of ``F`` ``[B, T, C, H, W]``; output has the same shape."""
    F = np.asarray(F)
    _check_video(F)
    if spec.channels != F.shape[CHANNEL_AXIS]:
        raise InvalidShape(f"split covers {spec.channels} channels, input has {F.shape[CHANNEL_AXIS]}")
    parts = []
    for (c0, c1), w, d in zip(spec.group_bounds(), spec.weights, spec.dilations):
        parts.append(_depthwise(F[:, :, c0:c1], w.astype(F.dtype, copy=False), d, TIME_AXIS, CHANNEL_AXIS))
    return np.concatenate(parts, axis=CHANNEL_AXIS)


def mixtconv_backward(F, spec: MixTConvSpec, dZ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Return ``(dF, [dW_1, ..., dW_g])`` for upstream gradient ``dZ``."""
    F = np.asarray(F)
    dZ = np.asarray(dZ, dtype=F.dtype)
    _check_video(F)
    if dZ.shape != F.shape:
        raise InvalidShape(f"upstream {dZ.shape} does not match input {F.shape}")
    if spec.channels != F.shape[CHANNEL_AXIS]:
        raise InvalidShape(f"split covers {spec.channels} channels, input has {F.shape[CHANNEL_AXIS]}")
    dF_parts, dW = [], []
    for (c0, c1), w, d in zip(spec.group_bounds(), spec.weights, spec.dilations):
        dx, dw = _depthwise_backward(
            F[:, :, c0:c1], w.astype(F.dtype, copy=False), dZ[:, :, c0:c1], d, TIME_AXIS, CHANNEL_AXIS
        )
        dF_parts.append(dx)
        dW.append(dw)
    return np.concatenate(dF_parts, axis=CHANNEL_AXIS), dW


# --- shift ------------------------------------------------------------------


@dataclass(frozen=True)
class ShiftSpec:
    """Fractions of channels shifted one frame; the rest stay static.

    Channel blocks are laid out from channel 0 as backward, forward, static.
    """

    forward_fraction: Fraction = Fraction(1, 8)
    backward_fraction: Fraction = Fraction(1, 8)

    def __post_init__(self):
        fwd, bwd = Fraction(self.forward_fraction), Fraction(self.backward_fraction)
        if not (0 <= fwd <= 1 and 0 <= bwd <= 1 and fwd + bwd <= 1):
            raise InvalidPartition(f"invalid shift fractions {fwd}, {bwd}")
        object.__setattr__(self, "forward_fraction", fwd)
        object.__setattr__(self, "backward_fraction", bwd)

    def channel_counts(self, C: int) -> tuple[int, int, int]:
        """``(backward, forward, static)`` channel counts, shifted counts rounded down."""
        n_bwd = int(self.backward_fraction * C)
        n_fwd = int(self.forward_fraction * C)
        return n_bwd, n_fwd, C - n_bwd - n_fwd


# Fixed kernels of the shift: backward-shift, forward-shift, static.
SHIFT_KERNELS = ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0))


def shift_forward(F, spec: ShiftSpec = ShiftSpec()) -> np.ndarray:
    """Backward-shift block: ``out[t] = in[t-1]``; forward-shift block: ``out[t] = in[t+1]``."""
    F = np.asarray(F)
    _check_video(F)
    n_bwd, n_fwd, _ = spec.channel_counts(F.shape[CHANNEL_AXIS])
    out = F.copy()
    out[:, :, :n_bwd] = _shifted(F[:, :, :n_bwd], -1, TIME_AXIS)
    out[:, :, n_bwd:n_bwd + n_fwd] = _shifted(F[:, :, n_bwd:n_bwd + n_fwd], 1, TIME_AXIS)
    return out


def shift_backward(dZ, spec: ShiftSpec = ShiftSpec()) -> np.ndarray:
    """Gradient of :func:`shift_forward` (the opposite shift, zero filled)."""
    dZ = np.asarray(dZ)
    _check_video(dZ)
    n_bwd, n_fwd, _ = spec.channel_counts(dZ.shape[CHANNEL_AXIS])
    dF = dZ.copy()
    dF[:, :, :n_bwd] = _shifted(dZ[:, :, :n_bwd], 1, TIME_AXIS)
    dF[:, :, n_bwd:n_bwd + n_fwd] = _shifted(dZ[:, :, n_bwd:n_bwd + n_fwd], -1, TIME_AXIS)
    return dF


def shift_as_mixtconv(C: int, spec: ShiftSpec = ShiftSpec(), dtype=np.float32) -> MixTConvSpec:
    """The fixed-weight kernel-3 MixTConv that reproduces :func:`shift_forward`."""
    counts = spec.channel_counts(C)
    split, weights = [], []
    for n, kernel in zip(counts, SHIFT_KERNELS):
        if n:
            split.append(n)
            weights.append(np.tile(np.asarray(kernel, dtype=dtype), (n, 1)))
    return MixTConvSpec((3,) * len(split), (1,) * len(split), tuple(split), weights)


# --- ordinary 1D ------------------------------------------------------------


def _check_ordinary(F, W):
    _check_video(F)
    if W.ndim != 3:
        raise InvalidShape(f"weights must be [C_out, C_in, k], got {W.shape}")
    _check_kernel_size(W.shape[2])
    if W.shape[1] != F.shape[CHANNEL_AXIS]:
        raise InvalidShape(f"weights expect {W.shape[1]} input channels, input has {F.shape[CHANNEL_AXIS]}")


def ordinary_conv1d_forward(F, W, dilation: int = 1) -> np.ndarray:
    """Channel-mixing temporal convolution: ``out[o, t] = sum_{i, j} F[i, t + j*d] W[o, i, center + j]``."""
    F = np.asarray(F)
    W = np.asarray(W, dtype=F.dtype)
    _check_ordinary(F, W)
    B, T, _, H, Wd = F.shape
    out = np.zeros((B, T, W.shape[0], H, Wd), dtype=F.dtype)
    for slot, off in enumerate(_offsets(W.shape[2], dilation)):
        out += np.einsum("btchw,oc->btohw", _shifted(F, off, TIME_AXIS), W[:, :, slot], optimize=True)
    return out


def ordinary_conv1d_backward(F, W, dZ, dilation: int = 1) -> tuple[np.ndarray, np.ndarray]:
    F = np.asarray(F)
    W = np.asarray(W, dtype=F.dtype)
    dZ = np.asarray(dZ, dtype=F.dtype)
    _check_ordinary(F, W)
    expected = F.shape[:2] + (W.shape[0],) + F.shape[3:]
    if dZ.shape != expected:
        raise InvalidShape(f"upstream {dZ.shape}, expected {expected}")
    dF = np.zeros_like(F)
    dW = np.zeros_like(W)
    for slot, off in enumerate(_offsets(W.shape[2], dilation)):
        dF += np.einsum("btohw,oc->btchw", _shifted(dZ, -off, TIME_AXIS), W[:, :, slot], optimize=True)
        dW[:, :, slot] = np.einsum("btchw,btohw->oc", _shifted(F, off, TIME_AXIS), dZ, optimize=True)
    return dF, dW
