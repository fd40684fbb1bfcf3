"""Per-frame 2D operators for the ResNet backbone and the toy classifier.

Feature maps are ``[N, C, H, W]`` with N = batch * frames. Batch norm is
inference-only (frozen statistics). Backward passes are provided only for
the layers the toy training loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidLabel, InvalidShape

BN_EPS = 1e-5


@dataclass
class Conv2DSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int = 0
    groups: int = 1
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        if isinstance(self.kernel, int):
            self.kernel = (self.kernel, self.kernel)
        self.kernel = tuple(int(k) for k in self.kernel)
        if self.groups < 1 or self.in_channels % self.groups or self.out_channels % self.groups:
            raise InvalidShape(
                f"channels {self.in_channels}->{self.out_channels} not divisible by groups={self.groups}"
            )
        if self.padding < 0 or self.stride < 1:
            raise InvalidShape(f"bad stride/padding {self.stride}/{self.padding}")
        if self.weight is not None and self.weight.shape != self.weight_shape:
            raise InvalidShape(f"weight shape {self.weight.shape}, expected {self.weight_shape}")
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise InvalidShape(f"bias shape {self.bias.shape}, expected {(self.out_channels,)}")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups) + self.kernel

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        ho = (h + 2 * self.padding - kh) // self.stride + 1
        wo = (w + 2 * self.padding - kw) // self.stride + 1
        if ho < 1 or wo < 1:
            raise InvalidShape(f"{h}x{w} input too small for kernel {self.kernel}")
        return ho, wo

    def param_count(self, with_bias: bool | None = None) -> int:
        n = int(np.prod(self.weight_shape))
        if with_bias if with_bias is not None else self.bias is not None:
            n += self.out_channels
        return n


@dataclass
class BatchNormSpec:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = BN_EPS

    def __post_init__(self):
        shapes = {np.shape(a) for a in (self.gamma, self.beta, self.mean, self.var)}
        if len(shapes) != 1 or len(shapes.pop()) != 1:
            raise InvalidShape("batch norm parameters must be equal-length vectors")
        if np.any(np.asarray(self.var) < 0):
            raise InvalidShape("running variance must be non-negative")

    @classmethod
    def identity(cls, channels: int, dtype=np.float32) -> "BatchNormSpec":
        return cls(
            np.ones(channels, dtype), np.zeros(channels, dtype),
            np.zeros(channels, dtype), np.ones(channels, dtype),
        )


def conv2d_forward(x, spec: Conv2DSpec) -> np.ndarray:
    """Grouped 2D cross-correlation of ``x`` ``[N, C, H, W]``."""
    x = np.asarray(x)
    if spec.weight is None:
        raise InvalidShape("conv2d spec carries no weights")
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise InvalidShape(f"input {x.shape} does not match {spec.in_channels} input channels")
    n, c, h, w = x.shape
    ho, wo = spec.output_hw(h, w)
    kh, kw = spec.kernel
    p, s, g = spec.padding, spec.stride, spec.groups
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
    win = win.reshape(n, g, c // g, ho, wo, kh, kw)
    wt = spec.weight.astype(x.dtype, copy=False).reshape(g, spec.out_channels // g, c // g, kh, kw)
    out = np.einsum("ngchwij,gocij->ngohw", win, wt, optimize=True).reshape(n, spec.out_channels, ho, wo)
    if spec.bias is not None:
        out = out + spec.bias.astype(x.dtype, copy=False)[None, :, None, None]
    return np.ascontiguousarray(out)


def batchnorm_infer(x, spec: BatchNormSpec) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[1] != len(spec.gamma):
        raise InvalidShape(f"input {x.shape} does not match {len(spec.gamma)} channels")
    shape = (1, -1) + (1,) * (x.ndim - 2)
    scale = (np.asarray(spec.gamma) / np.sqrt(np.asarray(spec.var) + spec.eps)).astype(x.dtype)
    shift = (np.asarray(spec.beta) - np.asarray(spec.mean) * scale).astype(x.dtype)
    return x * scale.reshape(shape) + shift.reshape(shape)


def relu(x) -> np.ndarray:
    x = np.asarray(x)
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(x, dy) -> np.ndarray:
    x, dy = np.asarray(x), np.asarray(dy)
    if x.shape != dy.shape:
        raise InvalidShape(f"upstream {dy.shape} does not match input {x.shape}")
    return np.where(x > 0, dy, 0).astype(dy.dtype, copy=False)


def maxpool2d(x, k: int = 3, s: int = 2, p: int = 1) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise InvalidShape(f"expected [N, C, H, W], got {x.shape}")
    n, c, h, w = x.shape
    ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
    if ho < 1 or wo < 1:
        raise InvalidShape(f"{h}x{w} input too small for {k}x{k} pooling")
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=-np.inf) if p else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
    return win.max(axis=(-2, -1))


def global_avgpool(x, axes=(2, 3)) -> np.ndarray:
    """Mean over ``axes`` (spatial axes of ``[N, C, H, W]`` by default)."""
    x = np.asarray(x)
    try:
        return x.mean(axis=tuple(axes))
    except np.exceptions.AxisError as exc:
        raise InvalidShape(str(exc)) from exc


def global_avgpool_backward(dy, input_shape, axes=(2, 3)) -> np.ndarray:
    dy = np.asarray(dy)
    axes = tuple(a % len(input_shape) for a in axes)
    kept = tuple(s for a, s in enumerate(input_shape) if a not in axes)
    if dy.shape != kept:
        raise InvalidShape(f"upstream {dy.shape}, expected {kept}")
    count = int(np.prod([input_shape[a] for a in axes]))
    return np.broadcast_to(np.expand_dims(dy, axes) / count, input_shape).copy()


def linear_forward(x, W, b=None) -> np.ndarray:
    """``x @ W.T + b`` over the last axis; ``W`` is ``[out, in]``."""
    x, W = np.asarray(x), np.asarray(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise InvalidShape(f"input {x.shape} incompatible with weight {W.shape}")
    y = x @ W.T.astype(x.dtype, copy=False)
    if b is not None:
        b = np.asarray(b)
        if b.shape != (W.shape[0],):
            raise InvalidShape(f"bias {b.shape}, expected {(W.shape[0],)}")
        y = y + b.astype(x.dtype, copy=False)
    return y


def linear_backward(x, W, dy) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(dx, dW, db)``; leading axes of ``x`` are summed out of dW and db."""
    x, W, dy = np.asarray(x), np.asarray(W), np.asarray(dy)
    if dy.shape != x.shape[:-1] + (W.shape[0],):
        raise InvalidShape(f"upstream {dy.shape} does not match output of {x.shape} @ {W.shape}")
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ W.astype(dy.dtype, copy=False), dy2.T @ x2, dy2.sum(axis=0)


def _check_labels(logits, labels):
    if logits.ndim != 2:
        raise InvalidShape(f"logits must be [N, K], got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise InvalidShape(f"{labels.shape[0] if labels.ndim else 0} labels for {logits.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InvalidLabel(f"labels must lie in [0, {logits.shape[1]})")


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> float:
    """Mean negative log-likelihood over the batch."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(logits, labels)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(labels)), labels]))


def softmax_cross_entropy_backward(logits, labels) -> np.ndarray:
    """``(softmax(logits) - onehot(labels)) / N``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(logits, labels)
    grad = softmax(logits)
    grad[np.arange(len(labels)), labels] -= 1
    return grad / len(labels)
