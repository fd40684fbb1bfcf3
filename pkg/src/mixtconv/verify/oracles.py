"""Direct nested-loop evaluations of the operator definitions.

Deliberately slow and written index by index; they share no code with the
vectorized operators they are compared against, apart from argument
validation.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidKernel, InvalidShape


def _half(k: int) -> int:
    if k < 1 or k % 2 == 0:
        raise InvalidKernel(f"kernel size must be odd and positive, got {k}")
    return (k - 1) // 2


def naive_depthwise_conv1d(x, w, dilation: int = 1) -> np.ndarray:
    """``x`` is ``[N, c, T]``, ``w`` is ``[c, k]``."""
    x = np.asarray(x)
    w = np.asarray(w)
    N, c, T = x.shape
    if w.shape[0] != c:
        raise InvalidShape(f"weights {w.shape} for {c} channels")
    k = w.shape[1]
    half = _half(k)
    out = np.zeros((N, c, T), dtype=np.float64)
    for n in range(N):
        for ch in range(c):
            for t in range(T):
                acc = 0.0
                for j in range(-half, half + 1):
                    src = t + j * dilation
                    if 0 <= src < T:
                        acc += float(x[n, ch, src]) * float(w[ch, half + j])
                out[n, ch, t] = acc
    return out.astype(x.dtype)


def naive_mixtconv(F, kernel_sizes, dilations, channel_split, weights) -> np.ndarray:
    """``F`` is ``[B, T, C, H, W]``; group m covers the m-th consecutive channel range."""
    F = np.asarray(F)
    B, T, C, H, W = F.shape
    if sum(channel_split) != C:
        raise InvalidShape(f"split {channel_split} does not cover {C} channels")
    out = np.zeros(F.shape, dtype=np.float64)
    c0 = 0
    for k, d, cm, wm in zip(kernel_sizes, dilations, channel_split, weights):
        half = _half(k)
        for b in range(B):
            for c in range(c0, c0 + cm):
                for h in range(H):
                    for x in range(W):
                        for t in range(T):
                            acc = 0.0
                            for j in range(-half, half + 1):
                                src = t + j * d
                                if 0 <= src < T:
                                    acc += float(F[b, src, c, h, x]) * float(wm[c - c0][half + j])
                            out[b, t, c, h, x] = acc
        c0 += cm
    return out.astype(F.dtype)


def naive_shift(F, n_backward: int, n_forward: int) -> np.ndarray:
    F = np.asarray(F)
    B, T, C, H, W = F.shape
    out = np.zeros_like(F)
    for b in range(B):
        for t in range(T):
            for c in range(C):
                if c < n_backward:
                    src = t - 1
                elif c < n_backward + n_forward:
                    src = t + 1
                else:
                    src = t
                if 0 <= src < T:
                    out[b, t, c] = F[b, src, c]
    return out


def naive_ordinary_conv1d(F, Wt, dilation: int = 1) -> np.ndarray:
    """``F`` is ``[B, T, C_in, H, W]``, ``Wt`` is ``[C_out, C_in, k]``."""
    F = np.asarray(F)
    Wt = np.asarray(Wt)
    B, T, Ci, H, W = F.shape
    Co, Ci2, k = Wt.shape
    if Ci2 != Ci:
        raise InvalidShape(f"weights expect {Ci2} channels, input has {Ci}")
    half = _half(k)
    out = np.zeros((B, T, Co, H, W), dtype=np.float64)
    for b in range(B):
        for t in range(T):
            for o in range(Co):
                for h in range(H):
                    for x in range(W):
                        acc = 0.0
                        for i in range(Ci):
                            for j in range(-half, half + 1):
                                src = t + j * dilation
                                if 0 <= src < T:
                                    acc += float(F[b, src, i, h, x]) * float(Wt[o, i, half + j])
                        out[b, t, o, h, x] = acc
    return out.astype(F.dtype)


def naive_conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    """Grouped 2D cross-correlation, one output element at a time."""
    x = np.asarray(x)
    weight = np.asarray(weight)
    N, C, H, W = x.shape
    Co, Cg, kh, kw = weight.shape
    if C != Cg * groups or Co % groups:
        raise InvalidShape(f"weights {weight.shape} incompatible with {C} channels, groups={groups}")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    per_group_out = Co // groups
    out = np.zeros((N, Co, Ho, Wo), dtype=np.float64)
    for n in range(N):
        for o in range(Co):
            g = o // per_group_out
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0 if bias is None else float(bias[o])
                    for cg in range(Cg):
                        c = g * Cg + cg
                        for u in range(kh):
                            for v in range(kw):
                                r = i * stride + u - padding
                                s = j * stride + v - padding
                                if 0 <= r < H and 0 <= s < W:
                                    acc += float(x[n, c, r, s]) * float(weight[o, cg, u, v])
                    out[n, o, i, j] = acc
    return out.astype(x.dtype)
