"""Synthetic motion-direction task: which way does a single pixel travel?

Each class-1 clip is the time reversal of a class-0 clip, so both classes
contain exactly the same frames. Any model that processes frames
independently and averages over time is stuck at chance; a model that can
mix neighbouring frames is not.

Toy model, per clip ``[T, 1, H, W]``::

    fixed spatial shift bank (1 -> 4 channels: dx = -1, 0, +1, 0, gain 8)
      -> temporal op (MixTConv, learnable)
      -> pointwise channel mix (4 -> M, learnable, bias) -> ReLU
      -> mean over T, H, W -> linear (M -> 2) -> softmax cross entropy

The shift bank stands in for the 2D backbone: without some spatial mixing
a per-pixel temporal filter cannot tell left from right, because the bag
of per-pixel temporal profiles is the same in both directions. The gain
keeps the pooled features (mostly background) at a usable scale for plain
gradient descent at step 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import spatial, temporal
from ..errors import NumericalFailure
from ..temporal import MixTConvConfig, MixTConvSpec

FRAMES = 8
SIZE = 8
SHIFT_BANK = (-1, 0, 1, 0)
LIFT_GAIN = 8.0
MIX_WIDTH = 8
MODELS = ("kernel1_baseline", "mixtconv")


@dataclass
class DirectionDataset:
    sequences: np.ndarray  # [N, T, 1, H, W]
    labels: np.ndarray  # [N]; 0 = left to right, 1 = right to left

    def __len__(self):
        return len(self.labels)


def make_direction_dataset(n: int, seed: int = 0, frames: int = FRAMES, size: int = SIZE, dtype=np.float32):
    """``n`` clips in mirrored pairs: clip ``2i`` moves right, ``2i+1`` is its time reversal.

    The pixel starts at a random column (phase) of a random row and wraps
    around the right edge.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even number")
    rng = np.random.default_rng(seed)
    seqs = np.zeros((n, frames, 1, size, size), dtype=dtype)
    labels = np.tile(np.array([0, 1], dtype=np.int64), n // 2)
    for i in range(0, n, 2):
        row, phase = rng.integers(size), rng.integers(size)
        for t in range(frames):
            seqs[i, t, 0, row, (phase + t) % size] = 1
        seqs[i + 1] = seqs[i, ::-1]
    return DirectionDataset(seqs, labels)


def shift_bank_lift(x: np.ndarray, gain: float = LIFT_GAIN) -> np.ndarray:
    """Fixed 3x3 conv producing horizontally shifted copies: ``[N, T, 1, H, W] -> [N, T, 4, H, W]``."""
    n, T, _, h, w = x.shape
    weight = np.zeros((len(SHIFT_BANK), 1, 3, 3), dtype=x.dtype)
    for c, dx in enumerate(SHIFT_BANK):
        weight[c, 0, 1, 1 + dx] = gain
    spec = spatial.Conv2DSpec(1, len(SHIFT_BANK), (3, 3), padding=1, weight=weight)
    return spatial.conv2d_forward(x.reshape(n * T, 1, h, w), spec).reshape(n, T, len(SHIFT_BANK), h, w)


@dataclass
class DirectionModel:
    temporal: MixTConvSpec
    mix_w: np.ndarray
    mix_b: np.ndarray
    cls_w: np.ndarray
    cls_b: np.ndarray
    train_temporal: bool = True

    @classmethod
    def create(cls, kernel_sizes=(3, 5), init="identity", rng=None, dtype=np.float32, train_temporal=True):
        rng = rng if rng is not None else np.random.default_rng(0)
        c = len(SHIFT_BANK)
        spec = MixTConvConfig(tuple(kernel_sizes), init=init).build(c, rng=rng, dtype=dtype)
        return cls(
            spec,
            rng.normal(0, 1 / np.sqrt(c), (MIX_WIDTH, c)).astype(dtype),
            np.zeros(MIX_WIDTH, dtype),
            rng.normal(0, 1 / np.sqrt(MIX_WIDTH), (2, MIX_WIDTH)).astype(dtype),
            np.zeros(2, dtype),
            train_temporal,
        )

    def params(self) -> list[np.ndarray]:
        return [*self.temporal.weights, self.mix_w, self.mix_b, self.cls_w, self.cls_b]

    def with_params(self, params) -> "DirectionModel":
        g = self.temporal.group_count
        return DirectionModel(
            self.temporal.with_weights(params[:g]), *params[g:], train_temporal=self.train_temporal
        )

    def forward(self, lifted: np.ndarray, cache: dict | None = None) -> np.ndarray:
        """Logits ``[N, 2]`` from lifted clips ``[N, T, 4, H, W]``."""
        z = temporal.mixtconv_forward(lifted, self.temporal)
        zl = np.moveaxis(z, 2, -1)
        m = spatial.linear_forward(zl, self.mix_w, self.mix_b)
        a = spatial.relu(m)
        pooled = spatial.global_avgpool(a, axes=(1, 2, 3))
        logits = spatial.linear_forward(pooled, self.cls_w, self.cls_b)
        if cache is not None:
            cache.update(zl=zl, m=m, a=a, pooled=pooled)
        return logits

    def loss_and_grads(self, lifted: np.ndarray, labels: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean cross entropy and gradients in :meth:`params` order."""
        cache: dict = {}
        logits = self.forward(lifted, cache)
        loss = spatial.softmax_cross_entropy(logits, labels)
        dlogits = spatial.softmax_cross_entropy_backward(logits, labels)
        dpooled, d_cls_w, d_cls_b = spatial.linear_backward(cache["pooled"], self.cls_w, dlogits)
        da = spatial.global_avgpool_backward(dpooled, cache["a"].shape, axes=(1, 2, 3))
        dm = spatial.relu_backward(cache["m"], da)
        dzl, d_mix_w, d_mix_b = spatial.linear_backward(cache["zl"], self.mix_w, dm)
        _, d_temporal = temporal.mixtconv_backward(lifted, self.temporal, np.moveaxis(dzl, -1, 2))
        if not self.train_temporal:
            d_temporal = [np.zeros_like(w) for w in d_temporal]
        return loss, [*d_temporal, d_mix_w, d_mix_b, d_cls_w, d_cls_b]

    def accuracy(self, lifted: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.forward(lifted).argmax(axis=1) == labels))


@dataclass
class ExperimentResult:
    model: str
    kernel_sizes: tuple[int, ...]
    seed: int
    train_acc: float
    test_acc: float
    history: list[tuple[int, float, float]] = field(default_factory=list)


def run_direction_experiment(
    model: str = "mixtconv",
    kernel_sizes=(3, 5),
    epochs: int = 50,
    seed: int = 1,
    lr: float = 0.1,
    batch_size: int = 32,
    n_train: int = 512,
    n_test: int = 256,
    train_temporal: bool = True,
    init: str = "identity",
    log: Callable[[str], None] | None = None,
) -> ExperimentResult:
    """Train the toy model with plain minibatch gradient descent.

    ``kernel1_baseline`` ignores ``kernel_sizes`` and uses a single k=1
    group, so no information crosses frames. Per-epoch lines
    ``epoch=<e> loss=<mean train loss> acc=<test accuracy>`` go to ``log``.

    Raises:
        NumericalFailure: the training loss became non-finite.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    ks = (1,) if model == "kernel1_baseline" else tuple(kernel_sizes)
    rng = np.random.default_rng(seed)
    train = make_direction_dataset(n_train, seed=int(rng.integers(2**31)))
    test = make_direction_dataset(n_test, seed=int(rng.integers(2**31)))
    x_train, x_test = shift_bank_lift(train.sequences), shift_bank_lift(test.sequences)
    net = DirectionModel.create(ks, init=init, rng=rng, train_temporal=train_temporal)

    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss, grads = net.loss_and_grads(x_train[idx], train.labels[idx])
            if not np.isfinite(loss):
                raise NumericalFailure(f"loss diverged at epoch {epoch}")
            net = net.with_params([p - lr * g for p, g in zip(net.params(), grads)])
            losses.append(loss)
        acc = net.accuracy(x_test, test.labels)
        history.append((epoch, float(np.mean(losses)), acc))
        if log is not None:
            log(f"epoch={epoch} loss={np.mean(losses):.6f} acc={acc:.4f}")
    return ExperimentResult(
        model, ks, seed, net.accuracy(x_train, train.labels), net.accuracy(x_test, test.labels), history
    )
