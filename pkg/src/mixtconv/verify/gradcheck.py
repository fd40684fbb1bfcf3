"""Central finite-difference gradient checking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericalFailure

DENOM_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    """Relative errors per input slot (one array per checked input)."""

    names: list[str]
    errors: list[np.ndarray] = field(repr=False)
    threshold: float
    precision: str = "f64"

    @property
    def max_error(self) -> float:
        return max((float(e.max()) for e in self.errors if e.size), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.threshold

    def worst(self) -> tuple[str, tuple[int, ...], float]:
        """Name, index and error of the worst slot."""
        best = ("", (), -1.0)
        for name, err in zip(self.names, self.errors):
            if err.size and err.max() > best[2]:
                best = (name, np.unravel_index(int(err.argmax()), err.shape), float(err.max()))
        return best

    def line(self, prop: str = "gradcheck") -> str:
        return f"PROP {prop} {'PASS' if self.passed else 'FAIL'} max_err={self.max_error:.3e}"


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), DENOM_FLOOR)


def finite_diff_check(
    forward: Callable[[Sequence[np.ndarray]], np.ndarray],
    backward: Callable[[Sequence[np.ndarray], np.ndarray], Sequence[np.ndarray]],
    inputs: Sequence[np.ndarray],
    h: float = 1e-5,
    threshold: float = 1e-5,
    names: Sequence[str] | None = None,
    upstream: np.ndarray | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare ``backward`` against central differences of ``forward``.

    The checked scalar is ``sum(forward(inputs) * upstream)``; ``backward``
    receives the same ``upstream`` and must return one gradient per input.
    Every element of every input is perturbed by ``+-h``.

    Raises:
        NumericalFailure: if any output or difference is non-finite.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    names = list(names) if names is not None else [f"input{i}" for i in range(len(inputs))]
    out = np.asarray(forward(inputs))
    if upstream is None:
        upstream = np.random.default_rng(seed).standard_normal(out.shape)
    upstream = np.asarray(upstream, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("forward produced non-finite values")

    analytic = [np.asarray(g, dtype=np.float64) for g in backward(inputs, upstream)]
    if len(analytic) != len(inputs):
        raise ValueError(f"backward returned {len(analytic)} gradients for {len(inputs)} inputs")

    def output() -> np.ndarray:
        return np.asarray(forward(inputs), dtype=np.float64)

    errors = []
    for x, g in zip(inputs, analytic):
        if g.shape != x.shape:
            raise ValueError(f"gradient shape {g.shape} does not match input {x.shape}")
        numeric = np.zeros_like(x)
        flat, nflat = x.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = output()
            flat[i] = orig - h
            minus = output()
            flat[i] = orig
            # f(x+h) - f(x-h) summed per output element: untouched outputs cancel exactly
            nflat[i] = math.fsum(((plus - minus) * upstream).ravel()) / (2 * h)
        if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(g))):
            raise NumericalFailure("non-finite gradient encountered")
        errors.append(relative_error(g, numeric))
    return GradCheckReport(names, errors, threshold)
