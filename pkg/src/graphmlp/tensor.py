"""Dense matrix helpers, the seeded random stream, and a finite-difference checker.

Dense matrices are plain 2-D ``float64`` numpy arrays. Nothing here builds an
autograd tape: every layer in :mod:`graphmlp.nn` and :mod:`graphmlp.loss`
carries its own hand-written backward pass, and :func:`grad_check` is how
those are verified.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes violate an operation's precondition."""


class NonFiniteError(FloatingPointError):
    """A computation produced NaN or Inf from finite inputs."""


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Return ``x`` as a C-contiguous 2-D float64 array."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=DTYPE)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


class Rng:
    """Seeded random stream backed by numpy's PCG64 bit generator.

    PCG64 (O'Neill's permuted congruential generator, 128-bit state, XSL-RR
    output) produces the same raw stream on every platform for a given seed.
    All randomness in the package flows through one of these objects so a run
    is reproducible from its integer seed.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self, size=None) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int) -> np.ndarray:
        """``size`` distinct indices from ``range(n)``."""
        return self._gen.choice(n, size=size, replace=False)

    def binomial(self, n: int, p: float) -> int:
        return int(self._gen.binomial(n, p))

    def spawn(self, key: int) -> "Rng":
        """Independent child stream; deterministic in (seed, key)."""
        return Rng(int(np.random.SeedSequence([self.seed, key]).generate_state(1, np.uint64)[0]))


def glorot_uniform(fan_in: int, fan_out: int, rng: Rng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def grad_check(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic_grad: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``f``.

    The error for each entry is ``|numeric - analytic| / max(1, |analytic|)``.
    ``x`` is perturbed in place and restored before returning.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x)
    if not x.flags.c_contiguous or not x.flags.writeable:
        raise ValueError("x must be a writeable C-contiguous array")
    analytic_grad = np.asarray(analytic_grad, dtype=DTYPE)
    if analytic_grad.shape != x.shape:
        raise ShapeError(f"gradient shape {analytic_grad.shape} != input shape {x.shape}")

    worst = 0.0
    flat = x.reshape(-1)
    grad_flat = analytic_grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = float(f(x))
        flat[k] = orig - h
        fm = float(f(x))
        flat[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"f is not finite near entry {k}")
        numeric = (fp - fm) / (2.0 * h)
        err = abs(numeric - grad_flat[k]) / max(1.0, abs(grad_flat[k]))
        worst = max(worst, err)
    return worst
