"""Adam with coupled L2 weight decay."""

from __future__ import annotations

import numpy as np

from .tensor import NonFiniteError


class Adam:
    """Adam (Kingma & Ba) updating a dict of named numpy parameters in place.

    Weight decay is added to the gradient before the moment updates
    (``g + wd * theta``), the classic L2 form. Names listed in
    ``no_decay`` are exempt from it.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float = 0.01, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 no_decay: set[str] | frozenset = frozenset()):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.no_decay = frozenset(no_decay)
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            if k not in self.params:
                raise KeyError(f"gradient for unknown parameter {k!r}")
            if g.shape != self.params[k].shape:
                raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {self.params[k].shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {k!r}")

        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k, theta in self.params.items():
            g = grads[k]
            if self.weight_decay and k not in self.no_decay:
                g = g + self.weight_decay * theta
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def config(self) -> dict:
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "t": self.t,
            "no_decay": sorted(self.no_decay),
        }

    def moments(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {k: (self.m[k], self.v[k]) for k in self.params}

    def load_state(self, config: dict, moments: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
        self.t = int(config["t"])
        for k, (m, v) in moments.items():
            self.m[k][...] = m
            self.v[k][...] = v


def exempt_norm_and_bias(names) -> set[str]:
    """Parameter names that are LayerNorm affine terms or biases."""
    return {k for k in names if k.endswith(".b") or k.startswith("norm.")}
