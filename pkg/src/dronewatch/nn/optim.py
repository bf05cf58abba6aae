"""First-order optimizers.

Plain SGD is the baseline update rule; Adam is available behind the same
step() contract for models that need faster convergence. Both mutate the
parameter arrays in place and leave them bit-identical when lr == 0.
"""

from __future__ import annotations

import math

import numpy as np

ParamList = list[tuple[str, np.ndarray]]


class SGD:
    """w <- w - lr * grad."""

    def __init__(self, lr: float):
        if lr < 0:
            raise ValueError(f"learning rate must be nonnegative, got {lr}")
        self.lr = float(lr)

    def step(self, params: ParamList, grads: ParamList) -> None:
        for (_, p), (_, g) in zip(params, grads):
            p -= self.lr * g


class Adam:
    """Adam with bias correction. Moment state is keyed by parameter name."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr < 0:
            raise ValueError(f"learning rate must be nonnegative, got {lr}")
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ParamList, grads: ParamList) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * math.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for (name, p), (_, g) in zip(params, grads):
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            p -= scale * m / (np.sqrt(v) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}, expected 'sgd' or 'adam'")
