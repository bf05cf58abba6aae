"""Sequential network container and the basic training step."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .layers import LayerSpec, Layer, build_layer
from .losses import mse_loss, mse_grad
from .optim import ParamList


class Network:
    """A stack of layers built from LayerSpecs.

    Parameters are initialized from a single seeded generator in layer
    order, so construction is reproducible. forward() is a pure function
    of (parameters, input) and may be called concurrently on a model that
    is no longer being trained; backward() and the optimizers are
    single-threaded.
    """

    def __init__(self, specs: Sequence[LayerSpec], seed: int = 0,
                 dtype: np.dtype = np.float32):
        self.specs = list(specs)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(self.seed)
        self.layers: list[Layer] = [build_layer(s, rng, self.dtype) for s in self.specs]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy = np.asarray(dy, dtype=self.dtype)
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def parameters(self, prefix: str = "") -> ParamList:
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out.append((f"{prefix}{i}.{name}", arr))
        return out

    def gradients(self, prefix: str = "") -> ParamList:
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grads().items():
                out.append((f"{prefix}{i}.{name}", arr))
        return out

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def load_parameters(self, params: dict[str, np.ndarray], prefix: str = "") -> None:
        """Overwrite parameters from a name -> array mapping (shape checked)."""
        for name, arr in self.parameters(prefix):
            if name not in params:
                raise ValueError(f"missing parameter {name!r} in checkpoint")
            src = params[name]
            if src.shape != arr.shape:
                raise ValueError(
                    f"parameter {name!r} shape mismatch: expected {arr.shape}, got {src.shape}")
            arr[...] = src.astype(self.dtype)


def train_step(net: Network, x: np.ndarray, target: np.ndarray, optimizer) -> float:
    """One forward/backward/update step under MSE loss. Returns the batch loss."""
    x = np.asarray(x)
    if x.shape[0] == 0:
        raise ValueError("train_step called with an empty batch")
    y = net.forward(x)
    loss = mse_loss(target, y)
    net.zero_grads()
    net.backward(mse_grad(np.asarray(target, dtype=y.dtype), y))
    optimizer.step(net.parameters(), net.gradients())
    return loss
