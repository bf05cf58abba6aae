"""Shared test oracles and builders.

The gradient oracle perturbs every parameter with central finite
differences in float64. Finite differences are only a valid derivative
estimate where the loss is smooth across the whole +-h interval, so
ill-conditioned draws (a relu preactivation or a pool-window margin
within a few h of a kink) are resampled with the next seed rather than
compared against a meaningless quotient. Comparison uses the standard
dual-tolerance form |a - f| <= atol + rtol * max(|a|, |f|) with
atol = 1e-5: truncation noise on near-zero gradients stays below atol
while any systematic backprop error still trips the relative term on
normally sized coordinates.
"""

from __future__ import annotations

import numpy as np
import pytest

from dronewatch import nn
from dronewatch.nn.layers import Activation, MaxPool2D

FD_STEP = 1e-3
KINK_MARGIN = 2e-2
FD_ATOL = 1e-5
FD_RTOL = 1e-3


def numeric_gradients(net: nn.Network, x: np.ndarray, target: np.ndarray,
                      h: float = FD_STEP) -> dict[str, np.ndarray]:
    out = {}
    for name, p in net.parameters():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = nn.mse_loss(target, net.forward(x))
            flat[i] = orig - h
            lm = nn.mse_loss(target, net.forward(x))
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * h)
        out[name] = g
    return out


def well_conditioned(net: nn.Network, x: np.ndarray, margin: float = KINK_MARGIN) -> bool:
    """True when no relu kink or pool tie sits within margin of the draw."""
    a = np.asarray(x, dtype=net.dtype)
    for layer in net.layers:
        if isinstance(layer, Activation) and layer.name == "relu":
            if np.abs(a).min() < margin:
                return False
        if isinstance(layer, MaxPool2D):
            p = layer.size
            b, h, w, c = a.shape
            win = a.reshape(b, h // p, p, w // p, p, c)
            win = win.transpose(0, 1, 3, 5, 2, 4).reshape(b, h // p, w // p, c, p * p)
            if p > 1:
                top2 = np.sort(win, axis=-1)[..., -2:]
                if (top2[..., 1] - top2[..., 0]).min() < margin:
                    return False
        a = layer.forward(a)
    return True


def max_relative_gradient_error(specs, in_shape, seed: int) -> float:
    """Analytic vs finite-difference gradients for one well-conditioned draw."""
    for attempt in range(50):
        net = nn.Network(specs, seed=seed + 1000 * attempt, dtype=np.float64)
        rng = np.random.default_rng(seed + 1000 * attempt + 1)
        x = rng.standard_normal(in_shape)
        if not well_conditioned(net, x):
            continue
        y = net.forward(x)
        target = rng.standard_normal(y.shape)
        net.zero_grads()
        net.backward(nn.mse_grad(target, y))
        analytic = dict(net.gradients())
        numeric = numeric_gradients(net, x, target)
        worst = 0.0
        for name in analytic:
            a, f = analytic[name], numeric[name]
            # |a - f| <= FD_ATOL + FD_RTOL * max(|a|, |f|), reported as a ratio
            denom = np.maximum(np.abs(a), np.abs(f)) + FD_ATOL / FD_RTOL
            worst = max(worst, float((np.abs(a - f) / denom).max()))
        return worst
    raise RuntimeError("no well-conditioned draw found in 50 attempts")


def random_net_case(kind: str, rng: np.random.Generator):
    """A random small architecture featuring the given layer kind (<=500 params)."""
    if kind == "dense":
        n_in = int(rng.integers(2, 12))
        hidden = int(rng.integers(2, 16))
        n_out = int(rng.integers(1, 5))
        act = str(rng.choice(["tanh", "relu", "linear"]))
        specs = [nn.dense(n_in, hidden), nn.activation(act), nn.dense(hidden, n_out)]
        shape = (int(rng.integers(1, 5)), n_in)
    elif kind == "conv2d":
        c = int(rng.integers(1, 4))
        o = int(rng.integers(1, 5))
        k = int(rng.choice([1, 3]))
        pad = str(rng.choice(["same", "valid"]))
        stride = int(rng.choice([1, 2])) if pad == "valid" else 1
        h = int(rng.integers(k + 2, 8))
        specs = [nn.conv2d(c, o, k, stride=stride, padding=pad), nn.activation("tanh"),
                 nn.flatten()]
        shape = (int(rng.integers(1, 4)), h, h, c)
    elif kind == "maxpool2d":
        c = int(rng.integers(1, 4))
        p = int(rng.choice([2, 3]))
        h = p * int(rng.integers(1, 4))
        o = int(rng.integers(1, 4))
        specs = [nn.conv2d(c, o, 1, padding="valid"), nn.maxpool2d(p), nn.flatten(),
                 nn.dense((h // p) ** 2 * o, 2)]
        shape = (int(rng.integers(1, 4)), h, h, c)
    elif kind == "flatten":
        c = int(rng.integers(1, 4))
        h = int(rng.integers(2, 5))
        specs = [nn.flatten(), nn.dense(h * h * c, int(rng.integers(1, 5)))]
        shape = (int(rng.integers(1, 4)), h, h, c)
    elif kind == "activation":
        n = int(rng.integers(2, 10))
        act = str(rng.choice(["tanh", "relu", "linear"]))
        specs = [nn.dense(n, n), nn.activation(act), nn.dense(n, 2)]
        shape = (int(rng.integers(1, 5)), n)
    else:
        raise ValueError(kind)
    total = sum(arr.size for _, arr in nn.Network(specs, seed=0).parameters())
    assert total <= 500, f"test net too large: {total} params"
    return specs, shape


@pytest.fixture(scope="session")
def small_corpus():
    from dronewatch import datagen

    return datagen.texture_corpus(100, size=48, seed=3)
