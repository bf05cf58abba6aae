"""Layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during forward, and
accumulates parameter gradients on backward. Supported kinds: dense,
conv2d, maxpool2d, flatten, activation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

LAYER_KINDS = ("dense", "conv2d", "maxpool2d", "flatten", "activation")
ACTIVATION_NAMES = ("relu", "tanh", "linear")


def _require(params: Mapping[str, Any], *names: str) -> None:
    for name in names:
        if name not in params:
            raise ValueError(f"layer spec missing required parameter {name!r}")


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer, the unit stored in checkpoints."""

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}, expected one of {LAYER_KINDS}")
        p = dict(self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "dense":
            _require(p, "in_features", "units")
            if p["in_features"] < 1 or p["units"] < 1:
                raise ValueError("dense in_features and units must be positive")
        elif self.kind == "conv2d":
            _require(p, "in_channels", "channels", "kernel")
            p.setdefault("stride", 1)
            p.setdefault("padding", "same")
            if p["kernel"] < 1 or p["stride"] < 1:
                raise ValueError("conv2d kernel size and stride must be strictly positive")
            if p["padding"] not in ("same", "valid"):
                raise ValueError(f"conv2d padding must be 'same' or 'valid', got {p['padding']!r}")
            if p["padding"] == "same" and p["kernel"] % 2 == 0:
                raise ValueError("conv2d 'same' padding requires an odd kernel size")
            if p["in_channels"] < 1 or p["channels"] < 1:
                raise ValueError("conv2d channel counts must be positive")
        elif self.kind == "maxpool2d":
            _require(p, "size")
            p.setdefault("stride", p["size"])
            if p["size"] < 1 or p["stride"] < 1:
                raise ValueError("maxpool2d size and stride must be strictly positive")
            if p["stride"] != p["size"]:
                raise ValueError("maxpool2d supports non-overlapping windows only (stride == size)")
        elif self.kind == "activation":
            _require(p, "name")
            if p["name"] not in ACTIVATION_NAMES:
                raise ValueError(
                    f"unknown activation {p['name']!r}, expected one of {ACTIVATION_NAMES}"
                )

    def to_json(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "LayerSpec":
        obj = dict(obj)
        kind = obj.pop("kind")
        return cls(kind, obj)


def dense(in_features: int, units: int) -> LayerSpec:
    return LayerSpec("dense", {"in_features": in_features, "units": units})


def conv2d(in_channels: int, channels: int, kernel: int, stride: int = 1,
           padding: str = "same") -> LayerSpec:
    return LayerSpec("conv2d", {"in_channels": in_channels, "channels": channels,
                                "kernel": kernel, "stride": stride, "padding": padding})


def maxpool2d(size: int) -> LayerSpec:
    return LayerSpec("maxpool2d", {"size": size})


def flatten() -> LayerSpec:
    return LayerSpec("flatten", {})


def activation(name: str) -> LayerSpec:
    return LayerSpec("activation", {"name": name})


class Layer:
    """Base class. Subclasses cache forward inputs they need for backward."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def zero_grads(self) -> None:
        for g in self.grads().values():
            g[...] = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    """Affine map on the last axis: y = x @ w + b.

    Weights drawn uniformly from +-sqrt(1/in_features) (fan-in scaling),
    biases start at zero.
    """

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype: np.dtype):
        super().__init__(spec)
        n, m = spec.params["in_features"], spec.params["units"]
        limit = math.sqrt(1.0 / n)
        self.w = rng.uniform(-limit, limit, size=(n, m)).astype(dtype)
        self.b = np.zeros(m, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def grads(self) -> dict[str, np.ndarray]:
        return {"w": self.dw, "b": self.db}

    def forward(self, x: np.ndarray) -> np.ndarray:
        n = self.w.shape[0]
        if x.ndim != 2 or x.shape[1] != n:
            raise ValueError(f"dense expects input of shape (batch, {n}), got {x.shape}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dw += self._x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.w.T


class Conv2D(Layer):
    """2D convolution over (batch, height, width, channels).

    'same' padding pads (kernel-1)/2 on each side; 'valid' pads nothing.
    Implemented as one GEMM per kernel offset so every copy runs over
    contiguous memory; single-channel inputs take a stacked-row path with
    a single GEMM.
    """

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype: np.dtype):
        super().__init__(spec)
        p = spec.params
        c, o, k = p["in_channels"], p["channels"], p["kernel"]
        self.stride = p["stride"]
        self.pad = (k - 1) // 2 if p["padding"] == "same" else 0
        limit = math.sqrt(1.0 / (c * k * k))
        self.w = rng.uniform(-limit, limit, size=(k, k, c, o)).astype(dtype)
        self.b = np.zeros(o, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def grads(self) -> dict[str, np.ndarray]:
        return {"w": self.dw, "b": self.db}

    def _padded(self, x: np.ndarray) -> np.ndarray:
        pad = self.pad
        return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x

    def forward(self, x: np.ndarray) -> np.ndarray:
        k, _, c, o = self.w.shape
        if x.ndim != 4 or x.shape[3] != c:
            raise ValueError(f"conv2d expects input of shape (batch, h, w, {c}), got {x.shape}")
        s = self.stride
        xp = self._padded(x)
        b, hp, wp, _ = xp.shape
        if hp < k or wp < k:
            raise ValueError(f"conv2d input {x.shape} smaller than kernel {k}x{k}")
        oh = (hp - k) // s + 1
        ow = (wp - k) // s + 1
        n = b * oh * ow
        self._xp_shape = xp.shape
        self._out_hw = (oh, ow)
        if c == 1:
            cols = np.empty((k * k, n), dtype=xp.dtype)
            for di in range(k):
                for dj in range(k):
                    cols[di * k + dj] = xp[:, di:di + s * oh:s, dj:dj + s * ow:s, 0].ravel()
            self._cols = cols
            out = cols.T @ self.w.reshape(k * k, o)
            out += self.b
        else:
            shifts = []
            out = np.zeros((n, o), dtype=xp.dtype)
            for di in range(k):
                for dj in range(k):
                    xs = xp[:, di:di + s * oh:s, dj:dj + s * ow:s, :].reshape(n, c)
                    shifts.append(xs)
                    out += xs @ self.w[di, dj]
            out += self.b
            self._cols = shifts
        return out.reshape(b, oh, ow, o)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        k, _, c, o = self.w.shape
        s = self.stride
        b = dy.shape[0]
        oh, ow = self._out_hw
        dym = dy.reshape(b * oh * ow, o)
        self.db += dym.sum(axis=0)
        dxp = np.zeros(self._xp_shape, dtype=dy.dtype)
        if c == 1:
            self.dw += (self._cols @ dym).reshape(self.w.shape)
            dcols = dym @ self.w.reshape(k * k, o).T
            for di in range(k):
                for dj in range(k):
                    dxp[:, di:di + s * oh:s, dj:dj + s * ow:s, 0] += \
                        dcols[:, di * k + dj].reshape(b, oh, ow)
        else:
            for idx, (di, dj) in enumerate((i, j) for i in range(k) for j in range(k)):
                xs = self._cols[idx]
                self.dw[di, dj] += xs.T @ dym
                dxp[:, di:di + s * oh:s, dj:dj + s * ow:s, :] += \
                    (dym @ self.w[di, dj].T).reshape(b, oh, ow, c)
        if self.pad:
            pad = self.pad
            hp, wp = self._xp_shape[1], self._xp_shape[2]
            return dxp[:, pad:hp - pad, pad:wp - pad, :]
        return dxp


class MaxPool2D(Layer):
    """Non-overlapping max pooling over (batch, h, w, channels).

    The gradient routes to exactly one maximal element per window; the
    choice among tied maxima is deterministic.
    """

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype: np.dtype):
        super().__init__(spec)
        self.size = spec.params["size"]

    def forward(self, x: np.ndarray) -> np.ndarray:
        p = self.size
        if x.ndim != 4:
            raise ValueError(f"maxpool2d expects input (batch, h, w, channels), got {x.shape}")
        b, h, w, c = x.shape
        if h % p or w % p:
            raise ValueError(f"maxpool2d size {p} does not divide spatial dims of {x.shape}")
        self._x = x
        if p == 2:
            rows = np.maximum(x[:, 0::2], x[:, 1::2])
            return np.maximum(rows[:, :, 0::2], rows[:, :, 1::2])
        win = x.reshape(b, h // p, p, w // p, p, c).transpose(0, 1, 3, 5, 2, 4)
        win = win.reshape(b, h // p, w // p, c, p * p)
        idx = win.argmax(axis=-1)
        self._idx = idx
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        p = self.size
        x = self._x
        b, h, w, c = x.shape
        if p == 2:
            x0, x1 = x[:, 0::2], x[:, 1::2]
            top = x0 >= x1
            rows = np.maximum(x0, x1)
            left = rows[:, :, 0::2] >= rows[:, :, 1::2]
            d_even = np.where(left, dy, 0)
            drows = np.stack([d_even, dy - d_even], axis=3).reshape(b, h // 2, w, c)
            dx_even = np.where(top, drows, 0)
            return np.stack([dx_even, drows - dx_even], axis=2).reshape(b, h, w, c)
        dwin = np.zeros((b, h // p, w // p, c, p * p), dtype=dy.dtype)
        np.put_along_axis(dwin, self._idx[..., None], dy[..., None], axis=-1)
        dwin = dwin.reshape(b, h // p, w // p, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        return dwin.reshape(b, h, w, c)


class Flatten(Layer):
    """Collapse all axes after the batch axis."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype: np.dtype):
        super().__init__(spec)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._in_shape)


class Activation(Layer):
    """Elementwise relu, tanh or linear (identity)."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype: np.dtype):
        super().__init__(spec)
        self.name = spec.params["name"]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.name == "relu":
            self._mask = x > 0
            return np.maximum(x, 0)
        if self.name == "tanh":
            self._t = np.tanh(x)
            return self._t
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self.name == "relu":
            return dy * self._mask
        if self.name == "tanh":
            return dy * (1 - self._t * self._t)
        return dy


_LAYER_CLASSES = {
    "dense": Dense,
    "conv2d": Conv2D,
    "maxpool2d": MaxPool2D,
    "flatten": Flatten,
    "activation": Activation,
}


def build_layer(spec: LayerSpec, rng: np.random.Generator, dtype: np.dtype) -> Layer:
    return _LAYER_CLASSES[spec.kind](spec, rng, dtype)


def param_shapes(spec: LayerSpec) -> dict[str, tuple[int, ...]]:
    """Expected parameter shapes for a spec; empty for parameterless kinds."""
    p = spec.params
    if spec.kind == "dense":
        return {"w": (p["in_features"], p["units"]), "b": (p["units"],)}
    if spec.kind == "conv2d":
        k = p["kernel"]
        return {"w": (k, k, p["in_channels"], p["channels"]), "b": (p["channels"],)}
    return {}
