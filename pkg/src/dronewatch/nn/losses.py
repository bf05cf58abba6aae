"""Mean-squared-error loss and its gradient."""

from __future__ import annotations

import numpy as np


def mse_loss(y: np.ndarray, y_hat: np.ndarray) -> float:
    """(1/n) * sum((y - y_hat)^2) over all n elements.

    Symmetric in its arguments, nonnegative, zero iff the tensors are equal.
    The mean is accumulated in float64 regardless of input dtype.
    """
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.shape != y_hat.shape:
        raise ValueError(f"mse_loss shape mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("mse_loss over zero elements is undefined")
    d = y - y_hat
    return float(np.mean(np.square(d, dtype=np.float64)))


def mse_grad(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """d(mse_loss)/d(y_hat) = 2 * (y_hat - y) / n."""
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.shape != y_hat.shape:
        raise ValueError(f"mse_grad shape mismatch: {y.shape} vs {y_hat.shape}")
    return (2.0 / y.size) * (y_hat - y)
