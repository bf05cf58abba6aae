#!/usr/bin/env python3
"""Gradient spot-check: analytic backprop vs central finite differences.

Builds a small mixed network in float64, perturbs every parameter by
h = 1e-3, and prints the worst relative disagreement per layer. Runs in
a few seconds.
"""

import numpy as np

from dronewatch import nn

SEED = 0
H = 1e-3

specs = [nn.conv2d(1, 3, 3), nn.activation("tanh"), nn.maxpool2d(2),
         nn.flatten(), nn.dense(12, 6), nn.activation("tanh"), nn.dense(6, 2)]
net = nn.Network(specs, seed=SEED, dtype=np.float64)
rng = np.random.default_rng(SEED)
x = rng.standard_normal((3, 4, 4, 1))
y = net.forward(x)
target = rng.standard_normal(y.shape)

net.zero_grads()
net.backward(nn.mse_grad(target, y))
analytic = dict(net.gradients())

print(f"{'parameter':>10s} {'size':>6s} {'max rel err':>12s}")
for name, p in net.parameters():
    flat = p.reshape(-1)
    fd = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + H
        lp = nn.mse_loss(target, net.forward(x))
        flat[i] = orig - H
        lm = nn.mse_loss(target, net.forward(x))
        flat[i] = orig
        fd[i] = (lp - lm) / (2 * H)
    a = analytic[name].reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-8)
    err = float((np.abs(a - fd) / denom).max())
    print(f"{name:>10s} {flat.size:>6d} {err:>12.2e}")

print("\nanything at or below 1e-3 means backprop and the finite-difference"
      "\noracle agree to the tolerance the engine is tested at")
