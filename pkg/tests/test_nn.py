"""Engine-level tests: layer forwards, MSE, gradients, training step."""

import numpy as np
import pytest

from dronewatch import nn
from conftest import max_relative_gradient_error, random_net_case


def test_identity_dense_forward():
    net = nn.Network([nn.dense(3, 3)], seed=0)
    net.layers[0].w[...] = np.eye(3, dtype=np.float32)
    net.layers[0].b[...] = 0
    out = net.forward(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(out, [[1.0, 2.0, 3.0]])


def test_relu_layer_forward():
    net = nn.Network([nn.dense(3, 3), nn.activation("relu")], seed=0)
    net.layers[0].w[...] = np.eye(3, dtype=np.float32)
    out = net.forward(np.array([[-1.0, 0.0, 2.0]]))
    np.testing.assert_array_equal(out, [[0.0, 0.0, 2.0]])


def test_maxpool_2x2_forward():
    net = nn.Network([nn.maxpool2d(2)], seed=0)
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
    out = net.forward(x)
    np.testing.assert_array_equal(out.reshape(1, 1), [[4.0]])


def test_forward_shape_mismatch_names_shapes():
    net = nn.Network([nn.dense(4, 2)], seed=0)
    with pytest.raises(ValueError, match=r"\(batch, 4\).*\(1, 3\)"):
        net.forward(np.zeros((1, 3)))


def test_forward_is_pure():
    net = nn.Network([nn.dense(5, 4), nn.activation("tanh"), nn.dense(4, 2)], seed=3)
    x = np.random.default_rng(0).standard_normal((6, 5)).astype(np.float32)
    first = net.forward(x)
    second = net.forward(x)
    np.testing.assert_array_equal(first, second)


def test_mse_examples():
    assert nn.mse_loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert nn.mse_loss([0.0, 0.0], [1.0, 1.0]) == 1.0
    assert nn.mse_loss([1.0, -1.0], [0.0, 0.0]) == 1.0


def test_mse_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        nn.mse_loss(np.zeros(3), np.zeros(4))


@pytest.mark.parametrize("seed", range(5))
def test_mse_symmetric_nonnegative_zero_iff_equal(seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((4, 5))
    y_hat = rng.standard_normal((4, 5))
    assert nn.mse_loss(y, y_hat) == nn.mse_loss(y_hat, y)
    assert nn.mse_loss(y, y_hat) > 0
    assert nn.mse_loss(y, y) == 0.0


def test_hand_gradient_single_weight():
    # y = w*x with x=1, w=2, target 0: dL/dw = 2*(w*x)*x = 4
    net = nn.Network([nn.dense(1, 1)], seed=0)
    net.layers[0].w[...] = 2.0
    net.layers[0].b[...] = 0.0
    y = net.forward(np.array([[1.0]]))
    net.zero_grads()
    net.backward(nn.mse_grad(np.array([[0.0]], dtype=np.float32), y))
    assert net.layers[0].dw[0, 0] == pytest.approx(4.0)


def test_zero_input_conv_gradients():
    net = nn.Network([nn.conv2d(2, 3, 3)], seed=1)
    x = np.zeros((2, 4, 4, 2), dtype=np.float32)
    y = net.forward(x)
    dy = np.ones_like(y)
    net.zero_grads()
    net.backward(dy)
    layer = net.layers[0]
    np.testing.assert_array_equal(layer.dw, np.zeros_like(layer.dw))
    np.testing.assert_array_equal(layer.db, dy.sum(axis=(0, 1, 2)))


@pytest.mark.parametrize("kind", nn.LAYER_KINDS)
@pytest.mark.parametrize("trial", range(4))
def test_gradients_match_finite_differences(kind, trial):
    case_seed = 1000 * nn.LAYER_KINDS.index(kind) + trial
    rng = np.random.default_rng(case_seed)
    specs, shape = random_net_case(kind, rng)
    err = max_relative_gradient_error(specs, shape, seed=case_seed * 7 + 1)
    assert err <= 1e-3, f"{kind} trial {trial}: max relative error {err}"


def _params_bytes(net):
    return b"".join(arr.tobytes() for _, arr in net.parameters())


def test_train_step_zero_learning_rate_keeps_parameters():
    net = nn.Network([nn.dense(4, 3), nn.activation("tanh"), nn.dense(3, 2)], seed=5)
    before = _params_bytes(net)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 4)).astype(np.float32)
    y = rng.standard_normal((8, 2)).astype(np.float32)
    nn.train_step(net, x, y, nn.SGD(0.0))
    assert _params_bytes(net) == before
    nn.train_step(net, x, y, nn.Adam(0.0))
    assert _params_bytes(net) == before


def test_train_step_rejects_empty_batch():
    net = nn.Network([nn.dense(4, 2)], seed=0)
    with pytest.raises(ValueError, match="empty batch"):
        nn.train_step(net, np.zeros((0, 4)), np.zeros((0, 2)), nn.SGD(0.1))


def test_negative_learning_rate_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        nn.SGD(-0.1)
    with pytest.raises(ValueError, match="nonnegative"):
        nn.Adam(-1e-3)


def test_training_is_deterministic():
    def run():
        net = nn.Network([nn.dense(6, 4), nn.activation("tanh"), nn.dense(4, 6)], seed=9)
        opt = nn.SGD(0.05)
        rng = np.random.default_rng(42)
        x = rng.standard_normal((16, 6)).astype(np.float32)
        for _ in range(20):
            nn.train_step(net, x, x, opt)
        return _params_bytes(net)

    assert run() == run()


def test_dense_convergence_on_fixed_pair():
    net = nn.Network([nn.dense(3, 2)], seed=2)
    opt = nn.SGD(0.3)
    x = np.array([[0.5, -1.0, 2.0]], dtype=np.float32)
    y = np.array([[1.0, -0.5]], dtype=np.float32)
    loss = None
    for _ in range(200):
        loss = nn.train_step(net, x, y, opt)
    assert loss < 1e-4


def test_layerspec_validation():
    with pytest.raises(ValueError, match="unknown layer kind"):
        nn.LayerSpec("pool", {})
    with pytest.raises(ValueError, match="strictly positive"):
        nn.conv2d(1, 4, kernel=0)
    with pytest.raises(ValueError, match="strictly positive"):
        nn.LayerSpec("conv2d", {"in_channels": 1, "channels": 2, "kernel": 3, "stride": 0})
    with pytest.raises(ValueError, match="unknown activation"):
        nn.activation("sigmoid")
    with pytest.raises(ValueError, match="stride == size"):
        nn.LayerSpec("maxpool2d", {"size": 2, "stride": 1})


def test_forward_output_finite_on_finite_input():
    rng = np.random.default_rng(11)
    net = nn.Network([nn.conv2d(1, 4, 3), nn.activation("relu"), nn.maxpool2d(2),
                      nn.flatten(), nn.dense(16, 3), nn.activation("tanh")], seed=4)
    out = net.forward(rng.standard_normal((3, 4, 4, 1)).astype(np.float32))
    assert np.isfinite(out).all()
