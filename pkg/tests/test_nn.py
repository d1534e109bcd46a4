import numpy as np
import pytest

from advmut import nn


def test_identity_layer_passthrough():
    net = nn.DenseNet(
        layers=[nn.Layer(np.eye(2), np.zeros(2), nn.ACT_IDENTITY)], input_width=2
    )
    assert np.allclose(nn.forward(net, np.array([1.0, 2.0])), [1.0, 2.0])


def test_leaky_relu_values():
    net = nn.DenseNet(
        layers=[nn.Layer(np.eye(1), np.zeros(1), nn.ACT_LEAKY_RELU, alpha=0.01)],
        input_width=1,
    )
    assert nn.forward(net, np.array([-2.0]))[0] == pytest.approx(-0.02)
    assert nn.forward(net, np.array([3.0]))[0] == pytest.approx(3.0)


def test_sigmoid_at_zero():
    net = nn.DenseNet(
        layers=[nn.Layer(np.eye(1), np.zeros(1), nn.ACT_SIGMOID)], input_width=1
    )
    assert nn.forward(net, np.array([0.0]))[0] == pytest.approx(0.5)


def test_forward_width_mismatch():
    net = nn.init_dense([3, 2], [nn.ACT_IDENTITY], seed=0)
    with pytest.raises(nn.WidthMismatch):
        nn.forward(net, np.zeros(4))


def test_xor_learnable_in_200_steps():
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float64)
    t = np.array([[0], [1], [1], [0]], dtype=np.float64)
    net = nn.init_dense([2, 4, 1], [nn.ACT_SIGMOID, nn.ACT_SIGMOID], seed=0)
    opt = nn.Adam(lr=0.1)
    for _ in range(200):
        nn.train_step(net, nn.TrainBatch(x, t), nn.LOSS_BCE, opt)
    y = nn.forward(net, x).ravel()
    assert ((y > 0.5) == (t.ravel() > 0.5)).all()


def test_zero_learning_rate_freezes_parameters():
    net = nn.init_dense([3, 5, 1], [nn.ACT_RELU, nn.ACT_SIGMOID], seed=1)
    before = [p.copy() for p in net.parameters()]
    batch = nn.TrainBatch(np.ones((4, 3)), np.full((4, 1), 0.3))
    nn.train_step(net, batch, nn.LOSS_BCE, nn.SgdMomentum(lr=0.0))
    for p, q in zip(net.parameters(), before):
        assert np.array_equal(p, q)


def test_mse_fixpoint_zero_loss():
    net = nn.init_dense([2, 3, 2], [nn.ACT_LEAKY_RELU, nn.ACT_IDENTITY], seed=2)
    x = np.array([[0.3, -0.4]])
    y = nn.forward(net, x)
    loss = nn.train_step(net, nn.TrainBatch(x, y), nn.LOSS_MSE, nn.SgdMomentum(lr=0.0))
    assert loss == 0.0


def test_gradient_check_random_net(rng):
    net = nn.init_dense(
        [4, 8, 6, 2], [nn.ACT_LEAKY_RELU, nn.ACT_RELU, nn.ACT_SIGMOID], seed=0
    )
    # nudge inputs off exact zeros so no ReLU kink sits on the probe path
    batch = nn.TrainBatch(rng.normal(size=(5, 4)) + 0.05, rng.uniform(0.2, 0.8, (5, 2)))
    assert nn.gradient_check(net, batch, nn.LOSS_BCE, eps=1e-5) < 1e-4
    assert nn.gradient_check(net, batch, nn.LOSS_MSE, eps=1e-5) < 1e-4


def test_gradient_check_linear_exact(rng):
    net = nn.init_dense([3, 2], [nn.ACT_IDENTITY], seed=3)
    batch = nn.TrainBatch(rng.normal(size=(4, 3)), rng.normal(size=(4, 2)))
    assert nn.gradient_check(net, batch, nn.LOSS_MSE, eps=1e-5) < 1e-8


def test_gradient_check_eps_bounds():
    net = nn.init_dense([2, 1], [nn.ACT_IDENTITY], seed=0)
    batch = nn.TrainBatch(np.ones((1, 2)), np.ones((1, 1)))
    with pytest.raises(ValueError):
        nn.gradient_check(net, batch, nn.LOSS_MSE, eps=1.0)


def test_training_deterministic_under_seed(rng):
    x = rng.normal(size=(16, 3))
    t = rng.uniform(0.1, 0.9, (16, 1))

    def run():
        net = nn.init_dense([3, 8, 1], [nn.ACT_RELU, nn.ACT_SIGMOID], seed=7)
        opt = nn.Adam(lr=1e-3)
        for _ in range(50):
            nn.train_step(net, nn.TrainBatch(x, t), nn.LOSS_BCE, opt)
        return net

    a, b = run(), run()
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)  # bit-identical


def test_sigmoid_outputs_bounded(rng):
    net = nn.init_dense([4, 6, 3], [nn.ACT_LEAKY_RELU, nn.ACT_SIGMOID], seed=5)
    y = nn.forward(net, rng.normal(size=(50, 4)) * 3)
    assert ((y > 0.0) & (y < 1.0)).all()


def test_leaky_relu_preserves_positive_sign(rng):
    net = nn.DenseNet(
        layers=[nn.Layer(np.eye(3), np.zeros(3), nn.ACT_LEAKY_RELU)], input_width=3
    )
    x = np.abs(rng.normal(size=(20, 3))) + 1e-6
    assert (nn.forward(net, x) > 0).all()


def test_nonfinite_loss_raises():
    net = nn.init_dense([2, 1], [nn.ACT_IDENTITY], seed=0)
    bad = nn.TrainBatch(np.array([[np.inf, 1.0]]), np.array([[0.0]]))
    with pytest.raises(nn.NonFiniteLoss):
        nn.train_step(net, bad, nn.LOSS_MSE, nn.Adam())


def test_checkpoint_roundtrip(tmp_path):
    net = nn.init_dense(
        [5, 4, 2], [nn.ACT_LEAKY_RELU, nn.ACT_SIGMOID], seed=9, alpha=0.02
    )
    nn.save_net(net, tmp_path / "net.dnet")
    back = nn.load_net(tmp_path / "net.dnet")
    assert back.input_width == net.input_width
    for a, b in zip(net.layers, back.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)
        assert a.activation == b.activation and a.alpha == b.alpha
    x = np.array([0.1, -0.2, 0.3, 0.4, -0.5])
    assert np.array_equal(nn.forward(net, x), nn.forward(back, x))
