"""Dense network engine: forward/backward math, Adam, losses, model files."""

import numpy as np
import pytest

from tsalign.errors import (
    ConfigurationError,
    MagicError,
    NumericError,
    ShapeError,
    StateError,
    TruncatedFileError,
    VersionError,
)
from tsalign.neuralnet import (
    AdamState,
    DenseLayer,
    Network,
    adam_step,
    backward,
    cross_entropy_softmax,
    forward,
    init_adam,
    init_network,
    mse,
    network_from_bytes,
    network_to_bytes,
    softmax,
)

from helpers import max_rel_err, network_fd_check


def small_net(dims=(3, 4, 2), acts=("relu", "linear"), seed=0):
    return init_network(list(dims), list(acts), seed=seed).astype(np.float64)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def test_init_network_shapes_and_zero_bias():
    net = init_network([5, 7, 3], ["tanh", "linear"], seed=1)
    assert net.in_dim == 5
    assert net.out_dim == 3
    assert net.layers[0].weights.shape == (5, 7)
    assert net.layers[1].weights.shape == (7, 3)
    assert all(np.all(l.bias == 0.0) for l in net.layers)


def test_init_network_is_seed_deterministic():
    a = init_network([4, 4], ["relu"], seed=7)
    b = init_network([4, 4], ["relu"], seed=7)
    c = init_network([4, 4], ["relu"], seed=8)
    assert np.array_equal(a.layers[0].weights, b.layers[0].weights)
    assert not np.array_equal(a.layers[0].weights, c.layers[0].weights)


def test_init_scales_match_fan_rules():
    # He for relu, Glorot for the rest; loose statistical check on wide layers.
    relu = init_network([400, 300], ["relu"], seed=0)
    lin = init_network([400, 300], ["linear"], seed=0)
    assert np.std(relu.layers[0].weights) == pytest.approx(
        np.sqrt(2.0 / 400), rel=0.05)
    assert np.std(lin.layers[0].weights) == pytest.approx(
        np.sqrt(2.0 / 700), rel=0.05)


def test_init_network_activation_count_mismatch():
    with pytest.raises(ConfigurationError):
        init_network([3, 3, 3], ["relu"], seed=0)


def test_layer_validation():
    with pytest.raises(ConfigurationError):
        DenseLayer(np.zeros((2, 2)), np.zeros(2), "sigmoid")
    with pytest.raises(ShapeError):
        DenseLayer(np.zeros((2, 3)), np.zeros(2), "relu")
    with pytest.raises(ShapeError):
        Network([DenseLayer(np.zeros((2, 3)), np.zeros(3), "relu"),
                 DenseLayer(np.zeros((4, 1)), np.zeros(1), "linear")])


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def test_forward_matches_manual_computation():
    net = small_net(dims=(2, 3, 1), acts=("tanh", "linear"), seed=3)
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    h = np.tanh(x @ net.layers[0].weights + net.layers[0].bias)
    expected = h @ net.layers[1].weights + net.layers[1].bias
    out, _ = forward(net, x)
    assert np.allclose(out, expected)


def test_forward_rejects_wrong_input_shape():
    net = small_net()
    with pytest.raises(ShapeError):
        forward(net, np.zeros((2, 5)))
    with pytest.raises(ShapeError):
        forward(net, np.zeros(3))


def test_backward_rejects_stale_cache():
    net = small_net()
    out, cache = forward(net, np.ones((2, 3)))
    net.version += 1
    with pytest.raises(StateError):
        backward(net, cache, np.ones_like(out))


def test_backward_rejects_wrong_grad_shape():
    net = small_net()
    _, cache = forward(net, np.ones((2, 3)))
    with pytest.raises(ShapeError):
        backward(net, cache, np.ones((2, 5)))


@pytest.mark.parametrize("acts", [("relu", "linear"), ("tanh", "linear"),
                                  ("tanh", "tanh"), ("linear", "relu")])
def test_gradients_match_finite_differences(acts):
    net = small_net(dims=(3, 5, 2), acts=acts, seed=11)
    x = np.random.default_rng(0).normal(size=(4, 3))
    target = np.random.default_rng(1).normal(size=(4, 2))

    def loss_fn(n):
        out, cache = forward(n, x)
        loss, dy = mse(out, target)
        grads, _ = backward(n, cache, dy)
        return loss, grads

    assert network_fd_check(net, loss_fn) < 1e-6


def test_input_gradient_matches_finite_differences():
    net = small_net(dims=(3, 4, 2), acts=("tanh", "linear"), seed=5)
    x0 = np.random.default_rng(2).normal(size=(1, 3))
    target = np.zeros((1, 2))

    out, cache = forward(net, x0)
    _, dy = mse(out, target)
    _, dx = backward(net, cache, dy)

    h = 1e-6
    numeric = np.zeros_like(x0)
    for i in range(3):
        xp = x0.copy()
        xp[0, i] += h
        xm = x0.copy()
        xm[0, i] -= h
        fp = mse(forward(net, xp)[0], target)[0]
        fm = mse(forward(net, xm)[0], target)[0]
        numeric[0, i] = (fp - fm) / (2 * h)
    assert max_rel_err(dx, numeric, floor=1e-9) < 1e-6


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_first_step_is_signed_lr():
    # After bias correction the first update is lr * g / (|g| + eps).
    net = Network([DenseLayer(np.array([[2.0]]), np.zeros(1), "linear")])
    opt = init_adam(net, lr=0.1)
    grads = [(np.array([[0.5]]), np.array([0.0]))]
    adam_step(opt, net, grads)
    assert net.layers[0].weights[0, 0] == pytest.approx(2.0 - 0.1, abs=1e-6)


def test_adam_matches_reference_implementation():
    rng = np.random.default_rng(4)
    net = small_net(dims=(2, 3), acts=("linear",), seed=9)
    w0 = net.layers[0].weights.copy()
    b0 = net.layers[0].bias.copy()
    opt = init_adam(net, lr=0.01, beta1=0.8, beta2=0.95)

    m = [np.zeros_like(w0), np.zeros_like(b0)]
    v = [np.zeros_like(w0), np.zeros_like(b0)]
    ref = [w0.copy(), b0.copy()]
    for t in range(1, 6):
        gw = rng.normal(size=w0.shape)
        gb = rng.normal(size=b0.shape)
        adam_step(opt, net, [(gw, gb)])
        for j, g in enumerate((gw, gb)):
            m[j] = 0.8 * m[j] + 0.2 * g
            v[j] = 0.95 * v[j] + 0.05 * g * g
            mh = m[j] / (1 - 0.8 ** t)
            vh = v[j] / (1 - 0.95 ** t)
            ref[j] = ref[j] - 0.01 * mh / (np.sqrt(vh) + 1e-8)
    assert np.allclose(net.layers[0].weights, ref[0], atol=1e-12)
    assert np.allclose(net.layers[0].bias, ref[1], atol=1e-12)


def test_adam_rejects_non_finite_gradients():
    net = small_net(dims=(2, 2), acts=("linear",))
    opt = init_adam(net, lr=0.1)
    bad = [(np.array([[np.nan, 0.0], [0.0, 0.0]]), np.zeros(2))]
    with pytest.raises(NumericError):
        adam_step(opt, net, bad)


def test_adam_rejects_shape_mismatch():
    net = small_net(dims=(2, 2), acts=("linear",))
    opt = init_adam(net, lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(opt, net, [(np.zeros((3, 2)), np.zeros(2))])


def test_adam_bumps_network_version():
    net = small_net(dims=(2, 2), acts=("linear",))
    opt = init_adam(net, lr=0.1)
    v = net.version
    adam_step(opt, net, [(np.zeros((2, 2)), np.zeros(2))])
    assert net.version == v + 1


def test_init_adam_rejects_bad_lr():
    with pytest.raises(ConfigurationError):
        init_adam(small_net(), lr=0.0)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def test_mse_closed_form():
    loss, grad = mse(np.array([[1.0, 3.0]]), np.array([[0.0, 1.0]]))
    assert loss == pytest.approx((1.0 + 4.0) / 2)
    assert np.allclose(grad, [[1.0, 2.0]])


def test_mse_broadcasts_scalar_target():
    loss, _ = mse(np.full((2, 2), 0.5), 1.0)
    assert loss == pytest.approx(0.25)


def test_softmax_rows_normalize():
    probs = softmax(np.array([[1e4, 0.0, -1e4], [3.0, 3.0, 3.0]]))
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert probs[0, 0] == pytest.approx(1.0)
    assert np.allclose(probs[1], 1.0 / 3.0)


def test_cross_entropy_uniform_logits():
    k = 38
    loss, _ = cross_entropy_softmax(np.zeros((5, k)), np.arange(5) % k)
    assert loss == pytest.approx(np.log(k), rel=1e-12)


def test_cross_entropy_gradient_matches_probs_minus_onehot():
    logits = np.array([[2.0, -1.0, 0.5], [0.0, 0.0, 5.0]])
    classes = np.array([0, 2])
    _, grad = cross_entropy_softmax(logits, classes)
    probs = softmax(logits)
    probs[np.arange(2), classes] -= 1.0
    assert np.allclose(grad, probs / 2.0, atol=1e-7)


def test_cross_entropy_validates_classes():
    with pytest.raises(ConfigurationError):
        cross_entropy_softmax(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(ShapeError):
        cross_entropy_softmax(np.zeros((2, 3)), np.array([0]))


def test_cross_entropy_extreme_logits_stay_finite():
    loss, grad = cross_entropy_softmax(
        np.array([[1e4, -1e4], [-1e4, 1e4]], dtype=np.float64),
        np.array([0, 0]))
    assert np.isfinite(loss)
    assert np.all(np.isfinite(grad))


# ---------------------------------------------------------------------------
# TSNN files
# ---------------------------------------------------------------------------

def test_round_trip_preserves_bytes():
    net = init_network([4, 6, 2], ["relu", "tanh"], seed=13)
    raw = network_to_bytes(net)
    back = network_from_bytes(raw)
    assert network_to_bytes(back) == raw
    assert [l.activation for l in back.layers] == ["relu", "tanh"]
    for orig, copy in zip(net.layers, back.layers):
        assert np.array_equal(orig.weights, copy.weights)
        assert np.array_equal(orig.bias, copy.bias)


def test_round_trip_predictions_identical():
    net = init_network([3, 5, 2], ["relu", "linear"], seed=21)
    back = network_from_bytes(network_to_bytes(net))
    x = np.random.default_rng(0).normal(size=(7, 3)).astype(np.float32)
    assert np.array_equal(forward(net, x)[0], forward(back, x)[0])


def test_model_file_bad_magic():
    raw = b"XXXX" + network_to_bytes(small_net())[4:]
    with pytest.raises(MagicError):
        network_from_bytes(raw)


def test_model_file_bad_version():
    raw = bytearray(network_to_bytes(small_net()))
    raw[4:8] = (7).to_bytes(4, "little")
    with pytest.raises(VersionError):
        network_from_bytes(bytes(raw))


def test_model_file_truncations():
    raw = network_to_bytes(init_network([3, 2], ["relu"], seed=0))
    with pytest.raises(TruncatedFileError):
        network_from_bytes(raw[:8])        # header cut
    with pytest.raises(TruncatedFileError):
        network_from_bytes(raw[:14])       # layer header cut
    with pytest.raises(TruncatedFileError):
        network_from_bytes(raw[:-3])       # parameters cut
    with pytest.raises(TruncatedFileError):
        network_from_bytes(raw + b"\x00")  # trailing junk


def test_model_file_unknown_activation_code():
    raw = bytearray(network_to_bytes(init_network([3, 2], ["relu"], seed=0)))
    raw[20] = 9  # activation byte of the first layer header
    with pytest.raises(VersionError):
        network_from_bytes(bytes(raw))
