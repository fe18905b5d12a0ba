import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shmdetect import neural
from shmdetect.errors import NumericalError
from shmdetect.neural import (DenseLayer, DenseNetwork, activate, backward, forward,
                              init_network, make_optimizer, numerical_gradient,
                              optimizer_step, relative_error)


def test_identity_layer_passes_input_through():
    net = DenseNetwork([DenseLayer(np.eye(3), np.zeros(3), "identity")])
    x = np.array([0.3, -1.0, 2.5])
    out, _ = forward(net, x)
    np.testing.assert_array_equal(out, x)


def test_zero_sigmoid_layer_gives_half():
    net = DenseNetwork([DenseLayer(np.zeros((4, 2)), np.zeros(4), "sigmoid")])
    out, _ = forward(net, np.array([[1.0, -7.0], [3.0, 0.0]]))
    np.testing.assert_array_equal(out, 0.5)


def test_activation_values():
    assert activate("leaky_relu", np.array(-1.0)) == pytest.approx(-0.01)
    assert activate("relu", np.array(-2.0)) == 0.0
    assert np.all(np.isfinite(activate("sigmoid", np.array([-1e4, 1e4]))))
    with pytest.raises(ValueError):
        activate("tanh", np.zeros(1))


def test_forward_dimension_mismatch():
    net = init_network([3, 2], "relu", seed=0)
    with pytest.raises(ValueError, match="input width"):
        forward(net, np.ones(4))


def test_layers_must_chain():
    with pytest.raises(ValueError, match="chain"):
        DenseNetwork([DenseLayer(np.ones((2, 3)), np.zeros(2), "relu"),
                      DenseLayer(np.ones((1, 4)), np.zeros(1), "relu")])


@pytest.mark.parametrize("acts", [("sigmoid", "relu", "identity"),
                                  ("leaky_relu", "sigmoid", "sigmoid"),
                                  ("relu", "leaky_relu", "identity")])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backward_matches_finite_differences(acts, seed):
    rng = np.random.default_rng(seed)
    net = init_network([6, 5, 4, 3], acts, seed=seed)
    for layer in net.layers:
        layer.bias[:] = rng.normal(0, 0.3, layer.bias.shape)
    x = rng.standard_normal((7, 6))
    w = rng.standard_normal((7, 3))

    def loss():
        return float(np.sum(forward(net, x)[0] * w))

    _, cache = forward(net, x)
    grads, gx = backward(net, cache, w)
    assert relative_error(grads, numerical_gradient(loss, net.parameters())) < 1e-6

    def loss_x():
        return float(np.sum(forward(net, xp[0])[0] * w))

    xp = [x.copy()]
    assert relative_error([gx], numerical_gradient(loss_x, xp)) < 1e-6


def test_zero_output_gradient_gives_zero_grads():
    net = init_network([4, 3, 2], "sigmoid", seed=3)
    _, cache = forward(net, np.ones((2, 4)))
    grads, gx = backward(net, cache, np.zeros((2, 2)))
    assert all(np.all(g == 0) for g in grads) and np.all(gx == 0)


def test_linear_layer_weight_gradient_is_input():
    net = DenseNetwork([DenseLayer(np.array([[0.3, -0.2, 0.9]]), np.zeros(1), "identity")])
    x = np.array([1.5, -2.0, 4.0])
    _, cache = forward(net, x)
    grads, gx = backward(net, cache, np.array([1.0]))
    np.testing.assert_array_equal(grads[0][0], x)
    np.testing.assert_array_equal(grads[1], [1.0])
    np.testing.assert_array_equal(gx, [0.3, -0.2, 0.9])


def test_stale_cache_detected():
    net = init_network([3, 2], "relu", seed=0)
    _, cache = forward(net, np.ones((2, 3)))
    with pytest.raises(ValueError, match="stale"):
        backward(net, cache, np.ones((3, 2)))
    other = init_network([3, 4, 2], "relu", seed=0)
    with pytest.raises(ValueError, match="stale"):
        backward(other, cache, np.ones((2, 2)))


def test_sgd_step():
    p = [np.array([1.0])]
    optimizer_step(make_optimizer("sgd", 0.1, p), p, [np.array([2.0])])
    assert p[0][0] == pytest.approx(0.8)


def test_adam_first_step_moves_by_learning_rate():
    p = [np.array([1.0, -2.0, 0.5])]
    g = [np.array([3.0, -0.01, 250.0])]
    state = make_optimizer("adam", 1e-3, p)
    before = p[0].copy()
    optimizer_step(state, p, g)
    np.testing.assert_allclose(before - p[0], 1e-3 * np.sign(g[0]), rtol=1e-5)


@pytest.mark.parametrize("kind", ["adam", "sgd"])
def test_zero_gradient_leaves_parameters(kind):
    p = [np.array([[1.0, 2.0]]), np.array([3.0])]
    ref = [a.copy() for a in p]
    state = make_optimizer(kind, 0.01, p)
    for _ in range(5):
        optimizer_step(state, p, [np.zeros_like(a) for a in p])
    assert all(np.array_equal(a, b) for a, b in zip(p, ref))


def test_nonfinite_gradient_aborts():
    p = [np.zeros(2)]
    with pytest.raises(NumericalError):
        optimizer_step(make_optimizer("adam", 0.01, p), p, [np.array([np.nan, 0.0])])


def test_init_network_contract():
    a = init_network([5, 7, 2], ["relu", "sigmoid"], seed=42)
    b = init_network([5, 7, 2], ["relu", "sigmoid"], seed=42)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weight, lb.weight)
        assert np.all(la.bias == 0)
        limit = np.sqrt(6.0 / (la.in_dim + la.out_dim))
        assert np.all(np.abs(la.weight) <= limit)
    with pytest.raises(ValueError):
        init_network([], "relu", 0)
    with pytest.raises(ValueError):
        init_network([3, 0], "relu", 0)


@given(st.lists(st.integers(1, 6), min_size=2, max_size=4),
       st.sampled_from(neural.ACTIVATIONS), st.integers(0, 1000))
def test_forward_backward_finite_and_sigmoid_bounded(sizes, act, seed):
    net = init_network(sizes, act, seed)
    x = np.random.default_rng(seed).normal(0, 5, (3, sizes[0]))
    out, cache = forward(net, x)
    grads, gx = backward(net, cache, np.ones_like(out))
    assert np.all(np.isfinite(out)) and np.all(np.isfinite(gx))
    assert all(np.all(np.isfinite(g)) for g in grads)
    if act == "sigmoid":
        assert np.all((out > 0) & (out < 1))
