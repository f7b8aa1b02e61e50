"""Test differentiable nonlinearities"""

import numpy as np
import pytest

from dacsm.numerics import Graph, ParameterError, softmax, softmax_rows
from dacsm.numerics.gradcheck import check_op_gradient
from dacsm.numerics.ops import (
    concat,
    exp,
    gelu,
    layer_norm,
    log,
    log_softmax,
    log_softmax_rows,
    norm,
    sqrt,
    square,
    stop_gradient,
    tanh,
)

GRAD_TOL = 1e-6


@pytest.fixture(scope="module")
def x() -> np.ndarray:
    """Create test fixture for a random 3 x 4 input"""
    return np.random.default_rng(0).normal(size=(3, 4))


@pytest.fixture(scope="module")
def weights() -> np.ndarray:
    """Create test fixture for a random read-out of a 3 x 4 output"""
    return np.random.default_rng(1).normal(size=(3, 4))


def test_softmax_rows_sum_to_one(x):
    """Test row normalization and temperature"""
    np.testing.assert_allclose(softmax(x).sum(axis=1), np.ones(3))
    hot = softmax(x, temperature=0.01)
    np.testing.assert_array_equal(hot.argmax(axis=1), x.argmax(axis=1))


def test_softmax_is_stable_for_large_logits():
    """Test that huge logits do not overflow"""
    np.testing.assert_allclose(softmax([1000.0, 1000.0]), [0.5, 0.5])
    assert np.isfinite(log_softmax([1000.0, -1000.0])).all()


def test_log_softmax_matches_log_of_softmax(x):
    """Test consistency of the two softmax forms"""
    np.testing.assert_allclose(log_softmax(x, 2.0), np.log(softmax(x, 2.0)))


@pytest.mark.parametrize("temperature", [0.0, -1.0])
def test_nonpositive_temperature(x, temperature):
    """Test that temperatures must be positive"""
    with pytest.raises(ParameterError):
        softmax(x, temperature)
    with pytest.raises(ParameterError):
        softmax_rows(x, temperature)


@pytest.mark.parametrize(
    "op",
    [
        lambda v: softmax_rows(v),
        lambda v: softmax_rows(v, 0.5),
        lambda v: log_softmax_rows(v, 2.0),
        exp,
        tanh,
        gelu,
        square,
    ],
)
def test_elementwise_gradients(op, x, weights):
    """Test analytic gradients against finite differences"""
    err = check_op_gradient(lambda v: (op(v) * weights).sum(), [x])
    assert err < GRAD_TOL


def test_log_and_sqrt_gradients(x, weights):
    """Test gradients of ops restricted to positive inputs"""
    positive = np.abs(x) + 0.5
    assert check_op_gradient(lambda v: (log(v) * weights).sum(), [positive]) < GRAD_TOL
    assert check_op_gradient(lambda v: (sqrt(v) * weights).sum(), [positive]) < GRAD_TOL


def test_sqrt_derivative_at_zero():
    """Test that the square root passes zero gradient at zero"""
    graph = Graph()
    v = graph.leaf([0.0, 4.0], "v")
    grads = graph.backward(sqrt(v).sum())
    np.testing.assert_allclose(grads["v"], [0.0, 0.25])


def test_layer_norm(x, weights):
    """Test normalization statistics and gradients"""
    graph = Graph()
    out = layer_norm(graph.constant(x), np.ones(4), np.zeros(4)).value
    np.testing.assert_allclose(out.mean(axis=1), np.zeros(3), atol=1e-12)
    np.testing.assert_allclose(out.std(axis=1), np.ones(3), atol=1e-4)

    gain = np.linspace(0.5, 1.5, 4)
    bias = np.linspace(-0.1, 0.1, 4)
    err = check_op_gradient(
        lambda v, g, b: (layer_norm(v, g, b) * weights).sum(), [x, gain, bias]
    )
    assert err < GRAD_TOL


def test_concat_and_norm(x, weights):
    """Test concatenation splits gradients and the norm value"""
    err = check_op_gradient(
        lambda a, b: (concat([a, b], axis=0) * np.vstack([weights, weights])).sum(),
        [x, x[::-1]],
    )
    assert err < GRAD_TOL
    assert check_op_gradient(lambda v: norm(v), [x]) < GRAD_TOL

    graph = Graph()
    assert norm(graph.constant([3.0, 4.0])).value == pytest.approx(5.0)
    z = graph.leaf(np.zeros(2), "z")
    np.testing.assert_array_equal(graph.backward(norm(z))["z"], np.zeros(2))


def test_stop_gradient():
    """Test that stop_gradient keeps the value and blocks the gradient"""
    graph = Graph()
    v = graph.leaf([1.0, 2.0], "v")
    frozen = stop_gradient(v)
    np.testing.assert_array_equal(frozen.value, [1.0, 2.0])
    grads = graph.backward((v + frozen * 3.0).sum())
    np.testing.assert_allclose(grads["v"], [1.0, 1.0])
