"""Differentiable nonlinearities, row distributions and normalization"""

from collections.abc import Sequence
from typing import Any

import numpy as np
import numpy.typing as npt

from dacsm.numerics.graph import (
    DimensionError,
    ParameterError,
    Tensor,
    Var,
    lift,
    owning_graph,
)

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def _check_temperature(temperature: float) -> None:
    if not temperature > 0:
        err_msg = f"Temperature must be positive, got {temperature}"
        raise ParameterError(err_msg)


def softmax(values: npt.ArrayLike, temperature: float = 1.0) -> Tensor:
    """Softmax of a plain array along its last axis

    The row maximum is subtracted before exponentiation.

    :param npt.ArrayLike values: logits
    :param float temperature: positive divisor applied to the logits
    :return: row-stochastic array of the same shape
    :raise ParameterError: if ``temperature`` is not positive
    """
    _check_temperature(temperature)
    z = np.asarray(values, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(values: npt.ArrayLike, temperature: float = 1.0) -> Tensor:
    """Log-softmax of a plain array along its last axis"""
    _check_temperature(temperature)
    z = np.asarray(values, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_rows(x: Var | Any, temperature: float = 1.0) -> Var:  # noqa: ANN401
    """Differentiable softmax along the last axis

    :param Var | Any x: logits, one distribution per row
    :param float temperature: positive divisor applied to the logits
    :return: node holding the row distributions
    :raise ParameterError: if ``temperature`` is not positive
    """
    graph = owning_graph(x)
    x = lift(x, graph)
    s = softmax(x.value, temperature)

    def vjp(g: Tensor) -> tuple[Tensor]:
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)) / temperature,)

    return graph.record("softmax", (x,), s, vjp)


def log_softmax_rows(x: Var | Any, temperature: float = 1.0) -> Var:  # noqa: ANN401
    """Differentiable log-softmax along the last axis"""
    graph = owning_graph(x)
    x = lift(x, graph)
    out = log_softmax(x.value, temperature)
    s = np.exp(out)

    def vjp(g: Tensor) -> tuple[Tensor]:
        return ((g - s * g.sum(axis=-1, keepdims=True)) / temperature,)

    return graph.record("log_softmax", (x,), out, vjp)


def exp(x: Var) -> Var:
    """Elementwise exponential"""
    out = np.exp(x.value)
    return x.graph.record("exp", (x,), out, lambda g: (g * out,))


def log(x: Var) -> Var:
    """Elementwise natural logarithm"""
    xv = x.value
    return x.graph.record("log", (x,), np.log(xv), lambda g: (g / xv,))


def square(x: Var) -> Var:
    """Elementwise square"""
    xv = x.value
    return x.graph.record("square", (x,), xv * xv, lambda g: (2.0 * g * xv,))


def sqrt(x: Var) -> Var:
    """Elementwise square root; the derivative at zero is taken as zero"""
    out = np.sqrt(x.value)

    def vjp(g: Tensor) -> tuple[Tensor]:
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return x.graph.record("sqrt", (x,), out, vjp)


def tanh(x: Var) -> Var:
    """Elementwise hyperbolic tangent"""
    out = np.tanh(x.value)
    return x.graph.record("tanh", (x,), out, lambda g: (g * (1.0 - out * out),))


def gelu(x: Var) -> Var:
    """Tanh approximation of the Gaussian error linear unit"""
    xv = x.value
    t = np.tanh(_GELU_C * (xv + _GELU_A * xv**3))
    out = 0.5 * xv * (1.0 + t)

    def vjp(g: Tensor) -> tuple[Tensor]:
        inner = _GELU_C * (1.0 + 3.0 * _GELU_A * xv * xv)
        return (g * (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * inner),)

    return x.graph.record("gelu", (x,), out, vjp)


def concat(xs: Sequence[Var | Any], axis: int = 0) -> Var:  # noqa: ANN401
    """Concatenate nodes along ``axis``

    :raise DimensionError: if the operands disagree off ``axis``
    """
    graph = owning_graph(*xs)
    nodes = [lift(x, graph) for x in xs]
    try:
        value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = [n.shape for n in nodes]
        err_msg = f"Cannot concatenate shapes {shapes} along axis {axis}"
        raise DimensionError(err_msg) from None
    splits = np.cumsum([n.shape[axis] for n in nodes])[:-1]
    return graph.record(
        "concat", nodes, value, lambda g: tuple(np.split(g, splits, axis=axis))
    )


def norm(x: Var) -> Var:
    """Euclidean (Frobenius) norm of all elements; the derivative at zero is zero"""
    xv = x.value
    n = float(np.sqrt(np.sum(xv * xv)))

    def vjp(g: Tensor) -> tuple[Tensor]:
        if n == 0.0:
            return (np.zeros_like(xv),)
        return (g * xv / n,)

    return x.graph.record("norm", (x,), n, vjp)


def stop_gradient(x: Var) -> Var:
    """Return a constant copy of ``x``; no gradient flows back through it"""
    return x.graph.constant(x.value)


def layer_norm(x: Var, gain: Var | Any, bias: Var | Any, eps: float = 1e-6) -> Var:  # noqa: ANN401
    """Normalize the last axis to zero mean and unit variance, then scale and shift

    :param Var x: rows to normalize
    :param Var | Any gain: per-channel scale
    :param Var | Any bias: per-channel shift
    :param float eps: variance floor
    :return: normalized node with the shape of ``x``
    """
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = square(centered).mean(axis=-1, keepdims=True)
    return centered / sqrt(variance + eps) * gain + bias
