"""Central finite-difference checks for analytic gradients"""

from collections.abc import Callable, Mapping, Sequence

import numpy as np

from dacsm.numerics.graph import Graph, Tensor, Var

DEFAULT_STEP = 1e-5

BuildFn = Callable[..., Var]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|)``

    Returns the absolute error when both gradients are numerically zero.
    """
    diff = float(np.linalg.norm(np.ravel(analytic) - np.ravel(numeric)))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return diff / scale if scale > 1e-8 else diff


def numerical_gradient(
    fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = DEFAULT_STEP
) -> Tensor:
    """Elementwise central-difference gradient of a scalar function

    :param Callable[[np.ndarray], float] fn: scalar function of one array
    :param np.ndarray x: evaluation point
    :param float step: perturbation size
    :return: gradient estimate shaped like ``x``
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        f_plus = fn(x)
        flat[i] = original - step
        f_minus = fn(x)
        flat[i] = original
        out[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def check_op_gradient(
    build: BuildFn, inputs: Sequence[np.ndarray], step: float = DEFAULT_STEP
) -> float:
    """Compare backward against finite differences for a scalar-valued builder

    :param BuildFn build: maps input nodes to a scalar node, e.g.
        ``lambda x: (softmax_rows(x) * weights).sum()``
    :param Sequence[np.ndarray] inputs: evaluation point, one array per builder argument
    :param float step: perturbation size
    :return: worst relative error over all inputs
    """
    graph = Graph()
    leaves = [graph.leaf(x, f"x{i}") for i, x in enumerate(inputs)]
    analytic = graph.backward(build(*leaves))

    worst = 0.0
    for i, x in enumerate(inputs):

        def evaluate(xi: np.ndarray, i: int = i) -> float:
            g = Graph()
            args = [g.constant(xi if j == i else xj) for j, xj in enumerate(inputs)]
            return float(build(*args).value)

        numeric = numerical_gradient(evaluate, x, step)
        worst = max(worst, relative_error(analytic[f"x{i}"], numeric))
    return worst


def check_directional_gradient(
    loss: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    rng: np.random.Generator,
    step: float = DEFAULT_STEP,
) -> float:
    """Compare a directional derivative against a central difference

    Used for models whose parameter count makes elementwise checks too slow.

    :param Callable[[Mapping[str, np.ndarray]], float] loss: scalar loss evaluated at a parameter mapping
    :param Mapping[str, np.ndarray] params: evaluation point
    :param Mapping[str, np.ndarray] grads: analytic gradients keyed like ``params``
    :param np.random.Generator rng: source of the random direction
    :param float step: perturbation size along the direction
    :return: relative error between ``<grad, v>`` and the finite difference
    """
    direction = {k: rng.standard_normal(v.shape) for k, v in params.items()}
    analytic = sum(float(np.sum(grads[k] * direction[k])) for k in params)
    plus = {k: v + step * direction[k] for k, v in params.items()}
    minus = {k: v - step * direction[k] for k, v in params.items()}
    numeric = (loss(plus) - loss(minus)) / (2.0 * step)
    return relative_error(np.array([analytic]), np.array([numeric]))
