"""Statistics, divergences and spectral utilities"""

from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.special import rel_entr

from dacsm.numerics.graph import (
    DimensionError,
    DivergenceUndefinedError,
    InsufficientSamplesError,
    ParameterError,
    Var,
    lift,
    owning_graph,
)
from dacsm.numerics.ops import sqrt, square

DISTRIBUTION_TOLERANCE = 1e-9


def channel_stats(f: Var | Any) -> tuple[Var, Var]:  # noqa: ANN401
    """Per-channel mean and population standard deviation over rows

    :param Var | Any f: ``N x D`` features, one sample per row
    :return: ``(mean, std)``, each of length ``D``
    :raise InsufficientSamplesError: if fewer than two rows are given
    """
    graph = owning_graph(f)
    f = lift(f, graph)
    if f.ndim != 2:
        err_msg = f"Channel statistics expect a 2-D input, got shape {f.shape}"
        raise DimensionError(err_msg)
    if f.shape[0] < 2:
        err_msg = f"Channel statistics need at least 2 rows, got {f.shape[0]}"
        raise InsufficientSamplesError(err_msg)
    mean = f.mean(axis=0)
    std = sqrt(square(f - mean).mean(axis=0))
    return mean, std


def min_singular_value(v: npt.ArrayLike) -> float:
    """Smallest singular value of a matrix

    :param npt.ArrayLike v: ``n x d`` matrix
    :return: smallest of the ``min(n, d)`` singular values, nonnegative
    """
    arr = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if arr.size == 0:
        err_msg = f"Singular values of an empty matrix ({arr.shape}) are undefined"
        raise DimensionError(err_msg)
    return float(np.linalg.svd(arr, compute_uv=False)[-1])


def _check_distribution(name: str, p: np.ndarray) -> None:
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > DISTRIBUTION_TOLERANCE:
        err_msg = f"{name} is not a probability distribution (sum={p.sum()!r})"
        raise ParameterError(err_msg)


def kl_divergence(p: npt.ArrayLike, q: npt.ArrayLike) -> float:
    """Kullback-Leibler divergence ``sum p log(p / q)``

    :param npt.ArrayLike p: reference distribution
    :param npt.ArrayLike q: approximating distribution, positive wherever ``p`` is
    :return: nonnegative divergence, zero iff ``p == q``
    :raise DivergenceUndefinedError: if ``q`` vanishes where ``p`` does not
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        err_msg = f"Distributions differ in shape: {p.shape} vs {q.shape}"
        raise DimensionError(err_msg)
    _check_distribution("p", p)
    _check_distribution("q", q)
    violations = np.flatnonzero((p > 0) & (q <= 0))
    if violations.size:
        err_msg = f"q has no mass at indices {violations.tolist()} where p > 0"
        raise DivergenceUndefinedError(err_msg)
    return max(float(rel_entr(p, q).sum()), 0.0)


def row_entropy(weights: npt.ArrayLike) -> np.ndarray:
    """Shannon entropy (nats) of each row distribution along the last axis"""
    w = np.asarray(weights, dtype=np.float64)
    return -np.sum(np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0), axis=-1)
