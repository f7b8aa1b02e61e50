"""Cross-scale matching: source rescaling and the sub-center classifier"""

from collections.abc import Mapping

import numpy as np
import numpy.typing as npt

from dacsm.numerics import (
    DimensionError,
    InsufficientSamplesError,
    ParameterError,
    Tensor,
    Var,
)
from dacsm.numerics.graph import lift, owning_graph
from dacsm.numerics.interpolate import bilinear_resize

MIN_CELL_SAMPLES = 20


def rescale(image: npt.ArrayLike, side: int, patch_size: int = 1) -> Tensor:
    """Bilinearly resize an ``H x W x C`` image to ``side x side``

    :raise ParameterError: if ``side`` is not a positive multiple of ``patch_size``
    """
    if side < 1 or side % patch_size:
        err_msg = f"Scale side {side} is not a positive multiple of patch size {patch_size}"
        raise ParameterError(err_msg)
    return bilinear_resize(image, side, side)


def _check_bank(weights: Var, f: Var) -> tuple[int, int, int]:
    if weights.ndim != 3 or f.ndim != 1 or weights.shape[2] != f.shape[0]:
        err_msg = f"Feature of shape {f.shape} does not fit sub-center bank {weights.shape}"
        raise DimensionError(err_msg)
    return weights.shape


def source_logits(
    weights: Var | npt.ArrayLike,
    f: Var | npt.ArrayLike,
    k: int,
    bias: Var | npt.ArrayLike | None = None,
) -> Var:
    """Logits of a source feature from sub-center ``k`` only

    :param Var | npt.ArrayLike weights: ``C x K x D`` sub-center bank
    :param Var | npt.ArrayLike f: feature of length ``D``
    :param int k: scale the feature was produced at
    :param Var | npt.ArrayLike | None bias: optional per-class bias
    :raise ParameterError: if ``k`` is out of range
    """
    graph = owning_graph(weights, f, bias)
    weights, f = lift(weights, graph), lift(f, graph)
    _, n_scales, _ = _check_bank(weights, f)
    if not 0 <= k < n_scales:
        err_msg = f"Scale index {k} outside the {n_scales} sub-centers"
        raise ParameterError(err_msg)
    logits = weights[:, k, :] @ f
    return logits if bias is None else logits + lift(bias, graph)


def target_logits(
    weights: Var | npt.ArrayLike,
    f: Var | npt.ArrayLike,
    bias: Var | npt.ArrayLike | None = None,
) -> tuple[Var, list[int]]:
    """Per-class maximum over sub-centers

    Gradient flows only through the selected sub-center of each class.

    :param Var | npt.ArrayLike weights: ``C x K x D`` sub-center bank
    :param Var | npt.ArrayLike f: feature of length ``D``
    :param Var | npt.ArrayLike | None bias: optional per-class bias
    :return: logits and the chosen sub-center per class (lowest index on ties)
    """
    graph = owning_graph(weights, f, bias)
    weights, f = lift(weights, graph), lift(f, graph)
    n_classes, n_scales, dim = _check_bank(weights, f)
    scores = weights.reshape(n_classes * n_scales, dim) @ f
    chosen = np.argmax(scores.value.reshape(n_classes, n_scales), axis=1)
    logits = scores[np.arange(n_classes) * n_scales + chosen]
    if bias is not None:
        logits = logits + lift(bias, graph)
    return logits, chosen.tolist()


def subcenter_choice(weights: npt.ArrayLike, features: npt.ArrayLike) -> np.ndarray:
    """Chosen sub-center of every class for a batch of features

    :param npt.ArrayLike weights: ``C x K x D`` bank
    :param npt.ArrayLike features: ``n x D``
    :return: ``n x C`` sub-center indices
    """
    w = np.asarray(weights, dtype=np.float64)
    scores = np.einsum("ckd,nd->nck", w, np.atleast_2d(np.asarray(features, dtype=np.float64)))
    return np.argmax(scores, axis=2)


def scale_selection_matrix(
    weights: npt.ArrayLike, bank: Mapping[tuple[int, int], npt.ArrayLike]
) -> Tensor:
    """Selection frequencies of the sub-centers per class and input scale

    :param npt.ArrayLike weights: ``C x K x D`` bank
    :param Mapping[tuple[int, int], npt.ArrayLike] bank: features keyed by ``(class, scale)``
    :return: ``C x K x K`` array whose entry ``(c, k, k')`` is the fraction of class
        ``c`` scale ``k`` features for which class ``c`` selects sub-center ``k'``
    :raise InsufficientSamplesError: if a cell holds fewer than 20 features
    """
    w = np.asarray(weights, dtype=np.float64)
    n_classes, n_scales, _ = w.shape
    selection = np.zeros((n_classes, n_scales, n_scales))
    for c in range(n_classes):
        for k in range(n_scales):
            features = np.asarray(bank.get((c, k), np.empty((0, w.shape[2]))))
            if features.ndim != 2 or features.shape[0] < MIN_CELL_SAMPLES:
                n = features.shape[0] if features.ndim == 2 else 0
                err_msg = (
                    f"Cell (class {c}, scale {k}) holds {n} features, "
                    f"at least {MIN_CELL_SAMPLES} are needed"
                )
                raise InsufficientSamplesError(err_msg)
            chosen = subcenter_choice(w, features)[:, c]
            selection[c, k] = np.bincount(chosen, minlength=n_scales) / features.shape[0]
    return selection


def diagonal_fraction(selection: npt.ArrayLike) -> tuple[Tensor, Tensor]:
    """Mean diagonal and mean off-diagonal selection frequency per class"""
    p = np.asarray(selection, dtype=np.float64)
    n_scales = p.shape[1]
    diag = np.trace(p, axis1=1, axis2=2) / n_scales
    if n_scales == 1:
        return diag, np.zeros_like(diag)
    off = (p.sum(axis=(1, 2)) - diag * n_scales) / (n_scales * (n_scales - 1))
    return diag, off
