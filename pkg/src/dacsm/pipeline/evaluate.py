"""Target accuracy, calibration and domain-discrepancy diagnostics"""

import logging
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import confusion_matrix

from dacsm.models import DacsmModel
from dacsm.numerics import (
    DimensionError,
    InsufficientSamplesError,
    ParameterError,
    Tensor,
    softmax,
)
from dacsm.numerics.linalg import row_entropy
from dacsm.pipeline.synthetic import DomainSet
from dacsm.schemas import EvalReport

_logger = logging.getLogger(__name__)

ECE_BINS = 10
MIN_DOMAIN_SAMPLES = 20


def expected_calibration_error(
    probs: npt.ArrayLike, labels: npt.ArrayLike, n_bins: int = ECE_BINS
) -> float:
    """Confidence-weighted gap between confidence and accuracy over equal-width bins"""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels)
    confidence = p.max(axis=1)
    correct = (p.argmax(axis=1) == y).astype(np.float64)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    bins = np.clip(np.digitize(confidence, edges[1:-1], right=True), 0, n_bins - 1)
    ece = 0.0
    for b in range(n_bins):
        in_bin = bins == b
        if in_bin.any():
            gap = abs(correct[in_bin].mean() - confidence[in_bin].mean())
            ece += in_bin.mean() * gap
    return float(ece)


def report_from_logits(
    logits: npt.ArrayLike, labels: npt.ArrayLike, n_classes: int
) -> EvalReport:
    """Per-class and average accuracy (percent) of argmax predictions

    Classes absent from ``labels`` get accuracy 0 and are left out of the average.

    :raise InsufficientSamplesError: if there are no samples
    """
    scores = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    if y.size == 0:
        err_msg = "Cannot evaluate an empty set"
        raise InsufficientSamplesError(err_msg)
    predictions = scores.argmax(axis=1)
    matrix = confusion_matrix(y, predictions, labels=list(range(n_classes)))
    support = matrix.sum(axis=1)
    present = support > 0
    per_class = np.zeros(n_classes)
    per_class[present] = matrix.diagonal()[present] / support[present] * 100
    return EvalReport(
        per_class=per_class.tolist(),
        average=float(per_class[present].mean()),
        ece=expected_calibration_error(softmax(scores), y),
        n_samples=int(y.size),
    )


def evaluate(model: DacsmModel, target: DomainSet) -> EvalReport:
    """Accuracy of ``model`` on a labeled set

    Each image gets exactly one forward pass at its original resolution.
    """
    if len(target) == 0:
        err_msg = "Cannot evaluate an empty set"
        raise InsufficientSamplesError(err_msg)
    return report_from_logits(
        model.logits(target.images), target.labels, model.architecture.n_classes
    )


def a_distance_proxy(
    features_s: npt.ArrayLike, features_t: npt.ArrayLike, seed: int = 0
) -> float:
    """Proxy A-distance ``2 (1 - 2 err)`` of a linear domain discriminator

    Half of each domain trains a logistic regression, the other half measures its
    error. The result is clamped to ``[0, 2]``.

    :raise InsufficientSamplesError: if a domain has fewer than 20 samples
    """
    fs = np.atleast_2d(np.asarray(features_s, dtype=np.float64))
    ft = np.atleast_2d(np.asarray(features_t, dtype=np.float64))
    if min(fs.shape[0], ft.shape[0]) < MIN_DOMAIN_SAMPLES:
        err_msg = (
            f"A-distance needs at least {MIN_DOMAIN_SAMPLES} samples per domain, "
            f"got {fs.shape[0]} and {ft.shape[0]}"
        )
        raise InsufficientSamplesError(err_msg)
    rng = np.random.default_rng(seed)
    idx_s, idx_t = rng.permutation(fs.shape[0]), rng.permutation(ft.shape[0])
    half_s, half_t = fs.shape[0] // 2, ft.shape[0] // 2
    x_train = np.concatenate([fs[idx_s[:half_s]], ft[idx_t[:half_t]]])
    y_train = np.concatenate([np.zeros(half_s), np.ones(half_t)])
    x_test = np.concatenate([fs[idx_s[half_s:]], ft[idx_t[half_t:]]])
    y_test = np.concatenate([np.zeros(fs.shape[0] - half_s), np.ones(ft.shape[0] - half_t)])

    discriminator = LogisticRegression(max_iter=2000)
    discriminator.fit(x_train, y_train)
    error = 1.0 - discriminator.score(x_test, y_test)
    return float(np.clip(2.0 * (1.0 - 2.0 * error), 0.0, 2.0))


def mean_attention_entropy(maps: Sequence[Tensor]) -> float:
    """Mean row entropy over a collection of attention maps"""
    if not maps:
        return 0.0
    return float(np.mean([row_entropy(m).mean() for m in maps]))


def linear_cka(x: npt.ArrayLike, y: npt.ArrayLike) -> float:
    """Linear centered kernel alignment between two representations of the same samples

    :param npt.ArrayLike x: ``n x d1`` features
    :param npt.ArrayLike y: ``n x d2`` features of the same ``n`` samples
    :return: similarity in ``[0, 1]``, invariant to rotation and isotropic scaling
    :raise DimensionError: if the sample counts differ
    :raise InsufficientSamplesError: with fewer than two samples
    :raise ParameterError: if either representation is constant across samples
    """
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if a.shape[0] != b.shape[0]:
        err_msg = f"CKA needs the same samples on both sides, got {a.shape[0]} and {b.shape[0]}"
        raise DimensionError(err_msg)
    if a.shape[0] < 2:
        err_msg = f"CKA needs at least 2 samples, got {a.shape[0]}"
        raise InsufficientSamplesError(err_msg)
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    scale = np.linalg.norm(a.T @ a) * np.linalg.norm(b.T @ b)
    if scale == 0.0:
        err_msg = "CKA is undefined for a representation that is constant across samples"
        raise ParameterError(err_msg)
    return float(np.linalg.norm(b.T @ a) ** 2 / scale)


def layer_cka(layers: Sequence[Tensor]) -> float | None:
    """Mean linear CKA between each earlier layer and the last one

    ``None`` for a single-layer model.
    """
    if len(layers) < 2:
        return None
    return float(np.mean([linear_cka(layer, layers[-1]) for layer in layers[:-1]]))
