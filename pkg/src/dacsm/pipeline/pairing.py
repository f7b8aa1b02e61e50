"""Nearest-source pseudo-labels for target samples"""

import logging

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import cdist

from dacsm.models import DacsmModel
from dacsm.pipeline.synthetic import DomainSet
from dacsm.schemas import DomainPair

_logger = logging.getLogger(__name__)


class PairingError(Exception):
    """Pairing was requested with an empty domain"""


def pair_features(
    features_s: npt.ArrayLike, labels_s: npt.ArrayLike, features_t: npt.ArrayLike
) -> list[DomainPair]:
    """Pair every target feature with its nearest source feature

    :param npt.ArrayLike features_s: ``n_s x D`` source features
    :param npt.ArrayLike labels_s: source labels
    :param npt.ArrayLike features_t: ``n_t x D`` target features
    :return: one pair per target sample; ties go to the lowest source index
    :raise PairingError: if either side is empty
    """
    fs = np.atleast_2d(np.asarray(features_s, dtype=np.float64))
    ft = np.atleast_2d(np.asarray(features_t, dtype=np.float64))
    labels = np.asarray(labels_s)
    if fs.size == 0 or ft.size == 0:
        err_msg = f"Cannot pair {fs.shape[0]} source with {ft.shape[0]} target features"
        raise PairingError(err_msg)
    distances = cdist(ft, fs, metric="euclidean")
    nearest = np.argmin(distances, axis=1)
    return [
        DomainPair(
            source_index=int(j),
            target_index=i,
            pseudo_label=int(labels[j]),
            distance=float(distances[i, j]),
        )
        for i, j in enumerate(nearest)
    ]


def assign_pseudo_labels(
    model: DacsmModel, source: DomainSet, target: DomainSet
) -> list[DomainPair]:
    """Pseudo-label the target domain from the model's self-attention features

    :raise PairingError: if either domain is empty
    """
    if len(source) == 0 or len(target) == 0:
        err_msg = f"Cannot pair {len(source)} source with {len(target)} target samples"
        raise PairingError(err_msg)
    pairs = pair_features(model.embed(source.images), source.labels, model.embed(target.images))
    _logger.debug(
        "Paired %s targets, mean distance %.4f",
        len(pairs),
        float(np.mean([p.distance for p in pairs])),
    )
    return pairs


def pseudo_label_accuracy(pairs: list[DomainPair], target: DomainSet) -> float:
    """Fraction of pseudo-labels that match the hidden target labels"""
    if not pairs:
        return 0.0
    hits = sum(int(target.labels[p.target_index] == p.pseudo_label) for p in pairs)
    return hits / len(pairs)
