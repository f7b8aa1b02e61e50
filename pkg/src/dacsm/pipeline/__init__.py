"""Synthetic domains, pseudo-label pairing, training and evaluation"""

from .evaluate import a_distance_proxy, evaluate, expected_calibration_error
from .experiments import run_ablation, summarize_ablation
from .pairing import PairingError, assign_pseudo_labels, pair_features
from .synthetic import DomainSet, SpecError, generate_domains
from .train import NonFiniteLossError, TrainResult, run_training, train

__all__ = [
    "DomainSet",
    "NonFiniteLossError",
    "PairingError",
    "SpecError",
    "TrainResult",
    "a_distance_proxy",
    "assign_pseudo_labels",
    "evaluate",
    "expected_calibration_error",
    "generate_domains",
    "pair_features",
    "run_ablation",
    "run_training",
    "summarize_ablation",
    "train",
]
