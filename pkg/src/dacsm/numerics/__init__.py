"""Dense float64 kernel with reverse-mode differentiation"""

from .graph import (
    ContractError,
    DimensionError,
    DivergenceUndefinedError,
    Graph,
    InsufficientSamplesError,
    NumericsError,
    ParameterError,
    Tensor,
    Var,
    as_tensor,
    backward,
)
from .linalg import channel_stats, kl_divergence, min_singular_value, row_entropy
from .ops import softmax, softmax_rows

__all__ = [
    "ContractError",
    "DimensionError",
    "DivergenceUndefinedError",
    "Graph",
    "InsufficientSamplesError",
    "NumericsError",
    "ParameterError",
    "Tensor",
    "Var",
    "as_tensor",
    "backward",
    "channel_stats",
    "kl_divergence",
    "min_singular_value",
    "row_entropy",
    "softmax",
    "softmax_rows",
]
