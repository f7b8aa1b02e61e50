"""Shared-weight domain-adaptive transformer and sub-center classifier"""

from .attention import (
    AttentionOutput,
    AttentionParams,
    MLPParams,
    NormalizationError,
    attend,
    attention_divergence,
    residual_block,
    soft_style_attention,
    style_swap_hard,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .csm import rescale, scale_selection_matrix, source_logits, target_logits
from .dat import (
    BoundBackbone,
    DacsmModel,
    FeatureQuad,
    ForwardStats,
    QuadOutput,
    classify,
    forward_quad,
    query_divergence,
    tokenize,
)
from .tokens import (
    GridError,
    PositionalError,
    TilingError,
    TokenSequence,
    interpolate_pos_embedding,
)

__all__ = [
    "AttentionOutput",
    "AttentionParams",
    "BoundBackbone",
    "CheckpointError",
    "DacsmModel",
    "FeatureQuad",
    "ForwardStats",
    "GridError",
    "MLPParams",
    "NormalizationError",
    "PositionalError",
    "QuadOutput",
    "TilingError",
    "TokenSequence",
    "attend",
    "attention_divergence",
    "classify",
    "forward_quad",
    "interpolate_pos_embedding",
    "load_checkpoint",
    "query_divergence",
    "rescale",
    "residual_block",
    "save_checkpoint",
    "scale_selection_matrix",
    "soft_style_attention",
    "source_logits",
    "style_swap_hard",
    "target_logits",
    "tokenize",
]
