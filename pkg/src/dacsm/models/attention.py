"""Multi-head attention with key/value noise and style-matching operators"""

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from dacsm.models.tokens import TokenSequence
from dacsm.numerics import (
    ContractError,
    DimensionError,
    Graph,
    ParameterError,
    Tensor,
    Var,
)
from dacsm.numerics.graph import lift, owning_graph
from dacsm.numerics.ops import concat, gelu, layer_norm, log_softmax, softmax, softmax_rows
from dacsm.schemas import NoiseSpec

NORMALIZATION_TOLERANCE = 1e-9

TokensLike = TokenSequence | Var | npt.ArrayLike


class NormalizationError(Exception):
    """Patch rows were expected to have unit L2 norm"""


@dataclass(frozen=True)
class AttentionParams:
    """Query, key and value projections shared by self- and cross-attention"""

    w_q: Var | Any
    w_k: Var | Any
    w_v: Var | Any
    heads: int

    def __post_init__(self) -> None:
        """Check that the heads evenly split the embedding"""
        dim = np.shape(_value(self.w_q))[1]
        if self.heads < 1 or dim % self.heads:
            err_msg = f"{self.heads} heads cannot split embedding dimension {dim}"
            raise ParameterError(err_msg)

    @property
    def dim(self) -> int:
        """Embedding dimension ``D``"""
        return int(np.shape(_value(self.w_q))[1])

    @property
    def head_dim(self) -> int:
        """Width of each head"""
        return self.dim // self.heads


@dataclass(frozen=True)
class MLPParams:
    """Pre-normalized two-layer GELU feed-forward block"""

    norm_gain: Var | Any
    norm_bias: Var | Any
    w1: Var | Any
    b1: Var | Any
    w2: Var | Any
    b2: Var | Any

    def __call__(self, h: Var) -> Var:
        """Apply ``W2 gelu(W1 LN(h) + b1) + b2`` row-wise"""
        x = layer_norm(h, self.norm_gain, self.norm_bias)
        return gelu(x @ self.w1 + self.b1) @ self.w2 + self.b2


@dataclass(frozen=True)
class AttentionOutput:
    """Aggregated values plus the per-head attention maps"""

    out: Var
    weights: Tensor
    scores: Tensor
    queries: Tensor


def _value(x: Any) -> Any:  # noqa: ANN401
    return x.value if isinstance(x, Var) else x


def _tokens(z: TokensLike, graph: Graph) -> Var:
    if isinstance(z, TokenSequence):
        z = z.tokens
    return lift(z, graph)


def attend(
    params: AttentionParams,
    z_q: TokensLike,
    z_kv: TokensLike,
    noise: NoiseSpec | None = None,
    rng: np.random.Generator | None = None,
) -> AttentionOutput:
    """Multi-head scaled dot-product attention of ``z_q`` over ``z_kv``

    Noise, when active, is added to the projected keys and values only. The queries
    are never perturbed. No residual is applied here.

    :param AttentionParams params: shared projections
    :param TokensLike z_q: query-side tokens, ``N_q x D``
    :param TokensLike z_kv: key/value-side tokens, ``N_kv x D``
    :param NoiseSpec | None noise: Gaussian perturbation; ``None`` means deterministic
    :param np.random.Generator | None rng: generator the noise is drawn from
    :return: ``N_q x D`` aggregation and ``heads x N_q x N_kv`` attention maps
    :raise DimensionError: if the token widths disagree with the projections
    :raise ParameterError: if the noise scale is negative
    """
    graph = owning_graph(
        getattr(z_q, "tokens", z_q), getattr(z_kv, "tokens", z_kv), params.w_q
    )
    q_in, kv_in = _tokens(z_q, graph), _tokens(z_kv, graph)
    if q_in.ndim != 2 or kv_in.ndim != 2 or q_in.shape[1] != kv_in.shape[1]:
        err_msg = f"Query tokens {q_in.shape} and key/value tokens {kv_in.shape} disagree"
        raise DimensionError(err_msg)
    if noise is not None and noise.sigma < 0:
        err_msg = f"Noise sigma must be nonnegative, got {noise.sigma}"
        raise ParameterError(err_msg)

    q = q_in @ lift(params.w_q, graph)
    k = kv_in @ lift(params.w_k, graph)
    v = kv_in @ lift(params.w_v, graph)
    if noise is not None and noise.active:
        if rng is None:
            err_msg = "Active noise needs a random generator"
            raise ContractError(err_msg)
        k = k + rng.normal(0.0, noise.sigma, size=k.shape)
        v = v + rng.normal(0.0, noise.sigma, size=v.shape)

    hd = params.head_dim
    scale = 1.0 / math.sqrt(hd)
    heads, maps, scores = [], [], []
    for h in range(params.heads):
        cols = (slice(None), slice(h * hd, (h + 1) * hd))
        logits = (q[cols] @ k[cols].T) * scale
        a = softmax_rows(logits)
        heads.append(a @ v[cols])
        maps.append(a.value)
        scores.append(logits.value)
    out = heads[0] if len(heads) == 1 else concat(heads, axis=1)
    return AttentionOutput(out, np.stack(maps), np.stack(scores), q.value)


def residual_block(z_q: TokensLike, attn_out: Var, mlp: MLPParams) -> Var:
    """Add the attention output to the query-side tokens, then the MLP residual

    :param TokensLike z_q: tokens the residual is taken from
    :param Var attn_out: attention aggregation with the shape of ``z_q``
    :param MLPParams mlp: feed-forward block with its own pre-norm
    :return: ``h + MLP(h)`` where ``h = z_q + attn_out``
    :raise DimensionError: if the shapes differ
    """
    base = _tokens(z_q, owning_graph(getattr(z_q, "tokens", z_q), attn_out))
    if base.shape != attn_out.shape:
        err_msg = f"Residual shape {base.shape} does not match attention output {attn_out.shape}"
        raise DimensionError(err_msg)
    h = base + attn_out
    return h + mlp(h)


def _check_unit_rows(name: str, rows: npt.ArrayLike) -> Tensor:
    arr = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    norms = np.linalg.norm(arr, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > NORMALIZATION_TOLERANCE)
    if bad.size:
        err_msg = f"{name} rows {bad.tolist()} are not L2-normalized (norms {norms[bad].tolist()})"
        raise NormalizationError(err_msg)
    return arr


def _check_patch_sets(content: npt.ArrayLike, style: npt.ArrayLike) -> tuple[Tensor, Tensor]:
    c = _check_unit_rows("content", content)
    s = _check_unit_rows("style", style)
    if c.shape[1] != s.shape[1]:
        err_msg = f"Content width {c.shape[1]} differs from style width {s.shape[1]}"
        raise DimensionError(err_msg)
    return c, s


def style_swap_hard(
    content_patches: npt.ArrayLike, style_patches: npt.ArrayLike
) -> tuple[Tensor, list[int]]:
    """Replace each content patch with its most similar style patch

    :param npt.ArrayLike content_patches: ``n_c x d`` unit rows
    :param npt.ArrayLike style_patches: ``n_s x d`` unit rows
    :return: matched style rows and the chosen indices (lowest index on ties)
    :raise NormalizationError: if any row is not unit length
    """
    c, s = _check_patch_sets(content_patches, style_patches)
    indices = np.argmax(c @ s.T, axis=1)
    return s[indices], indices.tolist()


def soft_style_attention(
    content: npt.ArrayLike, style: npt.ArrayLike, temperature: float
) -> Tensor:
    """Temperature-scaled soft version of :func:`style_swap_hard`

    :param npt.ArrayLike content: ``n_c x d`` unit rows
    :param npt.ArrayLike style: ``n_s x d`` unit rows
    :param float temperature: positive softmax temperature
    :return: convex combinations of style rows, one per content row
    :raise ParameterError: if ``temperature`` is not positive
    """
    c, s = _check_patch_sets(content, style)
    return softmax(c @ s.T, temperature) @ s


def attention_divergence(
    params: AttentionParams, z: TokensLike, z_alt_query: TokensLike
) -> Tensor:
    """Per-token KL between attention rows under two query sources

    Keys and values come from ``z`` in both evaluations; the first uses ``z`` as the
    queries, the second ``z_alt_query``. Values are averaged over heads.

    :return: nonnegative divergence per query token
    """
    self_scores = attend(params, z, z).scores
    alt_scores = attend(params, z_alt_query, z).scores
    if self_scores.shape != alt_scores.shape:
        err_msg = f"Query sources differ in token count: {self_scores.shape} vs {alt_scores.shape}"
        raise DimensionError(err_msg)
    log_p = log_softmax(self_scores)
    log_q = log_softmax(alt_scores)
    kl = np.sum(np.exp(log_p) * (log_p - log_q), axis=-1)
    return np.maximum(kl, 0.0).mean(axis=0)
