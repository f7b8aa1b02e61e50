"""Test attention, residual blocks and style matching"""

import numpy as np
import pytest

from dacsm.models import (
    AttentionParams,
    MLPParams,
    NormalizationError,
    attend,
    attention_divergence,
    residual_block,
    soft_style_attention,
    style_swap_hard,
)
from dacsm.numerics import ContractError, DimensionError, Graph, ParameterError, softmax
from dacsm.schemas import NoiseSpec


@pytest.fixture(scope="module")
def params() -> AttentionParams:
    """Create test fixture for random two-head projections"""
    rng = np.random.default_rng(3)
    return AttentionParams(
        rng.normal(size=(4, 4)), rng.normal(size=(4, 4)), rng.normal(size=(4, 4)), 2
    )


@pytest.fixture(scope="module")
def tokens() -> tuple[np.ndarray, np.ndarray]:
    """Create test fixture for query and key/value token sets"""
    rng = np.random.default_rng(4)
    return rng.normal(size=(3, 4)), rng.normal(size=(5, 4))


def test_single_head_matches_closed_form(tokens):
    """Test attention with identity projections"""
    z_q, z_kv = tokens
    eye = np.eye(4)
    result = attend(AttentionParams(eye, eye, eye, 1), z_q, z_kv)
    expected = softmax(z_q @ z_kv.T / 2.0) @ z_kv
    np.testing.assert_allclose(result.out.value, expected)
    assert result.weights.shape == (1, 3, 5)


def test_multi_head_maps_are_row_stochastic(params, tokens):
    """Test per-head attention maps"""
    result = attend(params, *tokens)
    assert result.out.shape == (3, 4)
    assert result.weights.shape == (2, 3, 5)
    np.testing.assert_allclose(result.weights.sum(axis=-1), np.ones((2, 3)))


def test_noise_spares_queries(params, tokens):
    """Test that noise perturbs the output but never the queries"""
    clean = attend(params, *tokens)
    noisy = attend(params, *tokens, NoiseSpec(sigma=0.5), np.random.default_rng(0))
    np.testing.assert_array_equal(noisy.queries, clean.queries)
    assert not np.allclose(noisy.out.value, clean.out.value)

    again = attend(params, *tokens, NoiseSpec(sigma=0.5), np.random.default_rng(0))
    np.testing.assert_array_equal(again.out.value, noisy.out.value)


@pytest.mark.parametrize(
    "noise", [NoiseSpec(sigma=0.0), NoiseSpec(sigma=0.5, enabled=False)]
)
def test_inactive_noise_is_deterministic(params, tokens, noise):
    """Test that zero or disabled noise reproduces the clean pass"""
    clean = attend(params, *tokens)
    result = attend(params, *tokens, noise, np.random.default_rng(0))
    np.testing.assert_array_equal(result.out.value, clean.out.value)


def test_attend_errors(params, tokens):
    """Test invalid attention calls"""
    z_q, z_kv = tokens
    with pytest.raises(DimensionError):
        attend(params, z_q, np.ones((5, 3)))
    with pytest.raises(ParameterError):
        attend(params, z_q, z_kv, NoiseSpec(sigma=-0.1), np.random.default_rng(0))
    with pytest.raises(ContractError):
        attend(params, z_q, z_kv, NoiseSpec(sigma=0.1))
    with pytest.raises(ParameterError):
        AttentionParams(np.eye(4), np.eye(4), np.eye(4), 3)


def test_gradient_reaches_projections(params, tokens):
    """Test that all three projections receive gradient"""
    graph = Graph()
    leaves = AttentionParams(
        graph.leaf(params.w_q, "w_q"),
        graph.leaf(params.w_k, "w_k"),
        graph.leaf(params.w_v, "w_v"),
        params.heads,
    )
    out = attend(leaves, *tokens).out
    grads = graph.backward((out * out).sum())
    for name in ("w_q", "w_k", "w_v"):
        assert np.abs(grads[name]).sum() > 0


def test_residual_block(tokens):
    """Test that a zero MLP leaves the plain residual sum"""
    z_q, _ = tokens
    graph = Graph()
    attn = graph.constant(np.full((3, 4), 0.5))
    mlp = MLPParams(
        np.ones(4), np.zeros(4), np.ones((4, 8)), np.zeros(8), np.zeros((8, 4)), np.zeros(4)
    )
    out = residual_block(z_q, attn, mlp)
    np.testing.assert_allclose(out.value, z_q + 0.5)
    with pytest.raises(DimensionError):
        residual_block(np.ones((2, 4)), attn, mlp)


def _unit(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def test_style_swap_hard():
    """Test nearest style patch selection"""
    style = np.eye(3)
    content = _unit(np.array([[0.1, 0.9, 0.0], [0.8, 0.2, 0.1]]))
    matched, indices = style_swap_hard(content, style)
    assert indices == [1, 0]
    np.testing.assert_array_equal(matched, style[[1, 0]])

    tied = _unit(np.array([[1.0, 1.0, 0.0]]))
    assert style_swap_hard(tied, style)[1] == [0]

    with pytest.raises(NormalizationError):
        style_swap_hard(np.array([[2.0, 0.0, 0.0]]), style)


def test_soft_style_attention_approaches_hard():
    """Test the low-temperature limit of soft matching"""
    style = np.eye(3)
    content = _unit(np.array([[0.1, 0.9, 0.0], [0.8, 0.2, 0.1]]))
    hard, _ = style_swap_hard(content, style)
    np.testing.assert_allclose(soft_style_attention(content, style, 1e-2), hard, atol=1e-12)
    warm = soft_style_attention(content, style, 10.0)
    assert np.all(np.abs(warm - hard).sum(axis=1) > 0.5)
    with pytest.raises(ParameterError):
        soft_style_attention(content, style, 0.0)


def test_attention_divergence(params, tokens):
    """Test that divergence vanishes for identical query sources"""
    _, z = tokens
    np.testing.assert_allclose(attention_divergence(params, z, z), np.zeros(5), atol=1e-12)
    shifted = attention_divergence(params, z, z + 1.0)
    assert shifted.shape == (5,)
    assert np.all(shifted >= 0)
    assert shifted.sum() > 0
    with pytest.raises(DimensionError):
        attention_divergence(params, z, z[:2])


def test_noise_is_unbiased():
    """Test that noisy outputs average to the clean output over many draws"""
    rng = np.random.default_rng(0)
    params = AttentionParams(*(rng.normal(0.0, 0.35, (8, 8)) for _ in range(3)), 2)
    z_q, z_kv = 0.1 * rng.normal(size=(4, 8)), rng.normal(size=(6, 8))
    readout = rng.normal(size=(4, 8))
    clean = float((attend(params, z_q, z_kv).out.value * readout).sum())
    noise = NoiseSpec(sigma=0.05)
    moved = attend(params, z_q, z_kv, noise, rng).weights
    assert not np.allclose(moved, attend(params, z_q, z_kv).weights)
    draws = np.array(
        [
            float((attend(params, z_q, z_kv, noise, rng).out.value * readout).sum())
            for _ in range(10_000)
        ]
    )
    standard_error = draws.std() / np.sqrt(len(draws))
    assert abs(draws.mean() - clean) < 3 * standard_error
