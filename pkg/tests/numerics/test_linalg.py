"""Test statistics, divergences, resampling and gradient checks"""

import numpy as np
import pytest

from dacsm.numerics import (
    DimensionError,
    DivergenceUndefinedError,
    InsufficientSamplesError,
    ParameterError,
    channel_stats,
    kl_divergence,
    min_singular_value,
    row_entropy,
)
from dacsm.numerics.gradcheck import (
    check_directional_gradient,
    numerical_gradient,
    relative_error,
)
from dacsm.numerics.interpolate import bilinear_resize


def test_kl_divergence():
    """Test KL on valid and invalid distributions"""
    p = np.array([0.2, 0.3, 0.5])
    assert kl_divergence(p, p) == 0.0
    q = np.array([0.5, 0.3, 0.2])
    expected = float(np.sum(p * np.log(p / q)))
    assert kl_divergence(p, q) == pytest.approx(expected)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2.0))

    with pytest.raises(DivergenceUndefinedError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
    with pytest.raises(ParameterError):
        kl_divergence([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(DimensionError):
        kl_divergence([1.0], [0.5, 0.5])


def test_min_singular_value():
    """Test the spectral helper"""
    assert min_singular_value(np.diag([3.0, 1.0])) == pytest.approx(1.0)
    assert min_singular_value([[1.0, 1.0], [1.0, 1.0]]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DimensionError):
        min_singular_value(np.empty((0, 3)))


def test_channel_stats():
    """Test channel means and population standard deviations"""
    mean, std = channel_stats(np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_allclose(mean.value, [2.0, 3.0])
    np.testing.assert_allclose(std.value, [1.0, 1.0])
    with pytest.raises(InsufficientSamplesError):
        channel_stats(np.ones((1, 2)))
    with pytest.raises(DimensionError):
        channel_stats(np.ones(3))


def test_row_entropy():
    """Test entropy of uniform and one-hot rows"""
    h = row_entropy([[0.25] * 4, [1.0, 0.0, 0.0, 0.0]])
    np.testing.assert_allclose(h, [np.log(4.0), 0.0])


def test_bilinear_resize():
    """Test identity, constant preservation and output shapes"""
    grid = np.random.default_rng(0).normal(size=(4, 4, 2))
    np.testing.assert_allclose(bilinear_resize(grid, 4, 4), grid)
    constant = np.full((3, 3), 0.7)
    np.testing.assert_allclose(bilinear_resize(constant, 5, 7), np.full((5, 7), 0.7))
    assert bilinear_resize(grid, 6, 2).shape == (6, 2, 2)
    with pytest.raises(ParameterError):
        bilinear_resize(grid, 0, 2)


def test_bilinear_resize_linear_ramp():
    """Test that upsampling a ramp stays monotone within its range"""
    ramp = np.tile(np.arange(4.0), (4, 1))
    out = bilinear_resize(ramp, 4, 8)
    assert np.all(np.diff(out[0]) >= 0)
    assert out.min() == 0.0
    assert out.max() == 3.0


def test_gradient_helpers():
    """Test the finite-difference utilities"""
    x = np.array([1.0, -2.0, 0.5])
    numeric = numerical_gradient(lambda v: float(np.sum(v**2)), x)
    np.testing.assert_allclose(numeric, 2 * x, rtol=1e-8)
    assert relative_error(2 * x, numeric) < 1e-8
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0

    params = {"w": np.array([0.3, -0.2])}
    err = check_directional_gradient(
        lambda p: float(np.sum(np.sin(p["w"]))),
        params,
        {"w": np.cos(params["w"])},
        np.random.default_rng(0),
    )
    assert err < 1e-8
