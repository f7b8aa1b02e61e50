"""Test patch tokenization and positional banks"""

import numpy as np
import pytest

from dacsm.models import GridError, TilingError, interpolate_pos_embedding
from dacsm.models.tokens import grid_side, patchify


def test_patchify_order():
    """Test row-major patch order and (row, col, channel) flattening"""
    image = np.arange(16.0).reshape(4, 4, 1)
    patches = patchify(image, 2)
    assert patches.shape == (4, 4)
    np.testing.assert_array_equal(patches[0], [0, 1, 4, 5])
    np.testing.assert_array_equal(patches[1], [2, 3, 6, 7])
    np.testing.assert_array_equal(patches[2], [8, 9, 12, 13])

    rgb = np.arange(12.0).reshape(2, 2, 3)
    np.testing.assert_array_equal(patchify(rgb, 2)[0], np.arange(12.0))


def test_patchify_rejects_partial_tiles():
    """Test that sides must be multiples of the patch size"""
    with pytest.raises(TilingError):
        patchify(np.zeros((5, 4, 3)), 2)


def test_grid_side():
    """Test square token counts"""
    assert grid_side(16) == 4
    assert grid_side(1) == 1
    for bad in (0, 15):
        with pytest.raises(GridError):
            grid_side(bad)


def test_interpolate_pos_embedding():
    """Test that the CLS row is kept and the grid is resized"""
    rng = np.random.default_rng(0)
    base = rng.normal(size=(5, 6))
    same = interpolate_pos_embedding(base, 2)
    np.testing.assert_allclose(same, base)

    larger = interpolate_pos_embedding(base, 3)
    assert larger.shape == (10, 6)
    np.testing.assert_array_equal(larger[0], base[0])

    constant = np.vstack([rng.normal(size=(1, 6)), np.full((4, 6), 0.25)])
    np.testing.assert_allclose(interpolate_pos_embedding(constant, 4)[1:], 0.25)


def test_interpolate_pos_embedding_errors():
    """Test malformed banks and grid sizes"""
    with pytest.raises(GridError):
        interpolate_pos_embedding(np.zeros((4, 3)), 2)
    with pytest.raises(GridError):
        interpolate_pos_embedding(np.zeros((5, 3)), 0)
