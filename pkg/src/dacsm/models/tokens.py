"""Patch tokens and positional-embedding banks"""

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from dacsm.numerics import Tensor, Var
from dacsm.numerics.interpolate import bilinear_resize


class TilingError(Exception):
    """Image sides are not multiples of the patch size"""


class PositionalError(Exception):
    """No positional bank matches the requested scale or token count"""


class GridError(Exception):
    """A positional bank does not describe a square patch grid"""


@dataclass(frozen=True)
class TokenSequence:
    """``(N + 1) x D`` tokens of one image, CLS token first"""

    tokens: Var
    scale_index: int
    source_image_shape: tuple[int, int, int]

    @property
    def n_patches(self) -> int:
        """Number of patch tokens, excluding CLS"""
        return self.tokens.shape[0] - 1


def patchify(image: npt.ArrayLike, patch_size: int) -> Tensor:
    """Cut an ``H x W x C`` image into flattened non-overlapping patches

    Patches are ordered row by row over the grid; each patch is flattened in
    ``(row, column, channel)`` order.

    :param npt.ArrayLike image: image to tile
    :param int patch_size: patch side ``P``
    :return: ``N x (P * P * C)`` matrix
    :raise TilingError: if ``H`` or ``W`` is not a multiple of ``P``
    """
    arr = np.asarray(image, dtype=np.float64)
    h, w, c = arr.shape
    if h % patch_size or w % patch_size:
        err_msg = f"Image of size {h}x{w} cannot be tiled by {patch_size}x{patch_size} patches"
        raise TilingError(err_msg)
    gh, gw = h // patch_size, w // patch_size
    return (
        arr.reshape(gh, patch_size, gw, patch_size, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(gh * gw, patch_size * patch_size * c)
    )


def grid_side(n_patches: int) -> int:
    """Side of the square grid holding ``n_patches`` tokens

    :raise GridError: if ``n_patches`` is not a positive square
    """
    side = math.isqrt(n_patches) if n_patches > 0 else 0
    if side < 1 or side * side != n_patches:
        err_msg = f"{n_patches} patch tokens do not form a square grid"
        raise GridError(err_msg)
    return side


def interpolate_pos_embedding(base: npt.ArrayLike, target_grid: int) -> Tensor:
    """Resample a positional bank to another square grid

    The CLS row is copied unchanged and the patch rows are resized bilinearly over the
    2-D grid.

    :param npt.ArrayLike base: ``(N_a + 1) x D`` bank
    :param int target_grid: side of the output grid
    :return: ``(target_grid ** 2 + 1) x D`` bank
    :raise GridError: if the base grid is not square or ``target_grid`` is not positive
    """
    bank = np.asarray(base, dtype=np.float64)
    if target_grid < 1:
        err_msg = f"Target grid side must be positive, got {target_grid}"
        raise GridError(err_msg)
    side = grid_side(bank.shape[0] - 1)
    dim = bank.shape[1]
    grid = bank[1:].reshape(side, side, dim)
    resized = bilinear_resize(grid, target_grid, target_grid).reshape(-1, dim)
    return np.concatenate([bank[:1], resized], axis=0)
