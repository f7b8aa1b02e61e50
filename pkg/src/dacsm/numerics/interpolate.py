"""Bilinear resampling of 2-D grids"""

import numpy as np
import numpy.typing as npt

from dacsm.numerics.graph import ParameterError, Tensor


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centers, clamped at the borders
    coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    coords = np.clip(coords, 0.0, n_in - 1)
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, coords - lo


def bilinear_resize(grid: npt.ArrayLike, out_h: int, out_w: int) -> Tensor:
    """Resample an ``H x W`` or ``H x W x C`` grid to ``out_h x out_w``

    Sample positions use half-pixel centers with edge clamping, so resizing to the same
    size returns the input unchanged and constant grids stay constant.

    :param npt.ArrayLike grid: values to resample
    :param int out_h: output height
    :param int out_w: output width
    :return: resampled grid with the channel layout of the input
    :raise ParameterError: if an output size is not positive
    """
    if out_h < 1 or out_w < 1:
        err_msg = f"Output size must be positive, got {out_h}x{out_w}"
        raise ParameterError(err_msg)
    arr = np.asarray(grid, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[..., None]
    y0, y1, wy = _axis_weights(arr.shape[0], out_h)
    x0, x1, wx = _axis_weights(arr.shape[1], out_w)
    wx = wx[None, :, None]
    top = arr[y0][:, x0] + (arr[y0][:, x1] - arr[y0][:, x0]) * wx
    bottom = arr[y1][:, x0] + (arr[y1][:, x1] - arr[y1][:, x0]) * wx
    out = top + (bottom - top) * wy[:, None, None]
    return out[..., 0] if squeeze else out
