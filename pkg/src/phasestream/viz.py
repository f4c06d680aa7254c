"""Rendering: signed maps with a diverging palette, filter-bank grids.

Signed values map symmetrically about zero (red positive, blue negative,
mid-gray zero) after per-image max-abs normalization.
"""

import numpy as np
from PIL import Image

from .errors import ShapeError

_COLD = np.array([0.0, 0.0, 255.0])
_MID = np.array([128.0, 128.0, 128.0])
_HOT = np.array([255.0, 0.0, 0.0])


def signed_to_rgb(arr, max_abs=None):
    """(H,W) signed values -> (H,W,3) uint8 via blue/gray/red interpolation."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2D map, got {arr.shape}")
    scale = float(np.max(np.abs(arr))) if max_abs is None else float(max_abs)
    if scale == 0.0:
        t = np.zeros_like(arr)
    else:
        t = np.clip(arr / scale, -1.0, 1.0)
    pos = np.clip(t, 0.0, 1.0)[..., None]
    neg = np.clip(-t, 0.0, 1.0)[..., None]
    rgb = _MID + pos * (_HOT - _MID) + neg * (_COLD - _MID)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def gray_to_u8(arr):
    """(H,W) values in [0,1] -> uint8 grayscale."""
    return np.clip(np.rint(np.asarray(arr) * 255.0), 0, 255).astype(np.uint8)


def tile_rgb(images, rows, cols, pad=1, background=255):
    """Row-major grid of equally sized (h,w,3) tiles."""
    if len(images) != rows * cols:
        raise ShapeError(f"{len(images)} tiles cannot fill a {rows}x{cols} grid")
    h, w = images[0].shape[:2]
    out = np.full(
        (rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, 3),
        background,
        dtype=np.uint8,
    )
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        y = pad + r * (h + pad)
        x = pad + c * (w + pad)
        out[y : y + h, x : x + w] = img
    return out


def filter_grid(weights, rows, cols, pad=1):
    """Tile (F, k, k) filter slices row-major, each normalized independently."""
    weights = np.asarray(weights)
    tiles = [signed_to_rgb(weights[i]) for i in range(weights.shape[0])]
    return tile_rgb(tiles, rows, cols, pad=pad)


def bank_grid(bank, part="imag", pad=1):
    """Filter-bank grid in (frequency x orientation) row-major order."""
    rows = len(bank.spec.frequencies)
    cols = len(bank.spec.orientations)
    arrs = [getattr(k, part) for k in bank.kernels]
    return tile_rgb([signed_to_rgb(a) for a in arrs], rows, cols, pad=pad)


def save_image(path, arr):
    """Write a uint8 (H,W) or (H,W,3) array; format follows the extension."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ShapeError("save_image expects uint8 data")
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path)
