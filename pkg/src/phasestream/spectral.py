"""Real-input 2D spectra over the non-redundant half plane.

The half plane keeps all k rows but only columns 0..floor(k/2); rows past k/2
are reported as negative frequencies so spectral distances are physical.
"""

from functools import lru_cache

import numpy as np

from .errors import ShapeError


@lru_cache(maxsize=32)
def halfplane_coords(kh, kw):
    """Integer frequency coordinates, shape (kh, kw//2+1, 2): (row freq, col freq)."""
    rows = np.arange(kh)
    rows = np.where(rows <= kh // 2, rows, rows - kh)
    cols = np.arange(kw // 2 + 1)
    coords = np.empty((kh, cols.size, 2), dtype=np.int64)
    coords[..., 0] = rows[:, None]
    coords[..., 1] = cols[None, :]
    coords.setflags(write=False)
    return coords


def rfft2(x):
    """Magnitudes of the half-plane DFT of a 2D real array.

    Returns (magnitudes, coords); magnitudes has shape (k, k//2+1) and a
    constant input c yields the single value k*k*|c| at bin (0, 0).
    """
    x = np.asarray(x)
    if x.ndim != 2 or min(x.shape) < 2:
        raise ShapeError(f"rfft2 expects a 2D array with extents >= 2, got {x.shape}")
    spectrum = np.fft.rfft2(x.astype(np.float64, copy=False))
    return np.abs(spectrum), halfplane_coords(x.shape[0], x.shape[1])


def rfft2_complex(x):
    """Half-plane complex spectrum (same layout as rfft2 magnitudes)."""
    return np.fft.rfft2(np.asarray(x, dtype=np.float64))


def energy_concentration(x, top=1):
    """Fraction of squared-magnitude spectral energy in the `top` largest bins."""
    mags, _ = rfft2(x)
    e = np.sort((mags**2).ravel())[::-1]
    total = e.sum()
    if total == 0.0:
        return 0.0
    return float(e[:top].sum() / total)
