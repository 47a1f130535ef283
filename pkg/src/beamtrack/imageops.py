"""Small numpy image helpers shared by the radar and vision front ends."""

from __future__ import annotations

import numpy as np

__all__ = ["bilinear_resize"]


def _axis_coords(out_size: int, in_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source indices and interpolation weights for one axis (half-pixel centres)."""
    src = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_resize(image: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of a 2-D array to (out_h, out_w).

    Uses half-pixel centre alignment; resizing to the input shape is an exact
    copy. Values stay inside the input's [min, max] range.
    """
    h, w = image.shape
    out_h, out_w = out_hw
    if (h, w) == (out_h, out_w):
        return image.copy()
    ylo, yhi, fy = _axis_coords(out_h, h)
    xlo, xhi, fx = _axis_coords(out_w, w)
    fy = fy[:, None]
    fx = fx[None, :]
    top = image[ylo][:, xlo] * (1 - fx) + image[ylo][:, xhi] * fx
    bot = image[yhi][:, xlo] * (1 - fx) + image[yhi][:, xhi] * fx
    return top * (1 - fy) + bot * fy
