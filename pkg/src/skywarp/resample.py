"""Masked backward resampling shared by the warp engine and flow advection.

Samples an RGB image at real-valued source coordinates.  A destination pixel
is valid only when every source pixel it interpolates from is in bounds and
valid; everything else gets the fill color and a False mask entry.  NaN
coordinates are the out-of-domain sentinel and always produce fill.
"""

from __future__ import annotations

import numpy as np


def bilinear_sample(
    pixels: np.ndarray,
    mask: np.ndarray | None,
    src_x: np.ndarray,
    src_y: np.ndarray,
    fill: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``pixels`` (h, w, 3) at (src_x, src_y); returns (out, out_mask).

    out has src_x's shape plus a channel axis.  Validity requires all four
    neighbors in bounds and (when a mask is given) True in the mask.
    """
    h, w = pixels.shape[:2]
    x = np.asarray(src_x, dtype=np.float64)
    y = np.asarray(src_y, dtype=np.float64)

    finite = np.isfinite(x) & np.isfinite(y)
    xs = np.where(finite, x, 0.0)
    ys = np.where(finite, y, 0.0)

    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    # exact integer coordinates on the far edge still count as in bounds
    # because their x1/y1 weight is zero; pull them back one texel
    at_right = (x0 == w - 1) & (fx == 0.0) & (w > 1)
    at_bottom = (y0 == h - 1) & (fy == 0.0) & (h > 1)
    x0 = np.where(at_right, x0 - 1, x0)
    y0 = np.where(at_bottom, y0 - 1, y0)
    fx = np.where(at_right, 1.0, fx)
    fy = np.where(at_bottom, 1.0, fy)

    inside = finite & (x0 >= 0) & (y0 >= 0) & (x0 <= w - 2) & (y0 <= h - 2)
    x0c = np.clip(x0, 0, w - 2)
    y0c = np.clip(y0, 0, h - 2)
    x1 = x0c + 1
    y1 = y0c + 1

    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy

    out = (
        pixels[y0c, x0c] * w00[..., None]
        + pixels[y0c, x1] * w10[..., None]
        + pixels[y1, x0c] * w01[..., None]
        + pixels[y1, x1] * w11[..., None]
    )

    valid = inside
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        # a zero-weight neighbor may be invalid without tainting the sample
        ok00 = m[y0c, x0c] | (w00 == 0.0)
        ok10 = m[y0c, x1] | (w10 == 0.0)
        ok01 = m[y1, x0c] | (w01 == 0.0)
        ok11 = m[y1, x1] | (w11 == 0.0)
        valid = valid & ok00 & ok10 & ok01 & ok11

    fill_arr = np.asarray(fill, dtype=np.float64)
    out = np.where(valid[..., None], out, fill_arr)
    return out, valid


def nearest_sample(
    pixels: np.ndarray,
    mask: np.ndarray | None,
    src_x: np.ndarray,
    src_y: np.ndarray,
    fill: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor variant of :func:`bilinear_sample`."""
    h, w = pixels.shape[:2]
    x = np.asarray(src_x, dtype=np.float64)
    y = np.asarray(src_y, dtype=np.float64)

    finite = np.isfinite(x) & np.isfinite(y)
    xi = np.rint(np.where(finite, x, 0.0)).astype(np.int64)
    yi = np.rint(np.where(finite, y, 0.0)).astype(np.int64)

    inside = finite & (xi >= 0) & (yi >= 0) & (xi <= w - 1) & (yi <= h - 1)
    xic = np.clip(xi, 0, w - 1)
    yic = np.clip(yi, 0, h - 1)

    out = pixels[yic, xic]
    valid = inside
    if mask is not None:
        valid = valid & np.asarray(mask, dtype=bool)[yic, xic]

    fill_arr = np.asarray(fill, dtype=np.float64)
    out = np.where(valid[..., None], out, fill_arr)
    return out, valid


def bilinear_sample_scalar(
    field: np.ndarray,
    src_x: np.ndarray,
    src_y: np.ndarray,
) -> np.ndarray:
    """Bilinear sampling of a single-channel field with edge clamping.

    Out-of-bounds coordinates clamp to the border value (Neumann); used for
    pyramid flow upsampling and image warping inside the flow estimator
    where a hard validity cut would be counterproductive.
    """
    h, w = field.shape
    x = np.clip(np.asarray(src_x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(src_y, dtype=np.float64), 0.0, h - 1.0)

    x0 = np.clip(np.floor(x).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(y).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0

    out = (
        field[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + field[y0, x1] * fx * (1.0 - fy)
        + field[y1, x0] * (1.0 - fx) * fy
        + field[y1, x1] * fx * fy
    )
    return out
