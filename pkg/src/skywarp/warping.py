"""Dense warping between camera space and the motion-equalized space.

Builds per-pixel backward-mapping lookup tables from the radial geometry and
applies them to images.  The warped canvas is a fixed square, radially linear
in the normalized ground radius rho_tilde, sized from the horizon-circle
pixel budget:

    side = 2 * floor(upsample * R_m / sqrt(2)) + 1

The odd side puts the optical axis exactly on the center pixel.  The side
does not depend on rho_max; raising rho_max packs more sky into the same
canvas (px_per_rho = (side - 1) / (2 * rho_max)).

Also hosts the horizon-circle calibrator (threshold + least-squares circle
fit), which is how a MirrorModel is estimated from real frames.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .geometry import (
    MirrorModel,
    WarpConfig,
    mirror_from_horizon,
    unwarp_radius,
    warp_radius,
)
from .image import SkyImage
from .resample import bilinear_sample, nearest_sample

TO_WARPED = "to_warped"
TO_ORIGINAL = "to_original"

_MAGIC = b"SWMP"
_VERSION = 1


class CalibrationError(RuntimeError):
    """No usable horizon circle found in the frame."""


@dataclass(frozen=True)
class WarpMaps:
    """Backward-mapping table: for each output pixel, where to sample.

    src_x/src_y are float32 (out_height, out_width); NaN marks output pixels
    with no valid source.  src_shape is the source dimensions the table was
    built against (None after loading from disk, where it is re-derived from
    the coordinate bounds at apply time).
    """

    direction: str
    src_x: np.ndarray
    src_y: np.ndarray
    model: MirrorModel
    config: WarpConfig
    src_shape: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.direction not in (TO_WARPED, TO_ORIGINAL):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.src_x.shape != self.src_y.shape or self.src_x.ndim != 2:
            raise ValueError("src_x/src_y must be matching 2d arrays")

    @property
    def out_width(self) -> int:
        return self.src_x.shape[1]

    @property
    def out_height(self) -> int:
        return self.src_x.shape[0]

    def valid_output_mask(self) -> np.ndarray:
        return np.isfinite(self.src_x) & np.isfinite(self.src_y)


def warped_canvas_side(model: MirrorModel, config: WarpConfig) -> int:
    return 2 * int(math.floor(config.upsample * model.horizon_radius_px)) + 1


def warped_px_per_rho(model: MirrorModel, config: WarpConfig) -> float:
    side = warped_canvas_side(model, config)
    return (side - 1) / (2.0 * config.rho_max)


def build_warp_maps(
    model: MirrorModel, config: WarpConfig, in_dims: tuple[int, int]
) -> tuple[WarpMaps, WarpMaps]:
    """Build both lookup tables for source images of size in_dims = (w, h).

    Geometry domain violations never raise here; they become NaN sentinels.
    """
    w, h = int(in_dims[0]), int(in_dims[1])
    if w <= 0 or h <= 0:
        raise ValueError(f"in_dims must be positive, got {in_dims}")
    cx, cy = model.center

    side = warped_canvas_side(model, config)
    ppr = warped_px_per_rho(model, config)
    half = (side - 1) / 2.0

    # to_warped: output pixel -> camera-image coordinate
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    dx = xx - half
    dy = yy - half
    r_out = np.hypot(dx, dy)
    rho = r_out / ppr
    with np.errstate(invalid="ignore"):
        s = unwarp_radius(np.where(rho <= config.rho_max, rho, 0.0), model)
    scale = np.zeros_like(r_out)
    nz = r_out > 0
    scale[nz] = s[nz] / r_out[nz]
    src_x = cx + dx * scale
    src_y = cy + dy * scale
    bad = (rho > config.rho_max) | ~_inside_source(src_x, src_y, w, h)
    src_x[bad] = np.nan
    src_y[bad] = np.nan
    to_warped = WarpMaps(
        direction=TO_WARPED,
        src_x=src_x.astype(np.float32),
        src_y=src_y.astype(np.float32),
        model=model,
        config=config,
        src_shape=(h, w),
    )

    # to_original: camera pixel -> warped-canvas coordinate
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xx - cx
    dy = yy - cy
    s = np.hypot(dx, dy)
    ok = s < model.max_pixel_radius
    rho = np.zeros_like(s)
    rho[ok] = warp_radius(s[ok], model)
    ok &= rho <= config.rho_max
    scale = np.zeros_like(s)
    nz = ok & (s > 0)
    scale[nz] = rho[nz] * ppr / s[nz]
    src_x = half + dx * scale
    src_y = half + dy * scale
    bad = ~ok | ~_inside_source(src_x, src_y, side, side)
    src_x[bad] = np.nan
    src_y[bad] = np.nan
    to_original = WarpMaps(
        direction=TO_ORIGINAL,
        src_x=src_x.astype(np.float32),
        src_y=src_y.astype(np.float32),
        model=model,
        config=config,
        src_shape=(side, side),
    )
    return to_warped, to_original


def _inside_source(x: np.ndarray, y: np.ndarray, w: int, h: int) -> np.ndarray:
    return (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)


def _magnification_mask(maps: WarpMaps) -> np.ndarray:
    """Output pixels where the map magnifies the source by more than 2x.

    Magnification along an output axis is 1 / (source step per output px);
    NaN gradients (sentinel borders) never qualify.
    """
    gx_i, gx_j = np.gradient(maps.src_x.astype(np.float64))
    gy_i, gy_j = np.gradient(maps.src_y.astype(np.float64))
    step_i = np.hypot(gx_i, gy_i)
    step_j = np.hypot(gx_j, gy_j)
    with np.errstate(invalid="ignore"):
        hit = (step_i < 0.5) | (step_j < 0.5)
    return hit & maps.valid_output_mask()


def _masked_blur(pixels: np.ndarray, mask: np.ndarray | None, sigma: float) -> np.ndarray:
    if mask is None or mask.all():
        return np.stack(
            [ndimage.gaussian_filter(pixels[..., c], sigma) for c in range(3)], axis=-1
        )
    m = mask.astype(np.float64)
    wsum = ndimage.gaussian_filter(m, sigma)
    out = np.empty_like(pixels)
    for c in range(3):
        num = ndimage.gaussian_filter(pixels[..., c] * m, sigma)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[..., c] = np.where(wsum > 1e-12, num / wsum, 0.0)
    return out


def _apply(img: SkyImage, maps: WarpMaps) -> SkyImage:
    if maps.src_shape is not None and img.shape != maps.src_shape:
        raise ValueError(
            f"image shape {img.shape} does not match maps source shape {maps.src_shape}"
        )
    cfg = maps.config
    pixels = img.pixels
    mask = img.valid_mask
    if cfg.pre_blur:
        hit = _magnification_mask(maps)
        if hit.any():
            blurred = _masked_blur(pixels, mask, sigma=0.5)
            sampler = bilinear_sample if cfg.interpolation == "bilinear" else nearest_sample
            out_sharp, valid = sampler(pixels, mask, maps.src_x, maps.src_y, cfg.fill_value)
            out_soft, _ = sampler(blurred, mask, maps.src_x, maps.src_y, cfg.fill_value)
            out = np.where((hit & valid)[..., None], out_soft, out_sharp)
            return SkyImage(pixels=out, timestamp=img.timestamp, valid_mask=valid)
    sampler = bilinear_sample if cfg.interpolation == "bilinear" else nearest_sample
    out, valid = sampler(pixels, mask, maps.src_x, maps.src_y, cfg.fill_value)
    return SkyImage(pixels=out, timestamp=img.timestamp, valid_mask=valid)


def warp_image(img: SkyImage, maps: WarpMaps) -> SkyImage:
    """Resample a camera frame into the motion-equalized canvas."""
    if maps.direction != TO_WARPED:
        raise ValueError("warp_image needs a to_warped map")
    return _apply(img, maps)


def unwarp_image(warped: SkyImage, maps: WarpMaps) -> SkyImage:
    """Resample a warped canvas back to camera space."""
    if maps.direction != TO_ORIGINAL:
        raise ValueError("unwarp_image needs a to_original map")
    return _apply(warped, maps)


def save_warp_maps(maps: WarpMaps, path: str) -> None:
    """Write the bit-exact binary table format.

    Layout: magic "SWMP", u16 version, u8 direction (0 = to_warped,
    1 = to_original), u32 out_width, u32 out_height, interleaved float32
    (src_x, src_y) pairs row-major, then f64 R_m, f64 cx, f64 cy,
    f64 rho_max, u32 upsample.  All little-endian.
    """
    dir_code = 0 if maps.direction == TO_WARPED else 1
    header = _MAGIC + struct.pack(
        "<HBII", _VERSION, dir_code, maps.out_width, maps.out_height
    )
    pairs = np.empty((maps.out_height, maps.out_width, 2), dtype="<f4")
    pairs[..., 0] = maps.src_x
    pairs[..., 1] = maps.src_y
    trailer = struct.pack(
        "<ddddI",
        maps.model.radius_px,
        maps.model.center[0],
        maps.model.center[1],
        maps.config.rho_max,
        maps.config.upsample,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pairs.tobytes())
        fh.write(trailer)


def load_warp_maps(path: str) -> WarpMaps:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a warp-maps file")
    version, dir_code, out_w, out_h = struct.unpack_from("<HBII", blob, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<HBII")
    count = out_w * out_h * 2
    pairs = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    pairs = pairs.reshape(out_h, out_w, 2)
    offset += count * 4
    r_m, cx, cy, rho_max, upsample = struct.unpack_from("<ddddI", blob, offset)
    model = MirrorModel(radius_px=r_m, center=(cx, cy))
    config = WarpConfig(rho_max=rho_max, upsample=int(upsample))
    direction = TO_WARPED if dir_code == 0 else TO_ORIGINAL
    return WarpMaps(
        direction=direction,
        src_x=np.ascontiguousarray(pairs[..., 0]),
        src_y=np.ascontiguousarray(pairs[..., 1]),
        model=model,
        config=config,
        src_shape=None,
    )


def _otsu_threshold(gray: np.ndarray) -> float:
    """Otsu's method on a 256-bin histogram of a [0,1] grayscale image."""
    hist, edges = np.histogram(gray, bins=256, range=(0.0, 1.0))
    hist = hist.astype(np.float64)
    total = hist.sum()
    if total == 0:
        return 0.5
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight1 = np.cumsum(hist)
    weight2 = total - weight1
    mean1 = np.cumsum(hist * centers)
    cum_total = mean1[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        mu1 = mean1 / weight1
        mu2 = (cum_total - mean1) / weight2
        between = weight1 * weight2 * (mu1 - mu2) ** 2
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def _fit_circle(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Algebraic least-squares circle fit (solves for center and radius)."""
    a = np.column_stack([2.0 * xs, 2.0 * ys, np.ones_like(xs)])
    b = xs * xs + ys * ys
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx, cy, c = sol
    r2 = c + cx * cx + cy * cy
    if r2 <= 0:
        raise CalibrationError("degenerate circle fit")
    return float(cx), float(cy), float(math.sqrt(r2))


def estimate_horizon_circle(img: SkyImage) -> tuple[tuple[float, float], float]:
    """Find the bright mirror disk boundary: ((cx, cy), radius_px).

    Thresholds intensity (Otsu), takes the largest connected bright blob,
    extracts its boundary pixels, and fits a circle by least squares.  Blob
    pixels on the image border are not boundary (a disk cropped by the frame
    is fitted from its visible arc only).
    """
    gray = img.luma()
    thr = _otsu_threshold(gray)
    bright = gray > thr
    if not bright.any():
        raise CalibrationError("no bright region to calibrate from")

    labels, nlab = ndimage.label(bright)
    if nlab == 0:
        raise CalibrationError("no bright region to calibrate from")
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, nlab + 1))
    blob = labels == (1 + int(np.argmax(sizes)))

    # border_value=1 keeps frame-edge pixels out of the boundary set
    interior = ndimage.binary_erosion(blob, border_value=1)
    boundary = blob & ~interior
    ys, xs = np.nonzero(boundary)
    if xs.size < 8:
        raise CalibrationError("too few boundary pixels for a circle fit")

    cx, cy, radius = _fit_circle(xs.astype(np.float64), ys.astype(np.float64))
    h, w = gray.shape
    if radius < 0.1 * min(w, h):
        raise CalibrationError(
            f"fitted circle radius {radius:.1f} px below 10% of frame size"
        )
    return (cx, cy), radius


def calibrate_mirror(img: SkyImage) -> MirrorModel:
    """Full calibration: horizon circle to mirror model."""
    center, radius = estimate_horizon_circle(img)
    return mirror_from_horizon(radius, center)
