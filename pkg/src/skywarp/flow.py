"""Variational dense optical flow and constant-velocity extrapolation.

Classic Horn-Schunck with a coarse-to-fine pyramid: at each level the second
frame is warped toward the first by the upsampled coarser flow, derivatives
are taken between the first frame and the warped second frame, and Jacobi
iterations relax the linearized brightness-constancy + smoothness energy
around the warp point.

Flow convention: estimate_flow(prev, next) returns per-pixel displacement in
pixels per frame interval such that next(x) is approximately
prev(x - flow(x)).  Internally frames are converted to luma on a 0..255
scale so the default smoothness weight (alpha = 15, the usual 8-bit setting)
is meaningful; displacements are in pixels regardless.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .image import SkyImage
from .resample import bilinear_sample, bilinear_sample_scalar

_MAGIC = b"SWFL"
_VERSION = 1

# 4-neighbor local average used by the Jacobi relaxation
_AVG_KERNEL = np.array(
    [[0.0, 0.25, 0.0], [0.25, 0.0, 0.25], [0.0, 0.25, 0.0]], dtype=np.float64
)

# within a pyramid level, re-warp the second frame after this many iterations
_REWARP_EVERY = 50


@dataclass(frozen=True)
class FlowParams:
    """Horn-Schunck hyperparameters."""

    alpha: float = 15.0
    iterations: int = 200
    pyramid_levels: int = 3

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.iterations < 1 or self.pyramid_levels < 1:
            raise ValueError("iterations and pyramid_levels must be positive")


@dataclass
class FlowField:
    """Dense displacement field, pixels per frame interval."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be matching 2d arrays")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValueError("flow values must be finite")

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def _neighbor_average(field: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Valid-weighted 4-neighbor average (Neumann at the frame border)."""
    num = ndimage.correlate(field * weight, _AVG_KERNEL, mode="nearest")
    den = ndimage.correlate(weight, _AVG_KERNEL, mode="nearest")
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 1e-12, num / den, field)


def _derivatives(im1: np.ndarray, im2: np.ndarray):
    """Horn-Schunck 2x2x2 cube derivatives, same shape as the inputs."""
    p1 = np.pad(im1, ((0, 1), (0, 1)), mode="edge")
    p2 = np.pad(im2, ((0, 1), (0, 1)), mode="edge")

    def gx(p):
        return 0.5 * ((p[:-1, 1:] - p[:-1, :-1]) + (p[1:, 1:] - p[1:, :-1]))

    def gy(p):
        return 0.5 * ((p[1:, :-1] - p[:-1, :-1]) + (p[1:, 1:] - p[:-1, 1:]))

    def avg(p):
        return 0.25 * (p[:-1, :-1] + p[:-1, 1:] + p[1:, :-1] + p[1:, 1:])

    fx = 0.5 * (gx(p1) + gx(p2))
    fy = 0.5 * (gy(p1) + gy(p2))
    ft = avg(p2) - avg(p1)
    return fx, fy, ft


def flow_energy(
    fx: np.ndarray,
    fy: np.ndarray,
    ft: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    u0: np.ndarray,
    v0: np.ndarray,
    alpha: float,
    valid: np.ndarray,
) -> float:
    """Linearized Horn-Schunck energy: data term around the warp point
    (u0, v0) plus alpha^2 times the squared forward-difference smoothness."""
    resid = fx * (u - u0) + fy * (v - v0) + ft
    data = np.where(valid, resid * resid, 0.0).sum()
    smooth = 0.0
    for f in (u, v):
        dx = np.diff(f, axis=1)
        dy = np.diff(f, axis=0)
        smooth += (dx * dx).sum() + (dy * dy).sum()
    return float(data + alpha * alpha * smooth)


def horn_schunck_iterations(
    im1: np.ndarray,
    im2_warped: np.ndarray,
    u0: np.ndarray,
    v0: np.ndarray,
    valid: np.ndarray,
    params: FlowParams,
    record_every: int = 0,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Jacobi relaxation of the flow at one pyramid level.

    im2_warped must already be resampled by (u0, v0); the data term is
    linearized around that point.  Invalid pixels contribute no data term
    and are excluded from neighbor averages.  Returns the relaxed total
    flow and (optionally) the energy recorded every ``record_every``
    iterations.
    """
    fx, fy, ft = _derivatives(im1, im2_warped)
    fx = np.where(valid, fx, 0.0)
    fy = np.where(valid, fy, 0.0)
    ft = np.where(valid, ft, 0.0)

    alpha2 = params.alpha * params.alpha
    denom = alpha2 + fx * fx + fy * fy
    weight = valid.astype(np.float64)

    u = u0.copy()
    v = v0.copy()
    energies: list[float] = []
    for it in range(params.iterations):
        u_avg = _neighbor_average(u, weight)
        v_avg = _neighbor_average(v, weight)
        shared = (fx * (u_avg - u0) + fy * (v_avg - v0) + ft) / denom
        u = u_avg - fx * shared
        v = v_avg - fy * shared
        if record_every and (it + 1) % record_every == 0:
            energies.append(flow_energy(fx, fy, ft, u, v, u0, v0, params.alpha, valid))
    return u, v, energies


def _downsample(im: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(im, sigma=1.0, mode="nearest")[::2, ::2]


def _downsample_mask(mask: np.ndarray) -> np.ndarray:
    soft = ndimage.gaussian_filter(mask.astype(np.float64), sigma=1.0, mode="nearest")
    return soft[::2, ::2] > 0.75


def _upsample_flow(f: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    ys = (np.arange(h) + 0.5) / 2.0 - 0.5
    xs = (np.arange(w) + 0.5) / 2.0 - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return 2.0 * bilinear_sample_scalar(f, gx, gy)


def estimate_flow(prev: SkyImage, next: SkyImage, params: FlowParams = FlowParams()) -> FlowField:
    """Coarse-to-fine Horn-Schunck flow from ``prev`` to ``next``."""
    if prev.shape != next.shape:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {next.shape}")

    im1 = prev.luma() * 255.0
    im2 = next.luma() * 255.0
    valid = prev.mask_or_full() & next.mask_or_full()

    # cap levels so the coarsest image keeps enough support for the kernels
    levels = params.pyramid_levels
    min_dim = min(prev.shape)
    while levels > 1 and min_dim // (2 ** (levels - 1)) < 8:
        levels -= 1

    pyr1 = [im1]
    pyr2 = [im2]
    pyrm = [valid]
    for _ in range(levels - 1):
        pyr1.append(_downsample(pyr1[-1]))
        pyr2.append(_downsample(pyr2[-1]))
        pyrm.append(_downsample_mask(pyrm[-1]))

    u = np.zeros_like(pyr1[-1])
    v = np.zeros_like(pyr1[-1])
    for lvl in range(levels - 1, -1, -1):
        a, b, m = pyr1[lvl], pyr2[lvl], pyrm[lvl]
        if lvl != levels - 1:
            u = _upsample_flow(u, a.shape)
            v = _upsample_flow(v, a.shape)
        h, w = a.shape
        gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
        # re-linearize periodically so residuals beyond the Taylor range of
        # a single warp still get corrected at this level
        chunk = FlowParams(params.alpha, min(params.iterations, _REWARP_EVERY), params.pyramid_levels)
        done = 0
        while done < params.iterations:
            b_warped = bilinear_sample_scalar(b, gx + u, gy + v)
            u, v, _ = horn_schunck_iterations(a, b_warped, u, v, m, chunk)
            done += chunk.iterations

    u = np.where(valid, u, 0.0)
    v = np.where(valid, v, 0.0)
    return FlowField(u=u, v=v)


def advect(img: SkyImage, flow: FlowField, steps: float) -> SkyImage:
    """Constant-velocity extrapolation: out(x) = img(x - steps * flow(x))."""
    if img.shape != (flow.height, flow.width):
        raise ValueError(f"image {img.shape} does not match flow {(flow.height, flow.width)}")
    if steps <= 0:
        raise ValueError("steps must be positive")
    h, w = img.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    src_x = gx - steps * flow.u
    src_y = gy - steps * flow.v
    out, valid = bilinear_sample(img.pixels, img.valid_mask, src_x, src_y)
    return SkyImage(pixels=out, timestamp=img.timestamp, valid_mask=valid)


def forecast_flow_baseline(
    seq: Sequence[SkyImage], horizon: int, params: FlowParams = FlowParams()
) -> list[SkyImage]:
    """Constant-velocity forecast from the last two frames of ``seq``.

    One flow field is estimated between the two most recent frames and
    scaled by the step count; frame k is advect(I_t, flow, steps=k).
    """
    if len(seq) < 2:
        raise ValueError("need at least the two most recent frames")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    prev, cur = seq[-2], seq[-1]
    field = estimate_flow(prev, cur, params)
    return [advect(cur, field, steps=float(k)) for k in range(1, horizon + 1)]


def save_flow(flow: FlowField, path: str) -> None:
    """Binary flow format: magic "SWFL", u16 version, u32 width, u32 height,
    float32 u-plane then v-plane, row-major little-endian."""
    header = _MAGIC + struct.pack("<HII", _VERSION, flow.width, flow.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flow.u.astype("<f4").tobytes())
        fh.write(flow.v.astype("<f4").tobytes())


def load_flow(path: str) -> FlowField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a flow file")
    version, w, h = struct.unpack_from("<HII", blob, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<HII")
    n = w * h
    u = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(h, w)
    v = np.frombuffer(blob, dtype="<f4", count=n, offset=offset + 4 * n).reshape(h, w)
    return FlowField(u=u.astype(np.float64), v=v.astype(np.float64))


def rotate_flow_90(flow: FlowField) -> FlowField:
    """Expected flow after rotating both input frames with np.rot90:
    positions rotate and the displacement vector (u, v) maps to (v, -u)."""
    return FlowField(u=np.rot90(flow.v), v=np.rot90(-flow.u))
