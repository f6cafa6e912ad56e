"""Synthetic cloud scenes with exactly known ground motion.

A procedural value-noise cloud layer at height h drifts with constant
velocity over the mirror; frames are rendered by projecting every pixel to
the ground plane and sampling the moving texture there.  Because the texture
coordinates are shifted analytically, the per-frame ground displacement is
exact, which makes these sequences the oracle for the motion-equalization
claim: after warping, the apparent shift is v * T0 / h in normalized ground
units at every pixel.

Octave wavelengths scale with the cloud height (base wavelength = h), so a
scene with (2h, 2v) renders the identical image sequence; the lattice tiling
period is 64 wavelengths, beyond the 50h repetition bound.  Each octave is
attenuated toward its mean where a pixel's ground footprint exceeds a
quarter wavelength; otherwise the sub-pixel octaves alias near the horizon
and corrupt flow measurements.  The attenuation field is static, so the
translation ground truth is untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .flow import FlowParams, estimate_flow
from .geometry import MirrorModel, WarpConfig, unwarp_radius, unwarp_radius_gradient, warp_radius
from .image import SkyImage
from .warping import build_warp_maps, warp_image, warped_px_per_rho

SKY_BLUE = (0.35, 0.55, 0.85)
CLOUD_WHITE = (1.0, 1.0, 1.0)

_BASE_LATTICE = 64  # lattice cells of the coarsest octave; period = 64 wavelengths


@dataclass(frozen=True)
class SynthScene:
    """Deterministic drifting-cloud world."""

    seed: int
    height_m: float
    velocity_mps: tuple[float, float]
    model: MirrorModel
    frame_period_s: float = 30.0
    octaves: int = 4
    persistence: float = 0.5

    def __post_init__(self):
        if not self.height_m > 0:
            raise ValueError("cloud height must be positive")
        if self.octaves < 1:
            raise ValueError("need at least one octave")


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _octave_lattices(scene: SynthScene) -> list[np.ndarray]:
    rng = np.random.default_rng(scene.seed)
    lattices = []
    for o in range(scene.octaves):
        size = _BASE_LATTICE * (2**o)
        lattices.append(rng.random((size, size)))
    return lattices


def value_noise_2d(x: np.ndarray, y: np.ndarray, lattice: np.ndarray, wavelength: float) -> np.ndarray:
    """Tiling value noise: lattice values interpolated with a quintic fade.

    Coordinates are in the same units as ``wavelength``; the pattern tiles
    with period lattice_size * wavelength.
    """
    size = lattice.shape[0]
    gx = np.asarray(x, dtype=np.float64) / wavelength
    gy = np.asarray(y, dtype=np.float64) / wavelength
    ix = np.floor(gx)
    iy = np.floor(gy)
    tx = _fade(gx - ix)
    ty = _fade(gy - iy)
    ix0 = ix.astype(np.int64) % size
    iy0 = iy.astype(np.int64) % size
    ix1 = (ix0 + 1) % size
    iy1 = (iy0 + 1) % size
    v00 = lattice[iy0, ix0]
    v10 = lattice[iy0, ix1]
    v01 = lattice[iy1, ix0]
    v11 = lattice[iy1, ix1]
    top = v00 + tx * (v10 - v00)
    bot = v01 + tx * (v11 - v01)
    return top + ty * (bot - top)


def _cloud_alpha(
    scene: SynthScene,
    ground_x: np.ndarray,
    ground_y: np.ndarray,
    footprint_m: Optional[np.ndarray],
    lattices: list[np.ndarray],
) -> np.ndarray:
    total = np.zeros_like(ground_x)
    norm = 0.0
    for o, lattice in enumerate(lattices):
        amp = scene.persistence**o
        wavelength = scene.height_m / (2**o)
        n = value_noise_2d(ground_x, ground_y, lattice, wavelength)
        if footprint_m is not None:
            w = np.clip(wavelength / (2.0 * footprint_m) - 1.0, 0.0, 1.0)
            n = w * n + (1.0 - w) * lattice.mean()
        total += amp * n
        norm += amp
    return total / norm


def _pixel_geometry(scene: SynthScene, dims: tuple[int, int]):
    """Static per-pixel projection quantities: mask, ground coords at t=0,
    and ground footprint (meters per pixel)."""
    w, h = int(dims[0]), int(dims[1])
    cx, cy = scene.model.center
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xx - cx
    dy = yy - cy
    s = np.hypot(dx, dy)
    mask = s < scene.model.max_pixel_radius

    rho_t = np.zeros_like(s)
    rho_t[mask] = warp_radius(s[mask], scene.model)

    r_m = scene.model.radius_px
    ratio = np.full_like(s, 2.0 / r_m)  # lim s->0 of rho_tilde/s
    nz = mask & (s > 0)
    ratio[nz] = rho_t[nz] / s[nz]
    gx = scene.height_m * ratio * dx
    gy = scene.height_m * ratio * dy

    # radial footprint from the inverse-map derivative, tangential from arc length
    radial = np.full_like(s, np.inf)
    radial[mask] = scene.height_m / unwarp_radius_gradient(rho_t[mask], scene.model)
    tangential = scene.height_m * ratio
    footprint = np.maximum(radial, tangential)
    return mask, gx, gy, footprint


def render_frame(scene: SynthScene, frame_index: int, dims: tuple[int, int]) -> SkyImage:
    """Render one frame; bit-identical for identical arguments."""
    mask, gx, gy, footprint = _pixel_geometry(scene, dims)
    lattices = _octave_lattices(scene)

    shift = frame_index * scene.frame_period_s
    sx = gx - scene.velocity_mps[0] * shift
    sy = gy - scene.velocity_mps[1] * shift

    alpha = np.where(mask, _cloud_alpha(scene, sx, sy, footprint, lattices), 0.0)
    blue = np.asarray(SKY_BLUE)
    white = np.asarray(CLOUD_WHITE)
    pixels = alpha[..., None] * white + (1.0 - alpha[..., None]) * blue
    pixels = np.where(mask[..., None], pixels, 0.0)
    ts = frame_index * scene.frame_period_s
    return SkyImage(pixels=pixels, timestamp=ts, valid_mask=mask)


def render_sequence(scene: SynthScene, n_frames: int, dims: tuple[int, int]) -> list[SkyImage]:
    return [render_frame(scene, k, dims) for k in range(n_frames)]


@dataclass
class UniformityReport:
    """Per-annulus mean flow magnitude plus its dispersion."""

    space: str
    annulus_radii: np.ndarray
    mean_magnitudes: np.ndarray
    coefficient_of_variation: float = field(init=False)

    def __post_init__(self):
        mags = np.asarray(self.mean_magnitudes, dtype=np.float64)
        mean = float(mags.mean())
        self.coefficient_of_variation = float(mags.std() / mean) if mean > 0 else 0.0


def measure_flow_uniformity(
    frames: Sequence[SkyImage],
    space: str,
    model: MirrorModel,
    warp_config: WarpConfig = WarpConfig(),
    n_annuli: int = 8,
    rho_range: tuple[float, float] = (0.2, 2.8),
    flow_params: FlowParams = FlowParams(),
    motion_axis: Optional[float] = None,
    wedge_half_angle_deg: float = 22.5,
) -> UniformityReport:
    """Mean flow magnitude in equal-width radial annuli.

    space = "raw" measures flow on the frames as rendered; "warped" first
    resamples them through the motion-equalizing warp.  Annuli are equally
    spaced in the measured image's own radial coordinate between the radii
    of rho_range's endpoints, so raw and warped reports cover the same sky.

    motion_axis (radians) restricts each annulus to a double wedge around
    that azimuth.  Along the motion axis the apparent displacement of a
    translating scene is purely radial, so this isolates the radial
    compression that the derivative of the inverse radial map quantifies;
    over a full annulus the azimuthal component (scaled by s/rho, only
    about 3x compressed at the rim) dominates the magnitude and hides it.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    if space not in ("raw", "warped"):
        raise ValueError(f"unknown space {space!r}")

    a, b = frames[0], frames[1]
    if space == "warped":
        h, w = a.shape
        to_warped, _ = build_warp_maps(model, warp_config, (w, h))
        a = warp_image(a, to_warped)
        b = warp_image(b, to_warped)
        side = a.shape[0]
        center = ((side - 1) / 2.0, (side - 1) / 2.0)
        ppr = warped_px_per_rho(model, warp_config)
        r_lo = rho_range[0] * ppr
        r_hi = rho_range[1] * ppr
    else:
        center = model.center
        r_lo = unwarp_radius(rho_range[0], model)
        r_hi = unwarp_radius(rho_range[1], model)

    field_ = estimate_flow(a, b, flow_params)
    mag = field_.magnitude()
    valid = a.mask_or_full() & b.mask_or_full()

    h, w = a.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    radius = np.hypot(xx - center[0], yy - center[1])

    if motion_axis is not None:
        azimuth = np.arctan2(yy - center[1], xx - center[0])
        off = np.mod(azimuth - motion_axis, np.pi)
        off = np.minimum(off, np.pi - off)
        valid = valid & (off <= math.radians(wedge_half_angle_deg))

    edges = np.linspace(r_lo, r_hi, n_annuli + 1)
    radii = 0.5 * (edges[:-1] + edges[1:])
    means = np.empty(n_annuli)
    for i in range(n_annuli):
        sel = valid & (radius >= edges[i]) & (radius < edges[i + 1])
        if not sel.any():
            raise ValueError(f"annulus {i} contains no valid pixels")
        means[i] = float(mag[sel].mean())
    return UniformityReport(space=space, annulus_radii=radii, mean_magnitudes=means)


def parse_scene_file(path: str) -> dict:
    """Plain key=value scene spec: seed, height_m, vx, vy, frames.

    Blank lines and #-comments are ignored; unknown keys are an error so
    typos do not silently fall back to defaults.
    """
    known = {"seed": int, "height_m": float, "vx": float, "vy": float, "frames": int}
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = known[key](value.strip())
    missing = sorted(set(known) - set(out))
    if missing:
        raise ValueError(f"{path}: missing keys: {', '.join(missing)}")
    return out


def default_scene_model(dims: tuple[int, int], horizon_px: Optional[float] = None) -> MirrorModel:
    """Mirror model for synthetic rendering: horizon circle at 47% of the
    short axis unless given, centered on the pixel grid."""
    w, h = dims
    if horizon_px is None:
        horizon_px = 0.47 * min(w, h)
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    return MirrorModel(radius_px=math.sqrt(2.0) * horizon_px, center=center)
