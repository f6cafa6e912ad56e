"""Closed-form geometry of a catadioptric all-sky imager.

The imager is an orthographic camera looking straight down at a spherical
mirror of radius ``R_m`` (expressed in image pixels), which reflects a planar
cloud layer at height ``h`` above the ground.  A pixel at radial distance
``s`` from the optical axis sees a ground point at radial distance ``rho``;
dividing by the cloud height gives the height-invariant normalized ground
radius

    rho_tilde(s) = 2 s / (2 sqrt(R_m^2 - s^2) - R_m),

which is the coordinate the warp engine resamples images into.  Uniform
horizontal cloud motion produces a uniform shift in ``rho_tilde`` space, so
resampling equalizes the apparent motion between zenith and horizon.

All functions are pure, operate in double precision, and accept scalars or
numpy arrays (broadcasting elementwise).  Out-of-domain inputs raise
``ValueError``; the dense warp builder handles masking itself and never calls
these with invalid values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# The radial mapping diverges where its denominator vanishes, at
# s = sqrt(3)/2 * R_m.  Pixels at or beyond this radius have no finite
# ground image.
DOMAIN_EDGE_FRACTION = math.sqrt(3.0) / 2.0

# For an orthographic camera over a planar ground, the horizon falls on the
# image circle of radius R_m / sqrt(2); calibration measures that circle.
HORIZON_RADIUS_FRACTION = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class MirrorModel:
    """Calibrated mirror: radius in image pixels and optical-axis center."""

    radius_px: float
    center: tuple[float, float]

    def __post_init__(self):
        if not self.radius_px > 0:
            raise ValueError(f"mirror radius must be positive, got {self.radius_px}")

    @property
    def max_pixel_radius(self) -> float:
        """Largest pixel radius with a finite ground mapping (exclusive)."""
        return DOMAIN_EDGE_FRACTION * self.radius_px

    @property
    def horizon_radius_px(self) -> float:
        """Pixel radius of the horizon circle."""
        return HORIZON_RADIUS_FRACTION * self.radius_px


@dataclass(frozen=True)
class WarpConfig:
    """Parameters of the motion-equalizing resampling.

    ``rho_max`` is the largest normalized ground radius kept in the warped
    canvas; the implied half field of view is ``arctan(rho_max)`` and must be
    below 90 degrees.  ``upsample`` scales the warped canvas so the strongly
    magnified outer annulus keeps its detail.  ``pre_blur`` enables a small
    anti-aliasing blur (sigma 0.5 px) applied where the resampling locally
    magnifies the source by more than 2x.
    """

    rho_max: float = 3.0
    upsample: int = 3
    fill_value: tuple[float, float, float] = (0.0, 0.0, 0.0)
    interpolation: str = "bilinear"
    pre_blur: bool = True

    def __post_init__(self):
        if not self.rho_max > 0:
            raise ValueError(f"rho_max must be positive, got {self.rho_max}")
        if int(self.upsample) < 1:
            raise ValueError(f"upsample must be >= 1, got {self.upsample}")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if len(self.fill_value) != 3:
            raise ValueError("fill_value must be an RGB triple")


@dataclass(frozen=True)
class GroundPoint:
    """Polar ground-plane location of whatever a pixel sees, plus the
    cloud height used for the projection (same length unit as ``rho``)."""

    rho: float
    theta: float
    height: float


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _scalar_or_array(out: np.ndarray, like) -> float | np.ndarray:
    if np.isscalar(like) or getattr(like, "ndim", 1) == 0:
        return float(out)
    return out


def warp_radius(s, model: MirrorModel):
    """Normalized ground radius seen by a pixel at radius ``s``.

    Strictly increasing on [0, sqrt(3)/2 * R_m); zero exactly at s = 0.
    Raises ValueError for negative s or s at/beyond the domain edge.
    """
    s_arr = _as_array(s)
    if np.any(s_arr < 0):
        raise ValueError("pixel radius must be nonnegative")
    r = model.radius_px
    if np.any(s_arr >= model.max_pixel_radius):
        raise ValueError(
            f"pixel radius {np.max(s_arr):g} outside the valid mirror domain "
            f"(must be < {model.max_pixel_radius:g})"
        )
    denom = 2.0 * np.sqrt(r * r - s_arr * s_arr) - r
    return _scalar_or_array(2.0 * s_arr / denom, s)


def unwarp_radius(rho_tilde, model: MirrorModel):
    """Pixel radius imaging normalized ground radius ``rho_tilde``.

    Exact functional inverse of :func:`warp_radius`; maps [0, inf) into
    [0, sqrt(3)/2 * R_m).
    """
    rt = _as_array(rho_tilde)
    if np.any(rt < 0):
        raise ValueError("normalized ground radius must be nonnegative")
    r = model.radius_px
    out = r * rt * (np.sqrt(4.0 + 3.0 * rt * rt) - 1.0) / (2.0 * (1.0 + rt * rt))
    return _scalar_or_array(out, rho_tilde)


def unwarp_radius_gradient(rho_tilde, model: MirrorModel):
    """d(pixel radius)/d(rho_tilde): the local radial compression factor.

    Equals R_m/2 on axis and falls roughly 8x by rho_tilde = 3, which is
    exactly the horizon compression the warp undoes.
    """
    rt = _as_array(rho_tilde)
    if np.any(rt < 0):
        raise ValueError("normalized ground radius must be nonnegative")
    r = model.radius_px
    root = np.sqrt(4.0 + 3.0 * rt * rt)
    one_rt2 = 1.0 + rt * rt
    # derivative of rt*(root-1)/(2*one_rt2)
    num = (root - 1.0) + rt * (3.0 * rt / root)
    out = r * (num * one_rt2 - rt * (root - 1.0) * 2.0 * rt) / (2.0 * one_rt2 * one_rt2)
    return _scalar_or_array(out, rho_tilde)


def mirror_cloud_distance(s, height, model: MirrorModel):
    """Distance from the cloud point seen at pixel radius ``s`` to its
    reflection point on the mirror, in the units of ``height``.

    Uses the tall-cloud approximation (height much larger than the mirror),
    under which the distance is height / (2 sqrt(R_m^2 - s^2)/R_m - 1).
    """
    h_arr = _as_array(height)
    if np.any(h_arr <= 0):
        raise ValueError("cloud height must be positive")
    s_arr = _as_array(s)
    if np.any(s_arr < 0):
        raise ValueError("pixel radius must be nonnegative")
    r = model.radius_px
    if np.any(s_arr >= model.max_pixel_radius):
        raise ValueError("pixel radius outside the valid mirror domain")
    denom = 2.0 * np.sqrt(r * r - s_arr * s_arr) / r - 1.0
    out = h_arr / denom
    if np.isscalar(s) and np.isscalar(height):
        return float(out)
    return out


def pixel_to_ground(u: float, v: float, height: float, model: MirrorModel) -> GroundPoint:
    """Project an image pixel onto the cloud layer at ``height``.

    Returns polar ground coordinates about the imager.  The polar angle is
    the pixel's own angle about the image center (the mirror is rotationally
    symmetric); theta is 0 by convention for the exact on-axis pixel and is
    normalized to [-pi, pi).
    """
    cx, cy = model.center
    dx = float(u) - cx
    dy = float(v) - cy
    s = math.hypot(dx, dy)
    if s == 0.0:
        return GroundPoint(rho=0.0, theta=0.0, height=float(height))
    theta = math.atan2(dy, dx)
    if theta == math.pi:
        theta = -math.pi
    rho = float(height) * warp_radius(s, model)
    return GroundPoint(rho=rho, theta=theta, height=float(height))


def fov_half_angle(rho_max: float) -> float:
    """Half field of view, in degrees, implied by a maximum normalized
    ground radius: arctan(rho_max)."""
    if rho_max < 0:
        raise ValueError("rho_max must be nonnegative")
    return math.degrees(math.atan(rho_max))


def mirror_from_horizon(horizon_radius_px: float, center: tuple[float, float]) -> MirrorModel:
    """Build a mirror model from the measured horizon-circle radius.

    The horizon images at R_m / sqrt(2), so R_m = sqrt(2) * horizon radius.
    """
    if not horizon_radius_px > 0:
        raise ValueError(f"horizon radius must be positive, got {horizon_radius_px}")
    return MirrorModel(radius_px=math.sqrt(2.0) * horizon_radius_px, center=(float(center[0]), float(center[1])))
