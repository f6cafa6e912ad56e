"""Motion-equalizing spatial warping and flow-based forecasting for
hemispherical sky images captured by mirror-based all-sky imagers."""

from .dataset import (
    ForecastWindow,
    FrameRef,
    ImageSequence,
    load_sequence,
    make_windows,
    recursion_inputs,
    recursion_offsets,
    window_count,
)
from .flow import FlowField, FlowParams, advect, estimate_flow, forecast_flow_baseline
from .geometry import (
    GroundPoint,
    MirrorModel,
    WarpConfig,
    fov_half_angle,
    mirror_cloud_distance,
    mirror_from_horizon,
    pixel_to_ground,
    unwarp_radius,
    warp_radius,
)
from .image import SkyImage, load_image, save_image
from .metrics import (
    LossWeights,
    MetricReport,
    combined_loss,
    gradient_loss,
    intensity_loss,
    motion_loss,
    psnr,
)
from .synth import SynthScene, measure_flow_uniformity, render_frame, render_sequence
from .warping import (
    CalibrationError,
    WarpMaps,
    build_warp_maps,
    calibrate_mirror,
    estimate_horizon_circle,
    load_warp_maps,
    save_warp_maps,
    unwarp_image,
    warp_image,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "FlowField",
    "FlowParams",
    "ForecastWindow",
    "FrameRef",
    "GroundPoint",
    "ImageSequence",
    "LossWeights",
    "MetricReport",
    "MirrorModel",
    "SkyImage",
    "SynthScene",
    "WarpConfig",
    "WarpMaps",
    "advect",
    "build_warp_maps",
    "calibrate_mirror",
    "combined_loss",
    "estimate_flow",
    "estimate_horizon_circle",
    "forecast_flow_baseline",
    "fov_half_angle",
    "gradient_loss",
    "intensity_loss",
    "load_image",
    "load_sequence",
    "load_warp_maps",
    "make_windows",
    "measure_flow_uniformity",
    "mirror_cloud_distance",
    "mirror_from_horizon",
    "motion_loss",
    "pixel_to_ground",
    "psnr",
    "recursion_inputs",
    "recursion_offsets",
    "render_frame",
    "render_sequence",
    "save_image",
    "save_warp_maps",
    "unwarp_image",
    "unwarp_radius",
    "warp_image",
    "warp_radius",
    "window_count",
]
