"""PSNR and the forecasting training losses.

Losses follow the combined objective used for training: an intensity (L2)
term, an absolute-gradient sharpness term, and a motion term comparing the
optical flow of (current -> prediction) against (current -> truth), weighted
0.5 / 0.001 / 0.01.  All terms are means over contributing valid samples so
values are resolution independent; masked pixels (occluder arm, out-of-FOV
fill) are excluded by intersecting both images' masks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flow import FlowParams, estimate_flow
from .image import SkyImage


@dataclass(frozen=True)
class LossWeights:
    lambda_int: float = 0.5
    lambda_gd: float = 0.001
    lambda_op: float = 0.01

    def __post_init__(self):
        if self.lambda_int < 0 or self.lambda_gd < 0 or self.lambda_op < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class MetricReport:
    """One evaluation row: quality of the prediction at frame offset k."""

    horizon: int
    psnr_db: float
    l_int: float
    l_gd: float
    l_op: float
    l_total: float
    n_valid_pixels: int


def _common_mask(a: SkyImage, b: SkyImage, extra: Optional[np.ndarray] = None) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mask = a.mask_or_full() & b.mask_or_full()
    if extra is not None:
        if extra.shape != mask.shape:
            raise ValueError(f"mask shape {extra.shape} does not match images {mask.shape}")
        mask = mask & extra.astype(bool)
    return mask


def psnr(a: SkyImage, b: SkyImage, mask: Optional[np.ndarray] = None) -> float:
    """10*log10(1/MSE) over valid RGB samples; +inf when identical there."""
    m = _common_mask(a, b, mask)
    if not m.any():
        raise ValueError("no valid pixels in common")
    diff = a.pixels[m] - b.pixels[m]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def intensity_loss(pred: SkyImage, truth: SkyImage, mask: Optional[np.ndarray] = None) -> float:
    """Mean squared intensity difference over valid RGB samples."""
    m = _common_mask(pred, truth, mask)
    if not m.any():
        return 0.0
    diff = pred.pixels[m] - truth.pixels[m]
    return float(np.mean(diff * diff))


def gradient_loss(pred: SkyImage, truth: SkyImage, mask: Optional[np.ndarray] = None) -> float:
    """Mean L1 difference of absolute forward differences, both axes.

    A horizontal term at (i, j) contributes when pixels (i, j) and (i, j+1)
    are valid in both images; vertical terms likewise.  Constant images have
    zero gradient everywhere, so this term alone cannot fix offsets.
    """
    if min(pred.shape) < 2:
        raise ValueError("gradient loss needs at least 2 pixels per axis")
    m = _common_mask(pred, truth, mask)

    total = 0.0
    count = 0
    for axis in (0, 1):
        gp = np.abs(np.diff(pred.pixels, axis=axis))
        gt = np.abs(np.diff(truth.pixels, axis=axis))
        if axis == 0:
            mm = m[1:, :] & m[:-1, :]
        else:
            mm = m[:, 1:] & m[:, :-1]
        term = np.abs(gp - gt)[mm]
        total += float(term.sum())
        count += term.size
    if count == 0:
        return 0.0
    return total / count


def motion_loss(
    pred_next: SkyImage,
    truth_next: SkyImage,
    current: SkyImage,
    flow_params: FlowParams = FlowParams(),
    mask: Optional[np.ndarray] = None,
) -> float:
    """Mean per-pixel L1 distance between the flow current->pred and the
    flow current->truth (|du| + |dv|, averaged over valid pixels)."""
    m = _common_mask(pred_next, truth_next, mask)
    m = m & current.mask_or_full()
    if not m.any():
        return 0.0
    f_pred = estimate_flow(current, pred_next, flow_params)
    f_true = estimate_flow(current, truth_next, flow_params)
    l1 = np.abs(f_pred.u - f_true.u) + np.abs(f_pred.v - f_true.v)
    return float(np.mean(l1[m]))


def combined_loss(
    pred: SkyImage,
    truth: SkyImage,
    current: SkyImage,
    weights: LossWeights = LossWeights(),
    flow_params: FlowParams = FlowParams(),
    mask: Optional[np.ndarray] = None,
) -> float:
    total = 0.0
    if weights.lambda_int != 0.0:
        total += weights.lambda_int * intensity_loss(pred, truth, mask)
    if weights.lambda_gd != 0.0:
        total += weights.lambda_gd * gradient_loss(pred, truth, mask)
    if weights.lambda_op != 0.0:
        total += weights.lambda_op * motion_loss(pred, truth, current, flow_params, mask)
    return total


def format_metric(value: float) -> str:
    """CSV cell formatting: infinities are spelled "inf", numbers get 10
    significant digits."""
    if math.isinf(value):
        return "inf"
    return f"{value:.10g}"


REPORT_HEADER = ["horizon", "psnr_db", "l_int", "l_gd", "l_op", "l_total", "n_valid_pixels"]
FIXTURE_HEADER = ["pair_id", "l_int", "l_gd", "l_op", "l_total"]


def write_report_csv(rows: list[MetricReport], path: str, extra_cols: Optional[dict] = None) -> None:
    """Write metric rows; extra_cols maps column name -> list of values."""
    header = list(REPORT_HEADER)
    extras = extra_cols or {}
    header.extend(extras.keys())
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for i, r in enumerate(rows):
            row = [
                r.horizon,
                format_metric(r.psnr_db),
                format_metric(r.l_int),
                format_metric(r.l_gd),
                format_metric(r.l_op),
                format_metric(r.l_total),
                r.n_valid_pixels,
            ]
            row.extend(format_metric(col[i]) if isinstance(col[i], float) else col[i] for col in extras.values())
            out.writerow(row)


def write_fixture_csv(rows: list[tuple[str, float, float, float, float]], path: str) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(FIXTURE_HEADER)
        for pair_id, l_int, l_gd, l_op, l_total in rows:
            out.writerow(
                [pair_id, format_metric(l_int), format_metric(l_gd), format_metric(l_op), format_metric(l_total)]
            )


def read_fixture_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]
