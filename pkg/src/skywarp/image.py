"""Shared image container and PNG I/O.

Everything downstream works on float64 RGB arrays in [0, 1] with an optional
boolean validity mask (False where a warp left no source data).  PNG round
trips go through 8-bit, so save/load is lossy at the 1/255 level; tests that
need exact values compare in-memory arrays instead.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image


@dataclass
class SkyImage:
    """An RGB sky frame with acquisition time and validity mask.

    pixels: (h, w, 3) float64 in [0, 1].
    timestamp: seconds (unix or session-relative, only differences matter).
    valid_mask: (h, w) bool, True where pixels carry real data.  None means
        everything is valid.
    """

    pixels: np.ndarray
    timestamp: float = 0.0
    valid_mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (h, w, 3), got {px.shape}")
        self.pixels = px
        if self.valid_mask is not None:
            m = np.asarray(self.valid_mask, dtype=bool)
            if m.shape != px.shape[:2]:
                raise ValueError(
                    f"valid_mask shape {m.shape} does not match image {px.shape[:2]}"
                )
            self.valid_mask = m

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def mask_or_full(self) -> np.ndarray:
        if self.valid_mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.valid_mask

    def luma(self) -> np.ndarray:
        """Rec. 601 luma in [0, 1]."""
        return luma(self.pixels)


def luma(pixels: np.ndarray) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.float64)
    return 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]


_TS_RE = re.compile(r"(\d{8,})")


def timestamp_from_name(path: str) -> Optional[float]:
    """Pull a numeric timestamp out of a filename, if present.

    Accepts any run of 8+ digits (unix seconds or yyyymmddHHMMSS-style
    counters; only differences are ever used, and both are uniform in time
    within one observing session).
    """
    m = _TS_RE.search(os.path.basename(path))
    if m is None:
        return None
    return float(m.group(1))


def load_image(path: str, timestamp: Optional[float] = None) -> SkyImage:
    """Load a PNG/JPEG as a SkyImage; 8-bit values map to k/255."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    if timestamp is None:
        ts = timestamp_from_name(path)
        timestamp = ts if ts is not None else 0.0
    return SkyImage(pixels=arr, timestamp=float(timestamp))


def save_image(img: SkyImage | np.ndarray, path: str) -> None:
    """Write as 8-bit PNG (or whatever the extension implies)."""
    px = img.pixels if isinstance(img, SkyImage) else np.asarray(img, dtype=np.float64)
    out = np.clip(np.round(px * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(out, mode="RGB").save(path)


def save_mask(mask: np.ndarray, path: str) -> None:
    """Write a boolean mask as an 8-bit grayscale PNG (255 = valid)."""
    out = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(out, mode="L").save(path)


def load_mask(path: str) -> np.ndarray:
    """Read a mask PNG back to bool (any nonzero byte counts as valid)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127
