"""Time-lapse ingestion, gap segmentation, and forecast windowing.

Archives arrive as directories of image files with timestamps embedded in
the filenames, nominally one frame every 30 seconds.  Gaps larger than the
tolerance (nighttime, outages) split a sequence into segments; forecast
windows never straddle a segment boundary.

A window anchored at frame t uses the input stack {t-5, t-3, t-1, t} and
targets {t+1 .. t+T_f}; the skipped frames t-4 and t-2 are also kept on the
window because recursive forecasting shifts the whole offset pattern by one
per step ({t-5+k, t-3+k, t-1+k, t+k}) and needs them at steps 1 and 3.
"""

from __future__ import annotations

import calendar
import csv
import os
import time
from dataclasses import dataclass
from datetime import datetime
from typing import Iterator, Optional, Sequence

from PIL import Image

_IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")

# offsets relative to the anchor; every window carries all six past frames
PAST_OFFSETS = (-5, -4, -3, -2, -1, 0)
INPUT_OFFSETS = (-5, -3, -1, 0)
AUX_OFFSETS = (-4, -2)


@dataclass(frozen=True)
class FrameRef:
    timestamp: float
    path: str


@dataclass
class ImageSequence:
    """Sorted frames plus the contiguous segments within them.

    segments are (start, end) index pairs, end exclusive; consecutive frames
    inside one segment are period_s apart within tolerance_s.
    """

    frames: list[FrameRef]
    period_s: float = 30.0
    tolerance_s: float = 5.0
    skipped_files: int = 0

    def __post_init__(self):
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")
        self.segments = self._compute_segments()

    def _compute_segments(self) -> list[tuple[int, int]]:
        segs = []
        start = 0
        for i in range(1, len(self.frames)):
            dt = self.frames[i].timestamp - self.frames[i - 1].timestamp
            if abs(dt - self.period_s) > self.tolerance_s:
                segs.append((start, i))
                start = i
        if self.frames:
            segs.append((start, len(self.frames)))
        return segs

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class ForecastWindow:
    """One training/eval sample; all refs live in one segment."""

    anchor: FrameRef
    inputs: tuple[FrameRef, FrameRef, FrameRef, FrameRef]
    aux: tuple[FrameRef, FrameRef]
    targets: tuple[FrameRef, ...]

    def past_by_offset(self, offset: int) -> FrameRef:
        table = {
            -5: self.inputs[0],
            -4: self.aux[0],
            -3: self.inputs[1],
            -2: self.aux[1],
            -1: self.inputs[2],
            0: self.inputs[3],
        }
        return table[offset]


def parse_timestamp(name: str, timestamp_format: Optional[str] = None) -> Optional[float]:
    """Extract a timestamp from a filename.

    With a strftime-style format, every digit run is tried against it.  By
    default, 14-digit runs are read as YYYYMMDDHHMMSS wall-clock stamps and
    converted to epoch seconds (so differences are real seconds across
    minute boundaries); other runs of 8+ digits are taken as plain numeric
    counters.
    """
    base = os.path.basename(name)
    runs = []
    cur = ""
    for ch in base:
        if ch.isdigit():
            cur += ch
        elif cur:
            runs.append(cur)
            cur = ""
    if cur:
        runs.append(cur)

    for run in runs:
        if timestamp_format is not None:
            try:
                dt = datetime.strptime(run, timestamp_format)
            except ValueError:
                continue
            return float(calendar.timegm(dt.timetuple()))
        if len(run) == 14:
            try:
                dt = datetime.strptime(run, "%Y%m%d%H%M%S")
            except ValueError:
                continue
            return float(calendar.timegm(dt.timetuple()))
        if len(run) >= 8:
            return float(run)
    return None


def timestamp_year(ts: float) -> int:
    return time.gmtime(ts).tm_year


def load_sequence(
    directory: str,
    timestamp_format: Optional[str] = None,
    period_s: float = 30.0,
    tolerance_s: float = 5.0,
    min_brightness: Optional[float] = None,
) -> ImageSequence:
    """Scan a directory into a segmented sequence.

    Files without a parseable timestamp are skipped (counted on the result);
    heterogeneous image dimensions are an error, as is an empty directory.
    min_brightness drops frames whose mean 8-bit luma is below the value
    (nighttime filter); it forces decoding every frame.
    """
    names = sorted(
        n for n in os.listdir(directory) if n.lower().endswith(_IMAGE_EXTS)
    )
    if not names:
        raise ValueError(f"no frames in {directory}")

    refs = []
    skipped = 0
    dims: Optional[tuple[int, int]] = None
    for name in names:
        path = os.path.join(directory, name)
        ts = parse_timestamp(name, timestamp_format)
        if ts is None:
            skipped += 1
            continue
        with Image.open(path) as im:
            if dims is None:
                dims = im.size
            elif im.size != dims:
                raise ValueError(
                    f"{path}: dimensions {im.size} differ from {dims}; archive must be homogeneous"
                )
            if min_brightness is not None:
                gray = im.convert("L")
                hist = gray.histogram()
                total = sum(hist)
                mean = sum(i * c for i, c in enumerate(hist)) / total if total else 0.0
                if mean < min_brightness:
                    continue
        refs.append(FrameRef(timestamp=ts, path=path))

    if not refs:
        raise ValueError(f"no usable frames in {directory}")
    refs.sort(key=lambda r: r.timestamp)
    return ImageSequence(
        frames=refs, period_s=period_s, tolerance_s=tolerance_s, skipped_files=skipped
    )


def make_windows(seq: ImageSequence, t_f: int) -> Iterator[ForecastWindow]:
    """Lazily enumerate every window that fits inside one segment.

    Yield count is sum over segments of max(0, length - 5 - t_f).
    """
    if t_f < 1:
        raise ValueError("t_f must be >= 1")
    for start, end in seq.segments:
        for pos in range(start + 5, end - t_f):
            frames = seq.frames
            yield ForecastWindow(
                anchor=frames[pos],
                inputs=tuple(frames[pos + o] for o in INPUT_OFFSETS),
                aux=tuple(frames[pos + o] for o in AUX_OFFSETS),
                targets=tuple(frames[pos + k] for k in range(1, t_f + 1)),
            )


def window_count(seq: ImageSequence, t_f: int) -> int:
    return sum(max(0, (end - start) - 5 - t_f) for start, end in seq.segments)


def recursion_offsets(k: int) -> tuple[int, int, int, int]:
    """Anchor-relative input offsets for recursion step k+1 (k predictions
    made so far): the base stack {-5, -3, -1, 0} shifted up by k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return (k - 5, k - 3, k - 1, k)


def recursion_inputs(window: ForecastWindow, predictions_so_far: Sequence) -> list:
    """Input stack for the next recursive step.

    Offsets <= 0 resolve to the window's real past frames (FrameRef);
    offsets >= 1 resolve to predictions_so_far[offset - 1] and are returned
    as given (the caller supplies its own prediction objects).
    """
    k = len(predictions_so_far)
    out = []
    for o in recursion_offsets(k):
        if o <= 0:
            out.append(window.past_by_offset(o))
        else:
            out.append(predictions_so_far[o - 1])
    return out


def manifest_header(t_f: int) -> list[str]:
    head = ["anchor_ts", "in0", "in1", "in2", "in3"]
    head += [f"target{k}" for k in range(1, t_f + 1)]
    head += ["in_tm4", "in_tm2"]
    return head


def format_manifest_ts(ts: float) -> str:
    return f"{ts:.10g}"


def write_manifest(windows, t_f: int, path: str) -> int:
    """Stream windows to the manifest CSV; returns the row count.

    Columns: anchor_ts, in0..in3 (offsets -5,-3,-1,0), target1..targetK,
    then in_tm4, in_tm2 (offsets -4, -2, used by recursive forecasting).
    """
    n = 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(manifest_header(t_f))
        for win in windows:
            if len(win.targets) != t_f:
                raise ValueError(f"window has {len(win.targets)} targets, expected {t_f}")
            row = [format_manifest_ts(win.anchor.timestamp)]
            row += [r.path for r in win.inputs]
            row += [r.path for r in win.targets]
            row += [win.aux[0].path, win.aux[1].path]
            out.writerow(row)
            n += 1
    return n


@dataclass(frozen=True)
class ManifestRow:
    anchor_ts: str
    inputs: tuple[str, ...]
    targets: tuple[str, ...]
    aux: Optional[tuple[str, str]]


def read_manifest(path: str) -> list[ManifestRow]:
    """Read a manifest back; tolerates files without the trailing aux
    columns (the documented minimum schema)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["anchor_ts", "in0", "in1", "in2", "in3"]:
            raise ValueError(f"{path}: unexpected manifest header {header[:5]}")
        has_aux = header[-2:] == ["in_tm4", "in_tm2"]
        n_targets = len(header) - 5 - (2 if has_aux else 0)
        if n_targets < 1:
            raise ValueError(f"{path}: manifest has no target columns")
        for rec in reader:
            if not rec:
                continue
            targets = tuple(rec[5 : 5 + n_targets])
            aux = (rec[-2], rec[-1]) if has_aux else None
            rows.append(
                ManifestRow(
                    anchor_ts=rec[0],
                    inputs=tuple(rec[1:5]),
                    targets=targets,
                    aux=aux,
                )
            )
    return rows


def split_windows_by_year(windows, split_year: int):
    """Partition windows into (train, test) lists by calendar year.

    A window is train only if every frame it touches (t-5 through the last
    target) falls before split_year, and test only if every frame falls in
    or after it.  Windows straddling the boundary are dropped so the two
    sets never share a frame, even across a segment that runs through the
    New Year midnight.
    """
    train, test = [], []
    for win in windows:
        first = timestamp_year(win.inputs[0].timestamp)
        last = timestamp_year(win.targets[-1].timestamp)
        if last < split_year:
            train.append(win)
        elif first >= split_year:
            test.append(win)
    return train, test
