"""Tests for timestamp parsing, gap segmentation, windowing, manifests,
and the year split."""

import calendar
import csv
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skywarp import save_image
from skywarp.dataset import (
    AUX_OFFSETS,
    FrameRef,
    ImageSequence,
    INPUT_OFFSETS,
    ManifestRow,
    format_manifest_ts,
    load_sequence,
    make_windows,
    manifest_header,
    parse_timestamp,
    read_manifest,
    recursion_inputs,
    recursion_offsets,
    split_windows_by_year,
    timestamp_year,
    window_count,
    write_manifest,
)

EPOCH_2002_06_01_1200 = float(calendar.timegm((2002, 6, 1, 12, 0, 0, 0, 0, 0)))


def wallclock_names(start: datetime, offsets_s):
    """Filenames carrying YYYYMMDDHHMMSS stamps at start + each offset."""
    return [
        "sky_" + (start + timedelta(seconds=o)).strftime("%Y%m%d%H%M%S") + ".png"
        for o in offsets_s
    ]


def write_frames(directory, names, dims=(16, 12), value=0.5):
    w, h = dims
    img = np.full((h, w, 3), value, dtype=np.float64)
    for name in names:
        save_image(img, str(directory / name))


def seq_from_offsets(offsets_s, period=30.0, tol=5.0):
    """Sequence over fake paths; segmentation only needs timestamps."""
    frames = [
        FrameRef(timestamp=float(o), path=f"f{i:04d}.png")
        for i, o in enumerate(offsets_s)
    ]
    return ImageSequence(frames=frames, period_s=period, tolerance_s=tol)


def contiguous_seq(n, t_f=None, start=0.0):
    return seq_from_offsets([start + 30.0 * i for i in range(n)])


# ---------------------------------------------------------------- timestamps


def test_parse_timestamp_wallclock():
    assert parse_timestamp("tsi_20020601120000.png") == EPOCH_2002_06_01_1200


def test_parse_timestamp_minute_rollover():
    # 12:00:30 -> 12:01:00 is 30 real seconds, not 70 numeric units
    a = parse_timestamp("a_20020601120030.png")
    b = parse_timestamp("a_20020601120100.png")
    assert b - a == 30.0


def test_parse_timestamp_numeric_run():
    assert parse_timestamp("frame_100000030.png") == 100000030.0


def test_parse_timestamp_short_runs_ignored():
    assert parse_timestamp("cam2_take_0001.png") is None


def test_parse_timestamp_custom_format():
    got = parse_timestamp("sky-200206011200.png", timestamp_format="%Y%m%d%H%M")
    assert got == EPOCH_2002_06_01_1200


def test_parse_timestamp_garbage_14_digits():
    # month 99 fails the wall-clock parse and the run is not reinterpreted
    assert parse_timestamp("x_99999999999999.png") is None


def test_timestamp_year_boundary():
    ts = float(calendar.timegm((2002, 12, 31, 23, 59, 30, 0, 0, 0)))
    assert timestamp_year(ts) == 2002
    assert timestamp_year(ts + 30.0) == 2003


# ------------------------------------------------------------- load_sequence


def test_load_sequence_exact_spacing_single_segment(tmp_path):
    start = datetime(2002, 6, 1, 12, 0, 0)
    names = wallclock_names(start, [30 * i for i in range(10)])
    write_frames(tmp_path, names)
    seq = load_sequence(str(tmp_path))
    assert len(seq) == 10
    assert seq.segments == [(0, 10)]
    assert seq.skipped_files == 0


def test_load_sequence_gap_splits(tmp_path):
    start = datetime(2002, 6, 1, 12, 0, 0)
    offsets = [30 * i for i in range(4)]
    offsets += [offsets[-1] + 300 + 30 * i for i in range(6)]
    write_frames(tmp_path, wallclock_names(start, offsets))
    seq = load_sequence(str(tmp_path))
    assert seq.segments == [(0, 4), (4, 10)]


def test_load_sequence_jitter_within_tolerance(tmp_path):
    # 29..31 s spacing with tolerance 2 stays one segment
    offsets = np.cumsum([0, 29, 31, 29, 31, 30]).tolist()
    names = [f"frame_{100000000 + o}.png" for o in offsets]
    write_frames(tmp_path, names)
    seq = load_sequence(str(tmp_path), tolerance_s=2.0)
    assert seq.segments == [(0, 6)]


def test_load_sequence_empty_dir_errors(tmp_path):
    with pytest.raises(ValueError, match="no frames"):
        load_sequence(str(tmp_path))


def test_load_sequence_mixed_dims_error(tmp_path):
    start = datetime(2002, 6, 1, 12, 0, 0)
    names = wallclock_names(start, [0, 30, 60])
    write_frames(tmp_path, names[:2], dims=(16, 12))
    write_frames(tmp_path, names[2:], dims=(8, 8))
    with pytest.raises(ValueError, match="dimensions"):
        load_sequence(str(tmp_path))


def test_load_sequence_unparseable_skipped(tmp_path):
    start = datetime(2002, 6, 1, 12, 0, 0)
    names = wallclock_names(start, [0, 30, 60])
    write_frames(tmp_path, names + ["notes.png"])
    seq = load_sequence(str(tmp_path))
    assert seq.skipped_files == 1
    assert len(seq) == 3


def test_load_sequence_min_brightness_drops_dark(tmp_path):
    start = datetime(2002, 6, 1, 12, 0, 0)
    names = wallclock_names(start, [0, 30, 60, 90])
    write_frames(tmp_path, [names[0], names[1], names[3]], value=0.5)
    write_frames(tmp_path, [names[2]], value=0.0)
    seq = load_sequence(str(tmp_path), min_brightness=10.0)
    kept = [f.path.split("_")[-1] for f in seq.frames]
    assert len(seq) == 3
    assert names[2].split("_")[-1] not in kept


def test_sequence_requires_increasing_timestamps():
    frames = [FrameRef(0.0, "a.png"), FrameRef(0.0, "b.png")]
    with pytest.raises(ValueError, match="increasing"):
        ImageSequence(frames=frames)


# ----------------------------------------------------------------- windowing


def test_make_windows_spec_counts():
    # length 11 fits exactly one 5-history + 5-target window
    seq = contiguous_seq(11)
    wins = list(make_windows(seq, 5))
    assert len(wins) == 1
    assert wins[0].anchor is seq.frames[5]

    assert window_count(contiguous_seq(10), 5) == 0
    assert list(make_windows(contiguous_seq(10), 5)) == []

    assert window_count(contiguous_seq(20), 1) == 14
    assert len(list(make_windows(contiguous_seq(20), 1))) == 14


def test_window_frame_pattern():
    seq = contiguous_seq(12)
    for win in make_windows(seq, 3):
        t0 = win.anchor.timestamp
        assert [r.timestamp - t0 for r in win.inputs] == [30.0 * o for o in INPUT_OFFSETS]
        assert [r.timestamp - t0 for r in win.aux] == [30.0 * o for o in AUX_OFFSETS]
        assert [r.timestamp - t0 for r in win.targets] == [30.0, 60.0, 90.0]
        for o in (-5, -4, -3, -2, -1, 0):
            assert win.past_by_offset(o).timestamp == t0 + 30.0 * o
        with pytest.raises(KeyError):
            win.past_by_offset(1)


def test_make_windows_rejects_bad_horizon():
    with pytest.raises(ValueError):
        list(make_windows(contiguous_seq(12), 0))


@settings(deadline=None, max_examples=200)
@given(
    lengths=st.lists(st.integers(min_value=1, max_value=40), min_size=1, max_size=6),
    t_f=st.integers(min_value=1, max_value=6),
)
def test_window_count_matches_formula(lengths, t_f):
    # segments induced by large injected gaps; count is per-segment
    offsets = []
    base = 0.0
    for n in lengths:
        offsets.extend(base + 30.0 * i for i in range(n))
        base = offsets[-1] + 3600.0
    seq = seq_from_offsets(offsets)
    assert [e - s for s, e in seq.segments] == lengths

    expected = sum(max(0, n - 5 - t_f) for n in lengths)
    wins = list(make_windows(seq, t_f))
    assert window_count(seq, t_f) == expected
    assert len(wins) == expected

    # no window straddles a gap: all frames are consecutive 30 s apart
    for win in wins:
        ts = sorted(
            [r.timestamp for r in win.inputs]
            + [r.timestamp for r in win.aux]
            + [r.timestamp for r in win.targets]
        )
        assert np.allclose(np.diff(ts), 30.0)


# ----------------------------------------------------------------- recursion


def test_recursion_offsets_examples():
    assert recursion_offsets(0) == (-5, -3, -1, 0)
    assert recursion_offsets(1) == (-4, -2, 0, 1)
    assert recursion_offsets(3) == (-2, 0, 2, 3)
    with pytest.raises(ValueError):
        recursion_offsets(-1)


def test_recursion_offsets_shifted_stack():
    # step k forecasts from anchor t+k, so its stack is the base pattern
    # shifted by k; positive entries count predictions consumed
    for k in range(7):
        assert recursion_offsets(k) == tuple(o + k for o in (-5, -3, -1, 0))
    consumed = [sum(o > 0 for o in recursion_offsets(k)) for k in range(7)]
    assert consumed == [0, 1, 2, 2, 3, 3, 4]


def test_recursion_inputs_substitution():
    seq = contiguous_seq(11)
    win = next(make_windows(seq, 5))

    assert recursion_inputs(win, []) == list(win.inputs)

    got1 = recursion_inputs(win, ["p1"])
    assert got1 == [win.aux[0], win.aux[1], win.inputs[3], "p1"]

    got3 = recursion_inputs(win, ["p1", "p2", "p3"])
    assert got3 == [win.aux[1], win.inputs[3], "p2", "p3"]

    got5 = recursion_inputs(win, ["p1", "p2", "p3", "p4", "p5"])
    assert got5 == [win.inputs[3], "p2", "p4", "p5"]


def test_recursion_consumes_every_past_frame():
    # across steps 0..5 the recursion touches all six stored past frames,
    # which is why the aux frames ride along on the window
    seq = contiguous_seq(11)
    win = next(make_windows(seq, 5))
    seen = set()
    for k in range(6):
        preds = [f"p{i}" for i in range(1, k + 1)]
        for item in recursion_inputs(win, preds):
            if isinstance(item, FrameRef):
                seen.add(item)
    assert seen == set(win.inputs) | set(win.aux)


# ----------------------------------------------------------------- manifests


def test_manifest_header_layout():
    assert manifest_header(2) == [
        "anchor_ts", "in0", "in1", "in2", "in3",
        "target1", "target2", "in_tm4", "in_tm2",
    ]


def test_manifest_round_trip(tmp_path):
    seq = contiguous_seq(14, start=EPOCH_2002_06_01_1200)
    wins = list(make_windows(seq, 3))
    path = str(tmp_path / "manifest.csv")
    n = write_manifest(wins, 3, path)
    assert n == len(wins) == 6

    rows = read_manifest(path)
    assert len(rows) == n
    for row, win in zip(rows, wins):
        assert row.anchor_ts == format_manifest_ts(win.anchor.timestamp)
        assert row.inputs == tuple(r.path for r in win.inputs)
        assert row.targets == tuple(r.path for r in win.targets)
        assert row.aux == (win.aux[0].path, win.aux[1].path)


def test_manifest_tolerates_missing_aux(tmp_path):
    path = str(tmp_path / "min.csv")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["anchor_ts", "in0", "in1", "in2", "in3", "target1"])
        out.writerow(["1000", "a", "b", "c", "d", "e"])
    rows = read_manifest(path)
    assert rows == [
        ManifestRow(anchor_ts="1000", inputs=("a", "b", "c", "d"),
                    targets=("e",), aux=None)
    ]


def test_manifest_rejects_bad_header(tmp_path):
    path = str(tmp_path / "bad.csv")
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(["anchor", "in0", "in1", "in2", "in3", "target1"])
    with pytest.raises(ValueError, match="header"):
        read_manifest(path)


def test_manifest_rejects_target_mismatch(tmp_path):
    seq = contiguous_seq(14)
    wins = list(make_windows(seq, 3))
    with pytest.raises(ValueError, match="targets"):
        write_manifest(wins, 4, str(tmp_path / "m.csv"))


# ---------------------------------------------------------------- year split


def midnight_epoch():
    return float(calendar.timegm((2003, 1, 1, 0, 0, 0, 0, 0, 0)))


def test_split_by_year_clean_segments():
    june = contiguous_seq(12, start=EPOCH_2002_06_01_1200)
    later = contiguous_seq(12, start=midnight_epoch() + 86400.0)
    wins = list(make_windows(june, 2)) + list(make_windows(later, 2))
    train, test = split_windows_by_year(wins, 2003)
    assert len(train) == len(test) == 5
    assert all(timestamp_year(w.targets[-1].timestamp) < 2003 for w in train)
    assert all(timestamp_year(w.inputs[0].timestamp) >= 2003 for w in test)


def test_split_by_year_drops_straddlers():
    # one segment running 23:50:00 Dec 31 .. 00:10:00 Jan 1 (41 frames);
    # windows that touch both years must appear in neither split
    start = midnight_epoch() - 600.0
    seq = contiguous_seq(41, start=start)
    wins = list(make_windows(seq, 2))
    assert len(wins) == 34

    train, test = split_windows_by_year(wins, 2003)
    assert len(train) == 13
    assert len(test) == 14
    assert len(train) + len(test) < len(wins)

    def paths(windows):
        out = set()
        for w in windows:
            out |= {r.path for r in w.inputs}
            out |= {r.path for r in w.aux}
            out |= {r.path for r in w.targets}
        return out

    assert paths(train) & paths(test) == set()
    for w in train:
        assert timestamp_year(w.targets[-1].timestamp) < 2003
    for w in test:
        assert timestamp_year(w.inputs[0].timestamp) >= 2003
