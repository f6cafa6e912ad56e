"""Command-line surface.

Subcommands: calibrate, warp, unwarp, synth, windows, forecast, evaluate,
fixtures.  Exit codes: 0 success, 1 partial failure (some files failed but
the batch continued), 2 invalid invocation.

All evaluation happens in original camera space; forecasts computed in the
warped space are inverted before they are written, so with-warp and
without-warp numbers are directly comparable.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from . import dataset as ds
from . import metrics
from .flow import FlowParams, advect, estimate_flow
from .geometry import MirrorModel, WarpConfig, mirror_from_horizon
from .image import SkyImage, load_image, load_mask, save_image, save_mask
from .synth import SynthScene, default_scene_model, parse_scene_file, render_frame
from .warping import (
    TO_ORIGINAL,
    TO_WARPED,
    CalibrationError,
    WarpMaps,
    build_warp_maps,
    estimate_horizon_circle,
    load_warp_maps,
    save_warp_maps,
    unwarp_image,
    warp_image,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

_IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings; predictions are always scored in original space."""

    horizons: int = 5
    mask_path: Optional[str] = None
    output_csv: str = "report.csv"
    motion_loss: bool = True

    def __post_init__(self):
        if self.horizons < 1:
            raise ValueError("horizons must be >= 1")


def _err(msg: str) -> None:
    print(f"skywarp: {msg}", file=sys.stderr)


def _list_frames(directory: str) -> list[str]:
    names = sorted(
        n
        for n in os.listdir(directory)
        if n.lower().endswith(_IMAGE_EXTS)
        and n != "valid_mask.png"
        and not n.lower().endswith("_mask.png")
    )
    return [os.path.join(directory, n) for n in names]


def write_model_file(model: MirrorModel, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"cx={model.center[0]:.6f}\n")
        fh.write(f"cy={model.center[1]:.6f}\n")
        fh.write(f"radius_px={model.radius_px:.6f}\n")


def read_model_file(path: str) -> MirrorModel:
    vals = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            vals[key.strip()] = float(value.strip())
    missing = {"cx", "cy", "radius_px"} - set(vals)
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    return MirrorModel(radius_px=vals["radius_px"], center=(vals["cx"], vals["cy"]))


def _warp_config(args) -> WarpConfig:
    return WarpConfig(
        rho_max=args.rho_max,
        upsample=args.upsample,
        interpolation=args.interpolation,
        pre_blur=not args.no_pre_blur,
    )


def _flow_params(args) -> FlowParams:
    return FlowParams(alpha=args.alpha, iterations=args.iterations, pyramid_levels=args.levels)


# ---------------------------------------------------------------- calibrate


def cmd_calibrate(args) -> int:
    if args.override:
        try:
            cx, cy, rh = (float(p) for p in args.override.split(","))
        except ValueError:
            _err("--override expects cx,cy,horizon_radius")
            return EXIT_USAGE
        write_model_file(mirror_from_horizon(rh, (cx, cy)), args.out)
        return EXIT_OK

    if os.path.isdir(args.input):
        paths = _list_frames(args.input)
    else:
        paths = [args.input]
    if not paths:
        _err("no frames")
        return EXIT_USAGE

    fits = []
    failures = 0
    for path in paths:
        try:
            center, radius = estimate_horizon_circle(load_image(path))
            fits.append((center[0], center[1], radius))
        except (CalibrationError, OSError) as exc:
            failures += 1
            _err(f"{path}: {exc}")
    if not fits:
        _err("calibration failed on every frame")
        return EXIT_PARTIAL
    arr = np.asarray(fits)
    cx, cy, rh = (float(np.median(arr[:, i])) for i in range(3))
    write_model_file(mirror_from_horizon(rh, (cx, cy)), args.out)
    print(f"calibrated from {len(fits)} frame(s): cx={cx:.2f} cy={cy:.2f} horizon={rh:.2f}px")
    return EXIT_PARTIAL if failures else EXIT_OK


# --------------------------------------------------------------- warp/unwarp


def _resolve_maps(args, direction: str, first_image: SkyImage) -> WarpMaps:
    if args.load_maps:
        maps = load_warp_maps(args.load_maps)
        if maps.direction != direction:
            raise ValueError(
                f"{args.load_maps} holds a {maps.direction} table, need {direction}"
            )
        return maps
    if not args.model:
        raise ValueError("--model is required unless --load-maps is given")
    model = read_model_file(args.model)
    if direction == TO_ORIGINAL:
        # the original crop is not recoverable from warped frames
        width = getattr(args, "width", None)
        height = getattr(args, "height", None)
        if not (width and height):
            raise ValueError(
                "--width and --height (original frame size) are required to unwarp with --model"
            )
        dims = (width, height)
    else:
        h, w = first_image.shape
        dims = (w, h)
    pair = build_warp_maps(model, _warp_config(args), dims)
    return pair[0] if direction == TO_WARPED else pair[1]


def _run_batch(args, direction: str) -> int:
    paths = _list_frames(args.in_dir)
    if not paths:
        _err("no frames")
        return EXIT_USAGE
    os.makedirs(args.out_dir, exist_ok=True)

    first = load_image(paths[0])
    try:
        maps = _resolve_maps(args, direction, first)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    if args.save_maps:
        save_warp_maps(maps, args.save_maps)

    apply_fn = warp_image if direction == TO_WARPED else unwarp_image

    def one(path: str):
        try:
            img = load_image(path)
            out = apply_fn(img, maps)
            save_image(out, os.path.join(args.out_dir, os.path.basename(path)))
            return out.valid_mask
        except Exception as exc:  # per-file isolation by design
            _err(f"{path}: {exc}")
            return None

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, paths))
    else:
        results = [one(p) for p in paths]

    failures = sum(1 for r in results if r is None)
    for r in results:
        if r is not None:
            save_mask(r, os.path.join(args.out_dir, "valid_mask.png"))
            break
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_warp(args) -> int:
    return _run_batch(args, TO_WARPED)


def cmd_unwarp(args) -> int:
    return _run_batch(args, TO_ORIGINAL)


# -------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    try:
        spec = parse_scene_file(args.scene)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    dims = (args.width, args.height)
    if args.model:
        model = read_model_file(args.model)
    else:
        model = default_scene_model(dims, args.horizon_px)
    scene = SynthScene(
        seed=spec["seed"],
        height_m=spec["height_m"],
        velocity_mps=(spec["vx"], spec["vy"]),
        model=model,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    for k in range(spec["frames"]):
        frame = render_frame(scene, k, dims)
        ts = args.base_ts + round(k * scene.frame_period_s)
        save_image(frame, os.path.join(args.out_dir, f"synth_{ts:d}.png"))
    save_mask(
        render_frame(scene, 0, dims).valid_mask,
        os.path.join(args.out_dir, "valid_mask.png"),
    )
    print(f"rendered {spec['frames']} frame(s) to {args.out_dir}")
    return EXIT_OK


# ------------------------------------------------------------------ windows


def cmd_windows(args) -> int:
    try:
        seq = ds.load_sequence(
            args.dir,
            timestamp_format=args.timestamp_format,
            period_s=args.period,
            tolerance_s=args.tolerance,
            min_brightness=args.min_brightness,
        )
    except ValueError as exc:
        _err(str(exc))
        return EXIT_USAGE
    if seq.skipped_files:
        _err(f"skipped {seq.skipped_files} file(s) without parseable timestamps")

    if args.split_year is not None:
        if not (args.out_train and args.out_test):
            _err("--split-year needs --out-train and --out-test")
            return EXIT_USAGE
        train, test = ds.split_windows_by_year(
            ds.make_windows(seq, args.horizon), args.split_year
        )
        n_train = ds.write_manifest(iter(train), args.horizon, args.out_train)
        n_test = ds.write_manifest(iter(test), args.horizon, args.out_test)
        print(f"{n_train} train window(s), {n_test} test window(s)")
    else:
        if not args.out:
            _err("--out is required without --split-year")
            return EXIT_USAGE
        n = ds.write_manifest(ds.make_windows(seq, args.horizon), args.horizon, args.out)
        print(f"{n} window(s)")
    return EXIT_OK


# ----------------------------------------------------------------- forecast


def _load_ref(path: str) -> SkyImage:
    return load_image(path)


def _forecast_window(
    row: ds.ManifestRow,
    method: str,
    space: str,
    maps_pair,
    flow_params: FlowParams,
    out_dir: str,
) -> None:
    horizon = len(row.targets)
    cur = _load_ref(row.inputs[3])
    if method == "persistence":
        preds = [cur] * horizon
    elif space == "raw":
        prev = _load_ref(row.inputs[2])
        flow = estimate_flow(prev, cur, flow_params)
        preds = [advect(cur, flow, steps=float(k)) for k in range(1, horizon + 1)]
    else:
        to_warped, to_original = maps_pair
        prev_w = warp_image(_load_ref(row.inputs[2]), to_warped)
        cur_w = warp_image(cur, to_warped)
        flow = estimate_flow(prev_w, cur_w, flow_params)
        preds = [
            unwarp_image(advect(cur_w, flow, steps=float(k)), to_original)
            for k in range(1, horizon + 1)
        ]
    for k, pred in enumerate(preds, start=1):
        stem = os.path.join(out_dir, f"{row.anchor_ts}_pred{k}")
        save_image(pred, stem + ".png")
        if pred.valid_mask is not None and not pred.valid_mask.all():
            save_mask(pred.valid_mask, stem + "_mask.png")


def cmd_forecast(args) -> int:
    try:
        rows = ds.read_manifest(args.manifest)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    if not rows:
        _err("manifest has no windows")
        return EXIT_USAGE
    os.makedirs(args.out_dir, exist_ok=True)

    maps_pair = None
    if args.method == "flow" and args.space == "warped":
        if not args.model:
            _err("--model is required for warped-space forecasting")
            return EXIT_USAGE
        model = read_model_file(args.model)
        first = _load_ref(rows[0].inputs[3])
        h, w = first.shape
        maps_pair = build_warp_maps(model, _warp_config(args), (w, h))

    flow_params = _flow_params(args)

    def one(row: ds.ManifestRow):
        try:
            _forecast_window(row, args.method, args.space, maps_pair, flow_params, args.out_dir)
            return True
        except Exception as exc:  # per-window isolation
            _err(f"window {row.anchor_ts}: {exc}")
            return False

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            ok = list(pool.map(one, rows))
    else:
        ok = [one(r) for r in rows]
    return EXIT_OK if all(ok) else EXIT_PARTIAL


# ----------------------------------------------------------------- evaluate


def evaluate_predictions(
    rows: list[ds.ManifestRow],
    pred_dir: str,
    config: EvalConfig,
    flow_params: FlowParams = FlowParams(),
) -> tuple[list[metrics.MetricReport], dict, int]:
    """Score predictions against manifest targets, one report per horizon.

    Returns (reports, extras-for-csv, missing-file count).  PSNR is averaged
    over windows with finite PSNR; if every window is identical to its
    target the row reports "inf".
    """
    static_mask = load_mask(config.mask_path) if config.mask_path else None
    horizon = min(config.horizons, len(rows[0].targets))
    reports = []
    psnr_std_col = []
    n_windows_col = []
    missing = 0

    for k in range(1, horizon + 1):
        psnrs, l_ints, l_gds, l_ops = [], [], [], []
        n_valid = 0
        for row in rows:
            stem = os.path.join(pred_dir, f"{row.anchor_ts}_pred{k}")
            pred_path = stem + ".png"
            if not os.path.exists(pred_path):
                _err(f"missing prediction {pred_path}")
                missing += 1
                continue
            pred = load_image(pred_path)
            if os.path.exists(stem + "_mask.png"):
                pred.valid_mask = load_mask(stem + "_mask.png")
            truth = load_image(row.targets[k - 1])
            mask = static_mask
            psnrs.append(metrics.psnr(pred, truth, mask))
            l_ints.append(metrics.intensity_loss(pred, truth, mask))
            l_gds.append(metrics.gradient_loss(pred, truth, mask))
            if config.motion_loss:
                current = load_image(row.inputs[3])
                l_ops.append(metrics.motion_loss(pred, truth, current, flow_params, mask))
            else:
                l_ops.append(0.0)
            common = pred.mask_or_full() & truth.mask_or_full()
            if mask is not None:
                common &= mask
            n_valid += int(common.sum())

        if not psnrs:
            reports.append(
                metrics.MetricReport(k, math.nan, math.nan, math.nan, math.nan, math.nan, 0)
            )
            psnr_std_col.append(math.nan)
            n_windows_col.append(0)
            continue

        finite = [p for p in psnrs if math.isfinite(p)]
        mean_psnr = float(np.mean(finite)) if finite else math.inf
        std_psnr = float(np.std(finite)) if finite else 0.0
        weights = metrics.LossWeights()
        l_int = float(np.mean(l_ints))
        l_gd = float(np.mean(l_gds))
        l_op = float(np.mean(l_ops))
        l_total = weights.lambda_int * l_int + weights.lambda_gd * l_gd + weights.lambda_op * l_op
        reports.append(metrics.MetricReport(k, mean_psnr, l_int, l_gd, l_op, l_total, n_valid))
        psnr_std_col.append(std_psnr)
        n_windows_col.append(len(psnrs))

    extras = {"psnr_std": psnr_std_col, "n_windows": n_windows_col}
    return reports, extras, missing


def _write_plot_dat(reports: list[metrics.MetricReport], stds: list[float], path: str) -> None:
    with open(path, "w") as fh:
        fh.write("# horizon psnr_db psnr_std\n")
        for r, s in zip(reports, stds):
            fh.write(f"{r.horizon} {metrics.format_metric(r.psnr_db)} {metrics.format_metric(s)}\n")


def cmd_evaluate(args) -> int:
    try:
        rows = ds.read_manifest(args.manifest)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    if not rows:
        _err("manifest has no windows")
        return EXIT_USAGE
    config = EvalConfig(
        horizons=args.horizon,
        mask_path=args.mask,
        output_csv=args.out,
        motion_loss=not args.no_motion_loss,
    )
    reports, extras, missing = evaluate_predictions(rows, args.pred_dir, config, _flow_params(args))
    metrics.write_report_csv(reports, args.out, extras)
    dat_path = args.plot_dat or (os.path.splitext(args.out)[0] + ".dat")
    _write_plot_dat(reports, extras["psnr_std"], dat_path)
    for r in reports:
        print(
            f"t+{r.horizon}: psnr={metrics.format_metric(r.psnr_db)} dB "
            f"over {extras['n_windows'][r.horizon - 1]} window(s)"
        )
    return EXIT_PARTIAL if missing else EXIT_OK


# ----------------------------------------------------------------- fixtures


def _fixture_triples(seed: int) -> list[tuple[str, SkyImage, SkyImage, SkyImage]]:
    """(pair_id, current, pred, truth) triples covering the loss surface."""
    rng = np.random.default_rng(seed)
    triples = []

    base = rng.random((32, 32, 3))
    triples.append(("identical", SkyImage(base.copy()), SkyImage(base.copy()), SkyImage(base.copy())))

    zeros = np.zeros((16, 16, 3))
    halves = np.full((16, 16, 3), 0.5)
    triples.append(("const_offset", SkyImage(zeros.copy()), SkyImage(zeros.copy()), SkyImage(halves)))

    for i in range(5):
        cur = rng.random((5, 5, 3))
        pred = rng.random((5, 5, 3))
        truth = rng.random((5, 5, 3))
        triples.append((f"random5x5_{i}", SkyImage(cur), SkyImage(pred), SkyImage(truth)))

    tex = rng.random((64, 64, 3))
    for c in range(3):
        tex[..., c] = ndimage.gaussian_filter(tex[..., c], 2.0, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    cur = SkyImage(tex)
    truth = SkyImage(np.roll(tex, shift=2, axis=1))
    pred = SkyImage(tex.copy())
    triples.append(("translated", cur, pred, truth))
    return triples


def cmd_fixtures(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    weights = metrics.LossWeights()
    flow_params = FlowParams()
    rows = []
    for pair_id, cur, pred, truth in _fixture_triples(args.seed):
        paths = {}
        for role, img in (("current", cur), ("pred", pred), ("truth", truth)):
            path = os.path.join(args.out_dir, f"{pair_id}_{role}.png")
            save_image(img, path)
            paths[role] = path
        # recompute on the quantized PNGs so consumers can reproduce exactly
        cur_q = load_image(paths["current"])
        pred_q = load_image(paths["pred"])
        truth_q = load_image(paths["truth"])
        l_int = metrics.intensity_loss(pred_q, truth_q)
        l_gd = metrics.gradient_loss(pred_q, truth_q)
        l_op = metrics.motion_loss(pred_q, truth_q, cur_q, flow_params)
        l_total = weights.lambda_int * l_int + weights.lambda_gd * l_gd + weights.lambda_op * l_op
        rows.append((pair_id, l_int, l_gd, l_op, l_total))
    csv_path = os.path.join(args.out_dir, "fixtures.csv")
    metrics.write_fixture_csv(rows, csv_path)
    print(f"wrote {len(rows)} fixture row(s) to {csv_path}")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def _add_warp_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="mirror model file from `skywarp calibrate`")
    p.add_argument("--rho-max", type=float, default=3.0, dest="rho_max")
    p.add_argument("--upsample", type=int, default=3)
    p.add_argument("--interpolation", choices=["bilinear", "nearest"], default="bilinear")
    p.add_argument("--no-pre-blur", action="store_true", dest="no_pre_blur")


def _add_flow_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=15.0)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--levels", type=int, default=3)


def _add_jobs_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="skywarp",
        description="Motion-equalizing warping and forecasting for hemispherical sky images",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate the mirror model from frames")
    p.add_argument("input", help="frame file or directory")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--override", help="cx,cy,horizon_radius_px to bypass detection")
    p.set_defaults(fn=cmd_calibrate)

    for name, help_text in (("warp", "resample frames into the motion-equalized space"),
                            ("unwarp", "resample warped frames back to camera space")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("in_dir")
        p.add_argument("out_dir")
        _add_warp_flags(p)
        _add_jobs_flag(p)
        p.add_argument("--save-maps", dest="save_maps", help="write the lookup table (SWMP)")
        p.add_argument("--load-maps", dest="load_maps", help="reuse a saved lookup table")
        if name == "unwarp":
            p.add_argument("--width", type=int, help="original frame width (with --model)")
            p.add_argument("--height", type=int, help="original frame height (with --model)")
        p.set_defaults(fn=cmd_warp if name == "warp" else cmd_unwarp)

    p = sub.add_parser("synth", help="render a synthetic drifting-cloud sequence")
    p.add_argument("scene", help="key=value scene file (seed, height_m, vx, vy, frames)")
    p.add_argument("out_dir")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--horizon-px", type=float, default=None, dest="horizon_px")
    p.add_argument("--model", help="mirror model file (default: synthetic model)")
    p.add_argument("--base-ts", type=int, default=1_000_000_000, dest="base_ts")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("windows", help="enumerate forecast windows into a manifest CSV")
    p.add_argument("--dir", required=True)
    p.add_argument("--period", type=float, default=30.0)
    p.add_argument("--tolerance", type=float, default=5.0)
    p.add_argument("--horizon", type=int, default=5)
    p.add_argument("--split-year", type=int, default=None, dest="split_year")
    p.add_argument("--timestamp-format", default=None, dest="timestamp_format")
    p.add_argument("--min-brightness", type=float, default=None, dest="min_brightness")
    p.add_argument("--out")
    p.add_argument("--out-train", dest="out_train")
    p.add_argument("--out-test", dest="out_test")
    p.set_defaults(fn=cmd_windows)

    p = sub.add_parser("forecast", help="write baseline predictions for manifest windows")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=["persistence", "flow"], required=True)
    p.add_argument("--space", choices=["raw", "warped"], default="raw")
    p.add_argument("--out", required=True, dest="out_dir")
    _add_warp_flags(p)
    _add_flow_flags(p)
    _add_jobs_flag(p)
    p.set_defaults(fn=cmd_forecast)

    p = sub.add_parser("evaluate", help="score predictions against manifest targets")
    p.add_argument("--pred-dir", required=True, dest="pred_dir")
    p.add_argument("--manifest", required=True)
    p.add_argument("--horizon", type=int, default=5)
    p.add_argument("--mask", help="static mask PNG; dark pixels excluded")
    p.add_argument("--out", required=True)
    p.add_argument("--plot-dat", dest="plot_dat", help="gnuplot table path (default: out with .dat)")
    p.add_argument("--no-motion-loss", action="store_true", dest="no_motion_loss")
    _add_flow_flags(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("fixtures", help="emit loss-parity fixture images and CSV")
    p.add_argument("--out", required=True, dest="out_dir")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=cmd_fixtures)

    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
