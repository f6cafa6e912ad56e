"""Variational flow: translation oracles, energy descent, advection, format."""

import numpy as np
import pytest
from scipy import ndimage

from skywarp import FlowField, FlowParams, SkyImage, advect, estimate_flow, forecast_flow_baseline, psnr
from skywarp.flow import (
    _derivatives,
    flow_energy,
    horn_schunck_iterations,
    load_flow,
    rotate_flow_90,
    save_flow,
)


def texture(rng, side=96, sigma=2.0) -> np.ndarray:
    """Smooth wrap-around texture so integer rolls are exact translations."""
    noise = rng.random((side, side))
    sm = ndimage.gaussian_filter(noise, sigma, mode="wrap")
    lo, hi = sm.min(), sm.max()
    return (sm - lo) / (hi - lo)


def as_image(gray: np.ndarray, ts: float = 0.0) -> SkyImage:
    return SkyImage(pixels=np.repeat(gray[..., None], 3, axis=2), timestamp=ts)


def translated_pair(rng, dx: int, dy: int, side=96):
    base = texture(rng, side)
    # roll shifts content by (dy, dx); the flow convention is
    # next(x) = prev(x - flow), so the true flow is (dx, dy)
    shifted = np.roll(base, (dy, dx), axis=(0, 1))
    return as_image(base, 0.0), as_image(shifted, 30.0)


def subpixel_pair(rng, dx: float, dy: float, side=96, sigma=2.0):
    base = texture(rng, side, sigma)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    sx = np.mod(xx - dx, side)
    sy = np.mod(yy - dy, side)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx = sx - x0
    fy = sy - y0
    x1 = (x0 + 1) % side
    y1 = (y0 + 1) % side
    shifted = (
        base[y0, x0] * (1 - fx) * (1 - fy)
        + base[y0, x1] * fx * (1 - fy)
        + base[y1, x0] * (1 - fx) * fy
        + base[y1, x1] * fx * fy
    )
    return as_image(base, 0.0), as_image(shifted, 30.0)


def interior(arr: np.ndarray, margin: int = 12) -> np.ndarray:
    return arr[margin:-margin, margin:-margin]


# ------------------------------------------------------------- estimate_flow


def test_identical_frames_give_zero_flow():
    img = as_image(texture(np.random.default_rng(0)))
    flow = estimate_flow(img, img)
    assert float(np.abs(flow.u).max()) < 1e-3
    assert float(np.abs(flow.v).max()) < 1e-3


def test_integer_translation_recovered():
    prev, nxt = translated_pair(np.random.default_rng(1), dx=2, dy=0)
    flow = estimate_flow(prev, nxt)
    assert float(interior(flow.u).mean()) == pytest.approx(2.0, abs=0.25)
    assert float(interior(flow.v).mean()) == pytest.approx(0.0, abs=0.25)


def test_subpixel_translation_recovered():
    prev, nxt = subpixel_pair(np.random.default_rng(2), dx=0.5, dy=0.5)
    flow = estimate_flow(prev, nxt)
    assert float(interior(flow.u).mean()) == pytest.approx(0.5, abs=0.15)
    assert float(interior(flow.v).mean()) == pytest.approx(0.5, abs=0.15)


def test_flow_is_finite_and_shaped():
    prev, nxt = translated_pair(np.random.default_rng(3), dx=1, dy=-1)
    flow = estimate_flow(prev, nxt)
    assert flow.u.shape == prev.shape
    assert np.isfinite(flow.u).all() and np.isfinite(flow.v).all()


def test_dimension_mismatch_rejected():
    a = as_image(texture(np.random.default_rng(4), side=64))
    b = as_image(texture(np.random.default_rng(4), side=96))
    with pytest.raises(ValueError):
        estimate_flow(a, b)


def test_flow_zero_at_invalid_pixels():
    rng = np.random.default_rng(5)
    prev, nxt = translated_pair(rng, dx=2, dy=0)
    mask = np.ones(prev.shape, dtype=bool)
    mask[:, :20] = False
    prev = SkyImage(pixels=prev.pixels, timestamp=0.0, valid_mask=mask)
    nxt = SkyImage(pixels=nxt.pixels, timestamp=30.0, valid_mask=mask)
    flow = estimate_flow(prev, nxt)
    assert np.all(flow.u[:, :20] == 0.0)
    assert np.all(flow.v[:, :20] == 0.0)


def test_rotational_equivariance():
    # odd side keeps the pyramid's decimation grid rotation-stable; the
    # replicate-boundary rows are excluded (they see different neighbors
    # before and after rotation)
    rng = np.random.default_rng(2)
    prev, nxt = subpixel_pair(rng, dx=1.5, dy=0.5, side=161, sigma=4.0)
    flow = estimate_flow(prev, nxt)
    rot_prev = SkyImage(pixels=np.rot90(prev.pixels).copy(), timestamp=0.0)
    rot_nxt = SkyImage(pixels=np.rot90(nxt.pixels).copy(), timestamp=30.0)
    rot_flow = estimate_flow(rot_prev, rot_nxt)
    expected = rotate_flow_90(flow)
    diff = np.hypot(rot_flow.u - expected.u, rot_flow.v - expected.v)
    mag = np.hypot(expected.u, expected.v)
    core = (slice(6, -6), slice(6, -6))
    rms_diff = float(np.sqrt((diff[core] ** 2).mean()))
    rms_mag = float(np.sqrt((mag[core] ** 2).mean()))
    assert rms_diff < 0.05 * rms_mag


def test_energy_nonincreasing_at_finest_level():
    rng = np.random.default_rng(7)
    prev, nxt = subpixel_pair(rng, dx=0.8, dy=-0.4)
    a = prev.luma() * 255.0
    b = nxt.luma() * 255.0
    valid = np.ones(a.shape, dtype=bool)
    zeros = np.zeros_like(a)
    params = FlowParams(alpha=15.0, iterations=120, pyramid_levels=1)
    _, _, energies = horn_schunck_iterations(a, b, zeros, zeros, valid, params, record_every=10)
    assert len(energies) >= 12
    diffs = np.diff(np.asarray(energies))
    assert np.all(diffs <= 1e-6 * abs(energies[0]))


def test_energy_matches_definition_for_zero_flow():
    rng = np.random.default_rng(8)
    prev, nxt = subpixel_pair(rng, dx=1.0, dy=0.0)
    a = prev.luma() * 255.0
    b = nxt.luma() * 255.0
    fx, fy, ft = _derivatives(a, b)
    zeros = np.zeros_like(fx)
    valid = np.ones(fx.shape, dtype=bool)
    e = flow_energy(fx, fy, ft, zeros, zeros, zeros, zeros, 15.0, valid)
    # zero flow, zero linearization point: energy is the summed squared
    # temporal derivative (smoothness term vanishes)
    assert e == pytest.approx(float((ft**2).sum()), rel=1e-9)


# -------------------------------------------------------------------- advect


def test_advect_zero_flow_is_identity():
    img = as_image(texture(np.random.default_rng(9)))
    zero = FlowField(u=np.zeros(img.shape), v=np.zeros(img.shape))
    out = advect(img, zero, steps=1.0)
    np.testing.assert_allclose(out.pixels, img.pixels, atol=1e-12)


def test_advect_reconstructs_translated_frame():
    prev, nxt = translated_pair(np.random.default_rng(10), dx=2, dy=0)
    truth = FlowField(u=np.full(prev.shape, 2.0), v=np.zeros(prev.shape))
    pred = advect(prev, truth, steps=1.0)
    m = np.zeros(prev.shape, dtype=bool)
    m[12:-12, 12:-12] = True
    assert psnr(nxt, pred, mask=m) >= 35.0


def test_advect_steps_scale_displacement():
    img = as_image(texture(np.random.default_rng(11)))
    flow = FlowField(u=np.full(img.shape, 1.5), v=np.full(img.shape, -0.5))
    doubled = FlowField(u=flow.u * 2.0, v=flow.v * 2.0)
    two_steps = advect(img, flow, steps=2.0)
    one_step_doubled = advect(img, doubled, steps=1.0)
    np.testing.assert_allclose(two_steps.pixels, one_step_doubled.pixels, atol=1e-12)
    np.testing.assert_array_equal(two_steps.mask_or_full(), one_step_doubled.mask_or_full())


def test_advect_marks_out_of_bounds_invalid():
    img = as_image(texture(np.random.default_rng(12), side=48))
    flow = FlowField(u=np.full(img.shape, 5.0), v=np.zeros(img.shape))
    out = advect(img, flow, steps=1.0)
    assert not out.mask_or_full()[:, :5].any()
    assert out.mask_or_full()[:, 10:].all()


def test_advect_rejects_bad_steps():
    img = as_image(texture(np.random.default_rng(13), side=32))
    zero = FlowField(u=np.zeros(img.shape), v=np.zeros(img.shape))
    with pytest.raises(ValueError):
        advect(img, zero, steps=0.0)


# ---------------------------------------------------- constant-velocity model


def test_baseline_static_scene_returns_last_frame():
    img = as_image(texture(np.random.default_rng(14)))
    later = SkyImage(pixels=img.pixels, timestamp=30.0)
    preds = forecast_flow_baseline([img, later], horizon=3)
    assert len(preds) == 3
    for p in preds:
        np.testing.assert_allclose(p.pixels, img.pixels, atol=5e-3)


def test_baseline_beats_persistence_on_translating_scene():
    rng = np.random.default_rng(15)
    side = 96
    base = texture(rng, side)
    frames = [as_image(np.roll(base, (0, 2 * k), axis=(0, 1)), 30.0 * k) for k in range(8)]
    preds = forecast_flow_baseline([frames[1], frames[2]], horizon=5)
    m = np.zeros((side, side), dtype=bool)
    m[16:-16, 16:-16] = True
    for k in range(1, 6):
        truth = frames[2 + k]
        flow_psnr = psnr(truth, preds[k - 1], mask=m)
        persistence = psnr(truth, frames[2], mask=m)
        assert flow_psnr > persistence, f"horizon {k}: {flow_psnr:.2f} <= {persistence:.2f}"


def test_baseline_needs_two_frames():
    img = as_image(texture(np.random.default_rng(16), side=32))
    with pytest.raises(ValueError):
        forecast_flow_baseline([img], horizon=2)


# ------------------------------------------------------------- serialization


def test_flow_disk_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    flow = FlowField(u=rng.normal(size=(40, 56)), v=rng.normal(size=(40, 56)))
    path = str(tmp_path / "field.swfl")
    save_flow(flow, path)
    loaded = load_flow(path)
    np.testing.assert_allclose(loaded.u, flow.u, atol=1e-6)
    np.testing.assert_allclose(loaded.v, flow.v, atol=1e-6)
    assert loaded.u.shape == (40, 56)


def test_flow_format_layout(tmp_path):
    flow = FlowField(u=np.zeros((3, 5)), v=np.ones((3, 5)))
    path = tmp_path / "field.swfl"
    save_flow(flow, str(path))
    blob = path.read_bytes()
    assert blob[:4] == b"SWFL"
    assert int.from_bytes(blob[6:10], "little") == 5
    assert int.from_bytes(blob[10:14], "little") == 3
    assert len(blob) == 14 + 2 * 15 * 4


def test_flow_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"WHAT" + b"\x00" * 32)
    with pytest.raises(ValueError):
        load_flow(str(path))


def test_flow_field_requires_finite_values():
    bad = np.zeros((4, 4))
    bad_u = bad.copy()
    bad_u[0, 0] = np.nan
    with pytest.raises(ValueError):
        FlowField(u=bad_u, v=bad)


def test_flow_params_validation():
    with pytest.raises(ValueError):
        FlowParams(alpha=0.0)
    with pytest.raises(ValueError):
        FlowParams(iterations=0)
    with pytest.raises(ValueError):
        FlowParams(pyramid_levels=0)
