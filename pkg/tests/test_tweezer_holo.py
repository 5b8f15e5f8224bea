import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomlink import tweezer_holo as th
from atomlink.tweezer_holo import (
    HologramConfigError,
    PhaseMask,
    SiteLayout,
    argmax_scan,
    focal_field,
    load_mask,
    save_mask,
    scan_grid,
    spot_metrics,
    target_positions,
    wgs_synthesize,
)


def array_targets(n=10, spacing=7.5, pitch=0.75):
    # collinear row centred on the optical axis, on focal samples
    x = (np.arange(n) - (n - 1) / 2) * spacing
    return np.column_stack([np.round(x / pitch) * pitch, np.zeros(n)])


# --- layouts ------------------------------------------------------------------


def test_reference_row_positions():
    pos = target_positions(SiteLayout((0, 0, 0), (7.5, 0, 0), 10))
    np.testing.assert_allclose(pos[:, 0], np.arange(10) * 7.5)
    assert pos[-1, 0] == 67.5
    np.testing.assert_array_equal(pos[:, 1:], 0)


def test_single_site_is_reference():
    lay = SiteLayout((1.0, -2.0, 0.5), (7.5, 0, 0), 1)
    np.testing.assert_array_equal(target_positions(lay), [[1.0, -2.0, 0.5]])


@given(
    st.tuples(*[st.floats(-50, 50)] * 3),
    st.tuples(*[st.floats(-10, 10)] * 3).filter(lambda d: math.hypot(*d) > 1e-3),
    st.integers(2, 30),
)
def test_positions_equally_spaced(r_ref, delta, n):
    pos = target_positions(SiteLayout(r_ref, delta, n))
    np.testing.assert_allclose(np.diff(pos, axis=0), np.broadcast_to(delta, (n - 1, 3)), atol=1e-9)


def test_layout_validation():
    with pytest.raises(ValueError):
        SiteLayout(n_sites=0)
    with pytest.raises(ValueError):
        SiteLayout(delta_r=(0, 0, 0), n_sites=2)
    SiteLayout(delta_r=(0, 0, 0), n_sites=1)


# --- focal model --------------------------------------------------------------


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.sampled_from([8, 32, 64]))
def test_parseval(seed, n):
    phase = np.random.default_rng(seed).uniform(0, 2 * np.pi, (n, n))
    inten = np.abs(focal_field(PhaseMask(phase))) ** 2
    assert abs(inten.sum() - n * n) < 1e-9 * n * n


def test_mask_phases_wrapped():
    m = PhaseMask(np.array([[-0.5, 7.0], [2 * np.pi, 0.1]]))
    assert np.all((m.phase >= 0) & (m.phase < 2 * np.pi))
    with pytest.raises(ValueError):
        PhaseMask(np.zeros((3, 4)))


def test_uniformity_definition():
    assert th.uniformity([1.0, 1.0, 1.0]) == 1.0
    assert th.uniformity([1.0, 3.0]) == pytest.approx(1 - 2 / 4)
    assert th.uniformity([0.0, 2.0]) == 0.0


# --- WGS ------------------------------------------------------------------------


def test_single_spot_is_a_blazed_grating():
    n, k = 128, 9
    mask, met = wgs_synthesize([[k * 0.75, 0.0]], grid=n, iterations=5)
    assert met.uniformity == 1.0
    # oracle: a shifted delta in the focal plane is a linear phase ramp 2 pi k x / N
    rows = np.unwrap(mask.phase, axis=1)
    slope = np.mean(np.diff(rows, axis=1))
    assert slope == pytest.approx(2 * np.pi * k / n, rel=0.02)
    cols = np.unwrap(mask.phase, axis=0)
    assert abs(np.mean(np.diff(cols, axis=0))) < 0.02 * 2 * np.pi * k / n
    assert met.efficiency == pytest.approx(1.0, abs=1e-9)


def test_four_symmetric_spots():
    pts = np.array([[15, 15], [-15, 15], [15, -15], [-15, -15]], dtype=float)
    mask, met = wgs_synthesize(pts, grid=256, iterations=50, seed=3)
    oracle = spot_metrics(mask, pts)
    assert oracle.uniformity >= 0.95
    assert met.uniformity == pytest.approx(oracle.uniformity, abs=1e-9)


def test_ten_spot_row():
    t = time.perf_counter()
    mask, met = wgs_synthesize(array_targets(), grid=512, iterations=50, seed=0)
    elapsed = time.perf_counter() - t
    # independent oracle: forward transform by hand
    field = np.fft.fftshift(np.fft.fft2(np.exp(1j * mask.phase))) / 512
    inten = np.abs(field) ** 2
    k = np.rint(array_targets() / 0.75).astype(int) + 256
    spots = inten[k[:, 1], k[:, 0]]
    u = 1 - (spots.max() - spots.min()) / (spots.max() + spots.min())
    assert u >= 0.90
    assert spots.sum() / inten.sum() >= 0.5
    assert met.uniformity == pytest.approx(u, abs=1e-9)
    assert elapsed < 10


def test_uniformity_improves_late():
    _, met = wgs_synthesize(array_targets(), grid=256, iterations=40, seed=1)
    tail = met.history[-10:]
    assert np.mean(np.diff(tail)) >= 0
    assert met.history[-1] > met.history[0]


def test_wgs_seed_determinism():
    a, _ = wgs_synthesize(array_targets(4), grid=64, iterations=10, seed=42)
    b, _ = wgs_synthesize(array_targets(4), grid=64, iterations=10, seed=42)
    c, _ = wgs_synthesize(array_targets(4), grid=64, iterations=10, seed=43)
    assert a.phase.tobytes() == b.phase.tobytes()
    assert a.phase.tobytes() != c.phase.tobytes()


def test_wgs_config_errors():
    with pytest.raises(HologramConfigError):
        wgs_synthesize([[0.0, 0.0]], grid=100)
    with pytest.raises(HologramConfigError):
        wgs_synthesize([[1000.0, 0.0]], grid=64)
    with pytest.raises(HologramConfigError):
        wgs_synthesize([[0.0, 0.0], [0.1, 0.0]], grid=64)  # same focal sample
    with pytest.raises(HologramConfigError):
        wgs_synthesize([[0.0, 0.0]], grid=64, iterations=0)


# --- scan grids ---------------------------------------------------------------


def test_xy_scan_has_81_layouts():
    base = SiteLayout()
    grid = scan_grid(base, 2.0, 9)
    assert len(grid) == 81
    offs = np.array([g.r_ref for g in grid])
    assert offs[:, 0].min() == -2.0 and offs[:, 0].max() == 2.0
    # row-major: x fastest
    assert offs[1, 0] - offs[0, 0] == pytest.approx(0.5) and offs[1, 1] == offs[0, 1]
    assert grid[40].r_ref == base.r_ref
    # rigid: spacing untouched
    assert all(g.delta_r == base.delta_r and g.n_sites == base.n_sites for g in grid)


def test_single_step_scan():
    base = SiteLayout()
    assert scan_grid(base, 2.0, 1) == [base]


def test_z_scan_hits_sample_planes():
    zs = np.array([g.r_ref[2] for g in scan_grid(SiteLayout(), 2.56, 129, "z")])
    for z in (-2.36, 0.0, 2.56):
        assert np.min(np.abs(zs - z)) < 1e-12


def test_scan_errors():
    with pytest.raises(ValueError):
        scan_grid(SiteLayout(), 1.0, 0)
    with pytest.raises(ValueError):
        scan_grid(SiteLayout(), 1.0, 3, "xz")


def test_argmax_scan():
    x = np.linspace(-1, 1, 9)
    m = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2))
    assert argmax_scan(m)[0] == 40
    assert argmax_scan(np.full(81, 5.0)) == (0, 5.0)
    assert argmax_scan([1, 3, 3, 2]) == (1, 3.0)
    with pytest.raises(ValueError):
        argmax_scan([])


# --- mask IO ------------------------------------------------------------------


@pytest.mark.parametrize("fmt", ["binary", "text"])
def test_mask_roundtrip(tmp_path, fmt):
    mask = PhaseMask(np.random.default_rng(0).uniform(0, 2 * np.pi, (16, 16)), pitch=0.75)
    back = load_mask(save_mask(mask, tmp_path / f"m.{fmt}", fmt))
    np.testing.assert_array_equal(back.phase, mask.phase)
    assert back.pitch == 0.75


def test_binary_header_layout(tmp_path):
    mask = PhaseMask(np.zeros((8, 8)), pitch=0.5)
    raw = save_mask(mask, tmp_path / "m.phm").read_bytes()
    assert raw[:4] == b"PHM1"
    assert len(raw) == 16 + 8 * 64
    assert int.from_bytes(raw[4:8], "little") == 8


def test_truncated_mask_rejected(tmp_path):
    p = save_mask(PhaseMask(np.zeros((8, 8))), tmp_path / "m.phm")
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_mask(p)
    with pytest.raises(ValueError):
        save_mask(PhaseMask(np.zeros((2, 2))), tmp_path / "x", "png")
