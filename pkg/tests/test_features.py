import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from gazeact.features import (
    DETECTOR_GRIDS,
    RECOGNITION_GRIDS,
    DegenerateWindow,
    DescriptorExtractor,
    FlowField,
    GridConfig,
    SingleFrame,
    counts_per_frame,
    default_bimodality_radius,
    descriptor_length,
    flow_bimodality_map,
    harris3d_response,
    harris_interest_points,
    hog3d,
    horn_schunck_flow,
    l2hys,
    mbh,
    motion_feature_map,
    pooled_histograms,
)
from gazeact.saliency import InterestPoint


def texture(rng, T=6, H=40, W=48, smooth=3.0):
    base = ndimage.gaussian_filter(rng.random((H, W + 2 * T)), smooth, mode="wrap")
    base = (base - base.min()) / (base.max() - base.min())
    # frame t shows the texture moved t pixels to the right
    return np.stack([base[:, T - t : T - t + W] for t in range(T)])


# ---------------------------------------------------------------- flow

def test_static_video_has_no_flow():
    V = np.repeat(np.random.default_rng(0).random((1, 16, 16)), 4, axis=0)
    f = horn_schunck_flow(V)
    assert f.u.shape == V.shape
    assert np.abs(f.u).max() <= 1e-9 and np.abs(f.v).max() <= 1e-9


def test_planted_translation_recovered():
    V = texture(np.random.default_rng(1))
    f = horn_schunck_flow(V)
    interior = (slice(0, -1), slice(8, -8), slice(8, -8))
    assert f.u[interior].mean() == pytest.approx(1.0, abs=0.15)
    assert f.v[interior].mean() == pytest.approx(0.0, abs=0.05)


def test_flow_ignores_intensity_sign():
    V = texture(np.random.default_rng(2))
    a, b = horn_schunck_flow(V), horn_schunck_flow(1.0 - V)
    np.testing.assert_allclose(a.u, b.u, atol=1e-9)
    np.testing.assert_allclose(a.v, b.v, atol=1e-9)


def test_flow_errors_and_roundtrip():
    with pytest.raises(SingleFrame):
        horn_schunck_flow(np.zeros((1, 4, 4)))
    rng = np.random.default_rng(3)
    f = FlowField(rng.random((2, 3, 4)).astype(np.float32), rng.random((2, 3, 4)).astype(np.float32))
    g = FlowField.from_bytes(f.to_bytes())
    assert np.array_equal(f.u, g.u) and np.array_equal(f.v, g.v)


# ---------------------------------------------------------------- descriptors

P = InterestPoint(16.0, 16.0, 4, 3.0, 1.0)


def test_constant_volume_gives_zero_descriptor():
    d = hog3d(np.full((9, 32, 32), 0.3), P, GridConfig(2, 2, 1))
    assert d.shape == (36,) and not d.any()


def test_step_edge_votes_one_bin():
    V = np.zeros((9, 32, 32))
    V[:, :, 16:] = 1.0
    for g in (GridConfig(1, 1, 1), GridConfig(2, 2, 1), GridConfig(3, 3, 2)):
        cells = hog3d(V, P, g).reshape(-1, 9)
        energy = cells**2
        live = energy.sum(1) > 0
        assert live.any()
        assert (energy[live, 0] / energy[live].sum(1) >= 0.9).all()


def test_half_turn_symmetry():
    rng = np.random.default_rng(4)
    V = ndimage.gaussian_filter(rng.random((9, 33, 33)), 1.5)
    p = InterestPoint(16.0, 16.0, 4, 3.0, 1.0)
    R = V[:, ::-1, ::-1]
    np.testing.assert_allclose(hog3d(V, p, GridConfig(1, 1, 1)), hog3d(R, p, GridConfig(1, 1, 1)), atol=1e-9)
    # with several cells the cell order reverses in x and y
    a = hog3d(V, p, GridConfig(2, 2, 1)).reshape(1, 2, 2, 9)
    b = hog3d(R, p, GridConfig(2, 2, 1)).reshape(1, 2, 2, 9)
    np.testing.assert_allclose(a, b[:, ::-1, ::-1], atol=1e-9)


def test_translation_covariance():
    rng = np.random.default_rng(5)
    V = ndimage.gaussian_filter(rng.random((12, 48, 48)), 1.0)
    S = np.roll(V, (1, 3, -2), axis=(0, 1, 2))
    p = InterestPoint(22.0, 20.0, 5, 2.5, 1.0)
    q = InterestPoint(20.0, 23.0, 6, 2.5, 1.0)
    for g in RECOGNITION_GRIDS:
        np.testing.assert_allclose(hog3d(V, p, g), hog3d(S, q, g), atol=1e-6)


@given(st.integers(0, 2**31), st.sampled_from(RECOGNITION_GRIDS))
def test_descriptor_norms(seed, g):
    rng = np.random.default_rng(seed)
    V = rng.random((6, 20, 20)) ** 3
    p = InterestPoint(float(rng.uniform(0, 19)), float(rng.uniform(0, 19)), int(rng.integers(6)), 2.0, 1.0)
    d = hog3d(V, p, g)
    assert d.shape == (g.length,)
    n = np.linalg.norm(d)
    assert n == 0 or 0 < n <= 1 + 1e-12
    assert d.max() <= 1.0


def test_l2hys_clips_dominant_bin():
    v = l2hys(np.array([10.0, 1.0, 1.0]))
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert v[0] < 10 / np.sqrt(102)
    assert not l2hys(np.zeros(4)).any()


def test_mbh_constant_flow_is_zero_and_scale_free():
    shape = (9, 32, 32)
    flat = FlowField(np.full(shape, 1.5), np.full(shape, -0.5))
    assert not mbh(flat, P, GridConfig(2, 2, 1)).any()
    u = np.where(np.arange(32) < 16, 1.0, -1.0)[None, None, :].repeat(9, 0).repeat(32, 1)
    f = FlowField(u, np.zeros(shape))
    d = mbh(f, P, GridConfig(1, 1, 1))
    assert d.shape == (18,)
    assert d[0] == pytest.approx(1.0) and not d[1:].any()
    g = FlowField(2 * u, np.zeros(shape))
    np.testing.assert_allclose(mbh(g, P, GridConfig(2, 2, 1)), mbh(f, P, GridConfig(2, 2, 1)), atol=1e-12)


def test_extractor_matches_single_descriptors():
    rng = np.random.default_rng(6)
    V = rng.random((8, 24, 24))
    flow = FlowField(rng.random(V.shape), rng.random(V.shape))
    ex = DescriptorExtractor(V, flow)
    p = InterestPoint(10.0, 12.0, 3, 2.0, 2.0)
    hogs, mbhs = ex.hog(p, RECOGNITION_GRIDS), ex.mbh(p, RECOGNITION_GRIDS)
    for g in RECOGNITION_GRIDS:
        np.testing.assert_allclose(hogs[g], hog3d(V, p, g), atol=1e-12)
        np.testing.assert_allclose(mbhs[g], mbh(flow, p, g), atol=1e-12)
    with pytest.raises(ValueError):
        DescriptorExtractor(V).mbh(p, DETECTOR_GRIDS)


def test_pooling_against_direct_sum():
    rng = np.random.default_rng(7)
    votes = rng.random((3, 4, 5, 2))
    win = (slice(0, 3), slice(0, 4), slice(0, 5))
    (h,) = pooled_histograms(votes, win, [GridConfig(1, 1, 1, bins=2)]).values()
    np.testing.assert_allclose(h, votes.sum(axis=(0, 1, 2)))
    # total vote mass is preserved by every grid
    for g, hist in pooled_histograms(votes, win, [GridConfig(2, 3, 2, 2), GridConfig(3, 1, 1, 2)]).items():
        assert hist.sum() == pytest.approx(votes.sum())


def test_degenerate_window_and_grid_validation():
    with pytest.raises(DegenerateWindow):
        hog3d(np.zeros((4, 8, 8)), InterestPoint(-50.0, 2.0, 1, 2.0, 1.0), GridConfig(1, 1, 1))
    with pytest.raises(ValueError):
        GridConfig(0, 1, 1)
    assert GridConfig(3, 3, 2).length == 162 and GridConfig(3, 3, 2).name == "3x3x2"
    assert descriptor_length(DETECTOR_GRIDS, "mbh") == 2 * 9 * (1 + 4 + 9)


# ---------------------------------------------------------------- motion maps

def test_constant_flow_maps():
    shape = (2, 12, 12)
    f = FlowField(np.full(shape, 3.0), np.full(shape, 4.0))
    np.testing.assert_allclose(motion_feature_map("flow_magnitude", flow=f), 5.0)
    assert not motion_feature_map("flow_bimodality", flow=f, radius=2).any()


def test_bimodality_peaks_on_motion_boundary():
    H, W = 20, 24
    u = np.where(np.arange(W) < W // 2, 2.0, -2.0)[None, None, :].repeat(H, 1)
    f = FlowField(u, np.zeros_like(u))
    m = flow_bimodality_map(f, radius=2)[0]
    strip = m[:, W // 2 - 2 : W // 2 + 2]
    interior = np.c_[m[:, : W // 2 - 3], m[:, W // 2 + 3 :]]
    assert m.max() == strip.max()
    assert interior.max() < 0.1 * strip.max()
    assert np.isfinite(m).all() and (m >= 0).all()


def test_harris_on_constant_and_moving_corner():
    assert np.abs(harris3d_response(np.full((8, 16, 16), 0.7))).max() <= 1e-9
    assert harris_interest_points(np.full((8, 16, 16), 0.7)) == []
    V = np.zeros((16, 32, 32))
    # constant velocity has no space-time corner; a reversal of motion does
    for t in range(16):
        x = 6 + min(t, 16 - t)
        V[t, 10:20, x : x + 10] = 1.0
    R = motion_feature_map("harris3d", volume=V)
    assert (R >= 0).all() and R.max() > 0
    pts = harris_interest_points(V, scales=((2.0, 2.0),))
    assert pts and all(0 < p.x < 31 and 0 < p.y < 31 for p in pts)
    assert len(harris_interest_points(V, scales=((2.0, 2.0),), max_points=1)) == 1
    assert sum(counts_per_frame(pts, 16)) == len(pts)


def test_misc_helpers():
    assert default_bimodality_radius(4.0) == 2
    with pytest.raises(ValueError):
        motion_feature_map("bogus")
