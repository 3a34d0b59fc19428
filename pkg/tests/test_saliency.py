import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from gazeact.saliency import (
    DegenerateLabels,
    DimensionMismatch,
    InterestPoint,
    NoFixatedFrames,
    SaliencyMap,
    apply_combination,
    build_gt_saliency,
    center_bias_map,
    center_bias_saliency,
    combine_maps,
    downsample_map,
    dump_points,
    fixated_cells,
    fixation_interest_points,
    foveation_rate,
    kl_divergence,
    load_points,
    sample_interest_points,
    saliency_auc,
    uniform_map,
)

from conftest import make_set


def smap(frames, mode="per_frame"):
    return SaliencyMap("v1", np.asarray(frames, dtype=float), mode)


# ---------------------------------------------------------------- ground truth

def test_alpha_one_is_exactly_uniform():
    fx = make_set([("s1", "v1", 0, 3, 10, 10)], width=8, height=6, frames=4)
    m = build_gt_saliency(fx, fx.videos["v1"], sigma=2.0, alpha=1.0)
    assert (m.frames == 1.0 / (8 * 6 * 4)).all()


def test_empty_frame_keeps_its_share():
    fx = make_set([("s1", "v1", 0, 0, 10, 10)], width=16, height=12, frames=2)
    m = build_gt_saliency(fx, fx.videos["v1"], sigma=2.0)
    assert m.frames[0].sum() == pytest.approx(0.5, abs=1e-12)
    assert m.frames[1].sum() == pytest.approx(0.5, abs=1e-12)
    assert m.frames[0].argmax() == np.ravel_multi_index((10, 10), (12, 16))
    np.testing.assert_allclose(m.frames[1], 0.5 / (16 * 12))
    assert list(m.empty) == [False, True]


@given(st.floats(0, 1), st.integers(0, 2**31))
def test_mixture_linearity_and_normalization(alpha, seed):
    rng = np.random.default_rng(seed)
    rows = [("s1", "v1", int(t), int(t), rng.uniform(0, 16), rng.uniform(0, 12)) for t in rng.integers(0, 5, 4)]
    fx = make_set(rows, width=16, height=12, frames=5)
    meta = fx.videos["v1"]
    m = build_gt_saliency(fx, meta, 1.5, alpha)
    base = build_gt_saliency(fx, meta, 1.5, 0.0)
    np.testing.assert_allclose(m.frames, (1 - alpha) * base.frames + alpha / base.frames.size, atol=1e-12, rtol=0)
    assert abs(m.frames.sum() - 1.0) <= 1e-8


def test_alpha_out_of_range():
    fx = make_set([("s1", "v1", 0, 0, 1, 1)])
    with pytest.raises(ValueError):
        build_gt_saliency(fx, fx.videos["v1"], 2.0, 1.5)


def test_downsample_preserves_mass():
    rng = np.random.default_rng(0)
    m = smap(rng.random((3, 10, 13)), "per_volume").per_volume()
    d = downsample_map(m, 4)
    assert d.shape == (3, 3, 4)
    assert d.frames.sum() == pytest.approx(1.0)
    assert d.frames[1, 0, 0] == pytest.approx(m.frames[1, :4, :4].sum())


def test_normalization_helpers():
    m = smap(np.r_[np.zeros((1, 2, 2)), np.ones((1, 2, 2))], "per_volume")
    pf = m.per_frame()
    np.testing.assert_allclose(pf.frames.sum(axis=(1, 2)), 1.0)
    assert pf.normalization == "per_frame"
    assert uniform_map("v", (2, 3, 4)).frames.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- KL

def test_kl_four_cell_example():
    p = np.full(4, 0.25)
    s = np.array([0.7, 0.1, 0.1, 0.1])
    oracle = sum(0.25 * math.log(0.25 / si) for si in s)
    assert kl_divergence(s, p) == pytest.approx(oracle, abs=1e-6)
    assert kl_divergence(s, p) == pytest.approx(0.4298, abs=1e-3)


@given(arrays(np.float64, (2, 3, 4), elements=st.floats(0, 1)), arrays(np.float64, (2, 3, 4), elements=st.floats(0, 1)))
def test_kl_nonnegative_and_zero_on_self(a, b):
    a, b = a + 1e-3, b + 1e-3
    pa, pb = smap(a).per_frame(), smap(b).per_frame()
    assert kl_divergence(pa, pa) <= 1e-12
    assert kl_divergence(pa, pb) >= 0.0
    assert kl_divergence(pa.per_volume(), pb.per_volume(), mode="per_volume") >= 0.0


def test_kl_floor_handles_zeros_and_modes():
    truth = smap([[[1.0, 0.0]], [[0.5, 0.5]]])
    pred = smap([[[0.0, 1.0]], [[0.5, 0.5]]])
    eps = 1e-8
    p0 = np.array([1.0, eps]) / (1 + eps)
    s0 = np.array([eps, 1.0]) / (1 + eps)
    oracle = float(np.sum(p0 * np.log(p0 / s0))) / 2
    assert kl_divergence(pred, truth) == pytest.approx(oracle, rel=1e-9)
    pv = np.array([1.0, eps, 0.5, 0.5]) / (2 + eps)
    sv = np.array([eps, 1.0, 0.5, 0.5]) / (2 + eps)
    assert kl_divergence(pred, truth, mode="per_volume") == pytest.approx(float(np.sum(pv * np.log(pv / sv))), rel=1e-9)
    with pytest.raises(DimensionMismatch):
        kl_divergence(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        kl_divergence(np.ones(3), np.ones(3), epsilon=0)


# ---------------------------------------------------------------- AUC

def test_auc_perfect_and_constant():
    rng = np.random.default_rng(1)
    T, H, W = 5, 12, 16
    pts = [(int(rng.integers(W)), int(rng.integers(H)), t) for t in range(T)]
    pred = rng.random((T, H, W)) * 0.5
    for x, y, t in pts:
        pred[t, y, x] = 1.0
    assert saliency_auc(pred, pts) >= 0.99
    assert saliency_auc(np.ones((T, H, W)), pts) == 0.5


@given(st.integers(0, 2**31))
def test_auc_invariant_to_monotone_transforms(seed):
    rng = np.random.default_rng(seed)
    pred = rng.integers(0, 20, size=(3, 6, 7)).astype(float)
    pts = [(int(rng.integers(7)), int(rng.integers(6)), int(rng.integers(3))) for _ in range(5)]
    a = saliency_auc(pred, pts)
    assert saliency_auc(np.exp(pred / 3) + 2, pts) == pytest.approx(a, abs=1e-12)
    assert saliency_auc(pred**3, pts) == pytest.approx(a, abs=1e-12)


def test_auc_falls_with_noise():
    rng = np.random.default_rng(2)
    T, H, W = 40, 16, 16
    planted = center_bias_map(W, H)[None].repeat(T, 0)
    pts = []
    for t in range(T):
        x, y = np.clip(rng.normal([7.5, 7.5], 2.0), 0, 15)
        pts.append((x, y, t))
    aucs = []
    for level in (0.0, 0.003, 0.01, 0.1):
        runs = [saliency_auc(planted + level * rng.standard_normal(planted.shape), pts) for _ in range(5)]
        aucs.append(np.mean(runs))
    assert all(a > b for a, b in zip(aucs, aucs[1:]))


def test_auc_errors():
    with pytest.raises(NoFixatedFrames):
        saliency_auc(np.ones((2, 3, 3)), [])
    with pytest.raises(ValueError):
        saliency_auc(np.ones((2, 3, 3)), [(5, 0, 0)])


def test_fixated_cells_span_frames():
    fx = make_set([("s1", "v1", 2, 4, 8, 12)])
    assert fixated_cells(fx, "v1", downsample=4) == [(2.0, 3.0, 2), (2.0, 3.0, 3), (2.0, 3.0, 4)]


# ---------------------------------------------------------------- center bias

def test_center_bias_shape():
    m = center_bias_map(3, 3)
    assert np.unravel_index(m.argmax(), m.shape) == (1, 1)
    sq = center_bias_map(9, 9)
    np.testing.assert_allclose(np.rot90(sq), sq, atol=1e-12)
    wide = center_bias_map(64, 48)
    for row in wide:
        peak = int(row.argmax())
        assert peak in (31, 32)
        assert (np.diff(row[: peak + 1]) >= 0).all() and (np.diff(row[peak:]) <= 0).all()
    assert wide.sum() == pytest.approx(1.0)
    vol = center_bias_saliency("v", (4, 48, 64))
    assert vol.frames.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- combination

def _planted(rng, T=60, H=12, W=16):
    """Truth map from a moving blob, fixations drawn from it."""
    yy, xx = np.mgrid[0:H, 0:W]
    frames = np.empty((T, H, W))
    pts = []
    for t in range(T):
        cx, cy = rng.uniform(3, W - 3), rng.uniform(3, H - 3)
        frames[t] = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / 4.0)
        for _ in range(3):
            i = rng.choice(H * W, p=(frames[t] / frames[t].sum()).ravel())
            pts.append((float(i % W), float(i // W), t))
    return smap(frames), pts


def test_oracle_channel_is_kept():
    rng = np.random.default_rng(0)
    truth, pts = _planted(rng)
    combo = combine_maps([truth], pts, rng_seed=0)
    assert combo.weights[0] > 0
    combined = apply_combination([truth], combo)
    assert saliency_auc(combined, pts) >= saliency_auc(truth, pts) - 1e-6


def test_noise_channel_barely_matters():
    rng = np.random.default_rng(1)
    truth, pts = _planted(rng, T=120)
    noise = smap(rng.random(truth.shape))
    train = [p for p in pts if p[2] < 60]
    test = [p for p in pts if p[2] >= 60]
    solo = apply_combination([truth], combine_maps([truth], train, rng_seed=0))
    both = apply_combination([truth, noise], combine_maps([truth, noise], train, rng_seed=0))
    assert abs(saliency_auc(both, test) - saliency_auc(solo, test)) <= 0.01


def test_duplicate_channels_split_weight_evenly():
    rng = np.random.default_rng(2)
    truth, pts = _planted(rng)
    combo = combine_maps([truth, truth], pts, rng_seed=0)
    assert combo.weights[0] == pytest.approx(combo.weights[1])
    single = apply_combination([truth], combine_maps([truth], pts, rng_seed=0))
    double = apply_combination([truth, truth], combo)
    np.testing.assert_allclose(double.frames, single.frames, atol=1e-12)


def test_combination_errors():
    with pytest.raises(ValueError):
        combine_maps([], [(0, 0, 0)])
    with pytest.raises(DegenerateLabels):
        combine_maps([smap(np.ones((1, 2, 2)))], [])
    with pytest.raises(DimensionMismatch):
        combine_maps([smap(np.ones((1, 2, 2))), smap(np.ones((1, 3, 2)))], [(0, 0, 0)])


# ---------------------------------------------------------------- sampling

def test_delta_map_samples_one_cell():
    f = np.zeros((2, 5, 6))
    f[:, 3, 4] = 1.0
    pts = sample_interest_points(smap(f), 20, rng_seed=1)
    assert len(pts) == 40
    assert {(p.x, p.y) for p in pts} == {(4.0, 3.0)}


def test_uniform_goodness_of_fit_and_scales():
    m = smap(np.full((1, 16, 16), 1 / 256))
    pts = sample_interest_points(m, 100_000, (2.0, 8.0), rng_seed=5)
    counts = np.zeros(256)
    for p in pts:
        counts[int(p.y) * 16 + int(p.x)] += 1
    assert stats.chisquare(counts).pvalue > 0.001
    scales = np.array([(p.sigma_s, p.sigma_t) for p in pts])
    assert scales.min() >= 2.0 and scales.max() <= 8.0
    assert abs(scales[:, 0].mean() - 5.0) <= 0.05 and abs(scales[:, 1].mean() - 5.0) <= 0.05


def test_sampling_is_bit_identical_across_jobs():
    rng = np.random.default_rng(3)
    m = smap(rng.random((12, 8, 9))).per_frame()
    a = sample_interest_points(m, [3] * 12, rng_seed=7, jobs=1)
    b = sample_interest_points(m, [3] * 12, rng_seed=7, jobs=4)
    c = sample_interest_points(m, [3] * 12, rng_seed=8)
    assert a == b and a != c


def test_match_counts_and_downsample_centers():
    m = smap(np.full((3, 2, 2), 0.25))
    pts = sample_interest_points(m, [0, 2, 5], rng_seed=0, downsample=4)
    assert [sum(p.t == t for p in pts) for t in range(3)] == [0, 2, 5]
    assert {p.x for p in pts} <= {1.5, 5.5}
    with pytest.raises(DimensionMismatch):
        sample_interest_points(m, [1, 2], rng_seed=0)
    with pytest.raises(ValueError):
        sample_interest_points(m, 1, (8.0, 2.0))


def test_points_roundtrip():
    pts = [InterestPoint(1.5, 2.0, 3, 4.0, 5.0), InterestPoint(0.0, 0.0, 0, 2.0, 2.0)]
    assert load_points(dump_points(pts)) == pts


# ---------------------------------------------------------------- fixation operators

def test_fixation_operators_count():
    fx = make_set([("s1", "v1", 3, 9, 20, 20)])
    p2 = fixation_interest_points(fx, "per_frame_2d")
    assert len(p2) == 7 and [p.t for p in p2] == list(range(3, 10))
    assert all(p.sigma_t == 2.0 for p in p2)
    (p3,) = fixation_interest_points(fx, "per_fixation_3d")
    assert p3.t == 6
    (p10,) = fixation_interest_points(make_set([("s1", "v1", 0, 9, 1, 1)]), "per_fixation_3d")
    assert p10.sigma_t == 5.0
    assert fixation_interest_points(make_set([]), "per_frame_2d") == []
    with pytest.raises(ValueError):
        fixation_interest_points(fx, "bogus")


def test_foveation_rate_bounds():
    fx = make_set([("s1", "v1", 3, 9, 20, 20)])
    assert foveation_rate(fixation_interest_points(fx), fx, 4.0) == 1.0
    far = [InterestPoint(50.0, 40.0, 5, 2.0, 2.0), InterestPoint(22.0, 20.0, 5, 2.0, 2.0)]
    assert foveation_rate(far, fx, 4.0) == 0.5
    # a point at the right place but outside the fixation's frames is a miss
    assert foveation_rate([InterestPoint(20.0, 20.0, 12, 2.0, 2.0)], fx, 4.0) == 0.0
    assert foveation_rate(far, make_set([]), 4.0, video_id="v1") == 0.0
