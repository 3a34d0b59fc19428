import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gazeact.core import (
    FixationSet,
    MalformedLine,
    OutOfBounds,
    UnknownVideo,
    VideoMeta,
    dump_fixations_jsonl,
    dump_manifest,
    empirical_frame_map,
    fovea_radius_px,
    gaussian_kernel1d,
    impulse_accumulator,
    load_manifest,
    parse_fixation_log,
)

from conftest import make_set

V1 = VideoMeta("v1", 64, 48, 100)
LINE = {"subject": "s1", "video": "v1", "start_frame": 3, "end_frame": 9, "x": 10.5, "y": 20.0, "group": "active"}


def direct_blur(points, width, height, sigma):
    """Untruncated Gaussian summation over the grid, normalized over the infinite lattice."""
    yy, xx = np.mgrid[0:height, 0:width]
    lattice = np.arange(-200, 201)
    z = np.exp(-0.5 * (lattice / sigma) ** 2).sum() ** 2
    out = np.zeros((height, width))
    for x, y in points:
        cx, cy = min(round(x), width - 1), min(round(y), height - 1)
        out += np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma**2)) / z
    return out


# ---------------------------------------------------------------- ingestion

def test_single_jsonl_line():
    fx = parse_fixation_log(json.dumps(LINE), "jsonl", [V1])
    assert len(fx) == 1
    r = fx.records[0]
    assert (r.subject_id, r.video_id, r.start_frame, r.end_frame, r.x, r.y, r.group) == ("s1", "v1", 3, 9, 10.5, 20.0, "active")
    assert r.duration == 7


def test_x_on_right_edge_is_out_of_bounds():
    with pytest.raises(OutOfBounds) as err:
        parse_fixation_log(json.dumps(dict(LINE, x=64.0)), "jsonl", [V1])
    assert err.value.line == 1


def test_empty_stream():
    assert len(parse_fixation_log("", "jsonl", [V1])) == 0
    assert len(parse_fixation_log("", "csv", [V1])) == 0


def test_line_numbers_in_errors():
    text = json.dumps(LINE) + "\n" + json.dumps(dict(LINE, video="nope")) + "\n"
    with pytest.raises(UnknownVideo) as err:
        parse_fixation_log(text, "jsonl", [V1])
    assert err.value.line == 2
    with pytest.raises(MalformedLine) as err:
        parse_fixation_log(json.dumps(LINE) + "\n\n{oops", "jsonl", [V1])
    assert err.value.line == 3


def test_csv_header_counts_as_line_one():
    text = "subject,video,start_frame,end_frame,x,y,group\ns1,v1,0,1,1,1,active\ns1,v1,0,200,1,1,active\n"
    with pytest.raises(OutOfBounds) as err:
        parse_fixation_log(text, "csv", [V1])
    assert err.value.line == 3
    with pytest.raises(MalformedLine):
        parse_fixation_log("subject,video\ns1,v1\n", "csv", [V1])


def test_frame_span_checks():
    for bad in (dict(LINE, start_frame=5, end_frame=4), dict(LINE, end_frame=100), dict(LINE, start_frame=-1)):
        with pytest.raises(OutOfBounds):
            parse_fixation_log(json.dumps(bad), "jsonl", [V1])
    with pytest.raises(MalformedLine):
        parse_fixation_log(json.dumps(dict(LINE, group="sleepy")), "jsonl", [V1])


def test_jsonl_round_trip():
    fx = make_set([("s2", "v1", 0, 4, 1.0, 2.0), ("s1", "v1", 5, 9, 3.0, 4.0, "free")])
    again = parse_fixation_log(dump_fixations_jsonl(fx.records), "jsonl", list(fx.videos.values()))
    assert again.records == fx.records


def test_manifest_round_trip_and_fovea_default():
    metas = [VideoMeta("a", 640, 360, 10, 25.0, 5.0, label="run", path="a.vol")]
    assert load_manifest(dump_manifest(metas)) == metas
    m = load_manifest(json.dumps([{"video_id": "b", "width": 1280, "height": 720, "frame_count": 5}]))[0]
    # 1.5 degrees at 60 cm is 1.571 cm; 1280 px span 47.5 cm of screen
    assert m.fovea_px == pytest.approx(60 * math.tan(math.radians(1.5)) * 1280 / 47.5)
    assert fovea_radius_px(1.5, 640) == pytest.approx(m.fovea_px / 2)


def test_fixation_set_queries():
    fx = make_set([("s1", "v1", 0, 2, 1, 1), ("s2", "v1", 2, 3, 5, 5), ("s1", "v2", 0, 0, 1, 1)], videos=("v1", "v2"))
    assert fx.subjects == ["s1", "s2"]
    assert fx.video_ids() == ["v1", "v2"]
    assert len(fx.at_frame("v1", 2)) == 2
    assert sorted(fx.frame_index("v1")) == [0, 1, 2, 3]
    assert len(fx.for_subject("s1")) == 2
    with pytest.raises(UnknownVideo):
        make_set([("s1", "v9", 0, 0, 1, 1)])


# ---------------------------------------------------------------- rasterization

def test_center_point_is_normalized_and_symmetric():
    g = empirical_frame_map([(8, 8)], (17, 17), 2.0).values
    assert g.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.unravel_index(np.argmax(g), g.shape) == (8, 8)
    for k in range(4):
        np.testing.assert_allclose(np.rot90(g, k), g, atol=1e-15)


def test_mirrored_points_give_mirrored_grid():
    g = empirical_frame_map([(3, 5), (12, 5)], (16, 12), 1.5).values
    np.testing.assert_allclose(g, g[:, ::-1], atol=1e-12)


def test_ratio_matches_direct_summation():
    acc = impulse_accumulator([(5, 5)], (16, 16), 1.0)
    assert acc[5, 5] == acc.max()
    assert acc[5, 5] / acc[5, 7] == pytest.approx(math.exp(4 / 2), rel=1e-6)
    direct = direct_blur([(5, 5)], 16, 16, 1.0)
    assert direct[5, 5] / direct[5, 7] == pytest.approx(math.exp(2), rel=1e-6)


@given(
    st.lists(st.tuples(st.floats(0, 63.99), st.floats(0, 63.99)), min_size=1, max_size=6),
    st.floats(0.5, 8.0),
)
def test_truncation_error_against_direct_summation(points, sigma):
    ours = empirical_frame_map(points, (64, 64), sigma).values
    ref = direct_blur(points, 64, 64, sigma)
    ref /= ref.sum()
    assert np.abs(ours - ref).max() < 1e-4


def test_kernel_is_normalized():
    for s in (0.3, 1.0, 4.5):
        k = gaussian_kernel1d(s)
        assert k.sum() == pytest.approx(1.0, abs=1e-15)
        assert len(k) == 2 * max(1, math.ceil(4 * s)) + 1


def test_empty_frame_is_uniform_and_flagged():
    g = empirical_frame_map([], (5, 4), 1.0)
    assert g.empty
    np.testing.assert_allclose(g.values, 1 / 20)


points_st = st.lists(st.tuples(st.floats(0, 31.9), st.floats(0, 23.9)), min_size=1, max_size=8)


@given(points_st, points_st, st.floats(0.5, 5.0))
def test_accumulator_linearity(a, b, sigma):
    # normalized maps weighted by counts equal the joint map up to the shared total
    joint = impulse_accumulator(a + b, (32, 24), sigma)
    split = impulse_accumulator(a, (32, 24), sigma) + impulse_accumulator(b, (32, 24), sigma)
    np.testing.assert_allclose(joint, split, atol=1e-9)


@given(points_st, st.floats(0.5, 5.0), st.randoms())
def test_permutation_invariance_and_mass(points, sigma, r):
    shuffled = list(points)
    r.shuffle(shuffled)
    a = empirical_frame_map(points, (32, 24), sigma).values
    b = empirical_frame_map(shuffled, (32, 24), sigma).values
    np.testing.assert_allclose(a, b, atol=1e-15)
    assert a.sum() == pytest.approx(1.0, abs=1e-9)
    assert (a >= 0).all()
