import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssmhelm.errors import MissingFeature, TooShort
from ssmhelm.features import (SETTINGS, acceleration, assemble, compute_features, encode_ttc,
                              heading_unit, is_critical, moving_average, nearest_distance,
                              pairwise_safety, sparse_safety, track_kinematics, ttc_2d,
                              ttc_classic, velocity_vector)
from ssmhelm.ingest import FrameTable, RawRecord, Track, TrackFrame, to_metric


def vehicle(car, x, y, speed, heading, length=0.0, frame=0):
    c, s = math.cos(math.radians(heading)), math.sin(math.radians(heading))
    h = length / 2
    return TrackFrame(frame, car, (x, y), (x + h * c, y + h * s), (x - h * c, y - h * s),
                      speed, heading, 1, frame / 30.0)


def test_velocity_vector_axes():
    np.testing.assert_allclose(velocity_vector(vehicle(1, 0, 0, 10, 0)), [10, 0], atol=1e-12)
    np.testing.assert_allclose(velocity_vector(vehicle(1, 0, 0, 10, 90)), [0, 10], atol=1e-12)
    v = velocity_vector(vehicle(1, 0, 0, 16.368, 359.220))
    assert np.hypot(*v) == pytest.approx(16.368, abs=1e-9)


def test_constant_velocity_no_acceleration():
    k = track_kinematics(np.arange(10) / 30, np.full(10, 12.0), np.full(10, 37.0))
    np.testing.assert_allclose(k["a_long"], 0, atol=1e-12)
    np.testing.assert_allclose(k["a_lat"], 0, atol=1e-12)


def test_difference_quotient():
    frames = tuple(vehicle(1, 0, 0, s, 0, frame=f) for f, s in ((0, 10.0), (15, 11.0)))
    k = acceleration(Track(1, frames), 0)
    assert k.a_long == pytest.approx(2.0)
    assert k.a_lat == pytest.approx(0.0, abs=1e-12)


def test_single_frame_too_short():
    with pytest.raises(TooShort):
        acceleration(Track(1, (vehicle(1, 0, 0, 10, 0),)), 0)


def test_circular_motion_centripetal():
    v, r, fps = 12.0, 40.0, 30.0
    t = np.arange(300) / fps
    heading = np.degrees(v / r * t) + 90.0
    k = track_kinematics(t, np.full_like(t, v), heading)
    inner = slice(5, -5)
    np.testing.assert_allclose(k["a_long"][inner], 0, atol=1e-6)
    np.testing.assert_allclose(np.abs(k["a_lat"][inner]), v * v / r, rtol=0.02)


@pytest.mark.parametrize("fps", [10, 25, 30, 60])
def test_constant_acceleration(fps):
    t = np.arange(100) / fps
    k = track_kinematics(t, 5.0 + 1.7 * t, np.full_like(t, 123.0))
    np.testing.assert_allclose(k["a_long"], 1.7, rtol=0.01)


def test_moving_average():
    np.testing.assert_allclose(moving_average([1.0, 2.0, 3.0, 10.0], 3), [1.5, 2.0, 5.0, 6.5])
    np.testing.assert_allclose(moving_average([1.0, 3.0], 5), [2.0, 2.0])
    with pytest.raises(ValueError):
        moving_average([1.0], 2)


def test_nearest_distance():
    a, b = vehicle(1, 0, 0, 10, 0), vehicle(2, 3, 4, 10, 0)
    assert nearest_distance(a, [a, b]) == 5.0
    assert nearest_distance(a, [a]) == math.inf
    c = vehicle(3, 0.482, 0, 10, 0)
    assert nearest_distance(a, [a, b, c]) == pytest.approx(0.482)


def test_ttc_classic():
    assert ttc_classic(20, 20, 10) == 2.0
    assert ttc_classic(20, 10, 10) == math.inf
    assert ttc_classic(20, 8, 10) == math.inf


def test_ttc_2d_head_on():
    a, b = vehicle(1, 0, 0, 2.5, 0), vehicle(2, 10, 0, 2.5, 180)
    assert ttc_2d(a, [a, b]).ttc2d == pytest.approx(2.0)
    assert ttc_2d(a, [a, b]).neighbor == 2


def test_ttc_2d_diverging():
    a, b = vehicle(1, 0, 0, 2.5, 180), vehicle(2, 10, 0, 2.5, 0)
    m = ttc_2d(a, [a, b])
    assert m.ttc2d == math.inf and m.neighbor is None


def test_critical_horizon():
    assert is_critical(0.295)
    assert not is_critical(104.794)
    assert not is_critical(1.0)


@given(st.floats(1, 200), st.floats(0.5, 40), st.floats(0.5, 40), st.floats(0, 359.9),
       st.floats(-500, 500), st.floats(-500, 500))
def test_2d_reduces_to_classic(gap, v_f, v_l, heading, x0, y0):
    c, s = heading_unit(heading)
    follow = vehicle(1, x0, y0, v_f, heading)
    lead = vehicle(2, x0 + gap * c, y0 + gap * s, v_l, heading)
    m = ttc_2d(follow, [follow, lead], radius=1e4)
    expect = ttc_classic(gap, v_f, v_l)
    if math.isinf(expect):
        assert math.isinf(m.ttc2d)
    else:
        assert m.ttc2d == pytest.approx(expect, rel=1e-9)
        assert m.ttc == pytest.approx(expect, rel=1e-9)


coords = st.floats(-40, 40)
speeds = st.floats(0, 35)
angles = st.floats(0, 359.9)


@given(coords, coords, speeds, angles, coords, coords, speeds, angles)
def test_pair_symmetry(x1, y1, s1, h1, x2, y2, s2, h2):
    a, b = vehicle(1, x1, y1, s1, h1), vehicle(2, x2, y2, s2, h2)
    ta, tb = ttc_2d(a, [a, b]).ttc2d, ttc_2d(b, [a, b]).ttc2d
    assert ta == tb or math.isclose(ta, tb, rel_tol=1e-9)


@given(st.lists(st.tuples(coords, coords, speeds, angles), min_size=2, max_size=6),
       st.floats(0.1, 20))
def test_scale_invariance(rows, k):
    xs = np.array([r[0] for r in rows])
    ys = np.array([r[1] for r in rows])
    sp = np.array([r[2] for r in rows])
    c, s = heading_unit(np.array([r[3] for r in rows]))
    ones = np.zeros(len(rows))
    base = pairwise_safety(xs, ys, sp * c, sp * s, c, s, ones, radius=np.inf)
    # the classic TTC lane gate is a length, so it scales too
    scaled = pairwise_safety(k * xs, k * ys, k * sp * c, k * sp * s, c, s, ones, radius=np.inf,
                             lane_half_width=1.8 * k)
    for i in (1, 2):
        np.testing.assert_allclose(scaled[i], base[i], rtol=1e-9)


def random_frame(rng, n):
    x = rng.uniform(0, 120, n)
    y = rng.uniform(0, 12, n)
    heading = rng.uniform(-20, 20, n)
    c, s = heading_unit(heading)
    speed = rng.uniform(0, 30, n)
    return x, y, speed * c, speed * s, c, s, rng.uniform(1.5, 3.0, n)


@given(st.integers(0, 10**6), st.integers(1, 30), st.booleans())
def test_sparse_matches_dense(seed, n, subtract):
    args = random_frame(np.random.default_rng(seed), n)
    dense = pairwise_safety(*args, radius=50.0, subtract_half_lengths=subtract)
    sparse = sparse_safety(*args, radius=50.0, subtract_half_lengths=subtract)
    for a, b in zip(dense, sparse):
        np.testing.assert_allclose(a, b, rtol=1e-12)


def table_from(frames):
    return FrameTable.from_frames(frames)


def test_assemble_widths_and_cap():
    assert [len(SETTINGS[s]) for s in ("S1", "S2", "S3")] == [4, 7, 5]
    raw = RawRecord(0, 582, 462.4, 184.8, 469.6, 184.8, 455.3, 184.8, 39.5, 180.7, 10)
    table = table_from([to_metric(raw)])
    feats = compute_features(table)
    s1 = assemble(table, feats, "S1").values[0]
    np.testing.assert_allclose(s1, [140.940, 56.327, 17.658, 180.7], atol=1e-3)
    s3 = assemble(table, feats, "S3").values[0]
    assert math.isinf(feats["ttc2d"][0]) and s3[-1] == 300.0


def test_assemble_missing_feature():
    table = table_from([vehicle(1, 0, 0, 10, 0)])
    with pytest.raises(MissingFeature):
        assemble(table, {}, "S3")


@given(st.lists(st.one_of(st.floats(0, 1e6), st.just(math.inf)), min_size=1, max_size=20),
       st.sampled_from(["clamp", "inverse", "log"]))
def test_assemble_finite(ttcs, encoding):
    n = len(ttcs)
    table = table_from([vehicle(i, 10.0 * i, 0, 10, 0) for i in range(n)])
    feats = {"ttc2d": np.array(ttcs), "distance": np.array(ttcs), "a_long": np.zeros(n),
             "a_lat": np.zeros(n)}
    for setting in ("S2", "S3"):
        assert np.all(np.isfinite(assemble(table, feats, setting, ttc_encoding=encoding).values))


def test_encode_ttc():
    ttc = np.array([0.01, 0.5, 2.0, 300.0, np.inf])
    np.testing.assert_allclose(encode_ttc(ttc), [0.01, 0.5, 2.0, 300.0, 300.0])
    np.testing.assert_allclose(encode_ttc(ttc, "inverse"), [10.0, 2.0, 0.5, 1 / 300, 1 / 300])
    assert np.all(np.diff(encode_ttc(ttc, "log")) >= 0)
    with pytest.raises(ValueError):
        encode_ttc(ttc, "sqrt")


def test_compute_features_scene(scene):
    result, feats, _ = scene
    table = result.table
    assert all(len(v) == len(table) for v in feats.values())
    nb = feats["neighbor"]
    valid = nb >= 0
    assert np.all(np.isfinite(feats["ttc2d"][valid]))
    assert np.all(np.isinf(feats["ttc2d"][~valid]))
    assert np.isin(nb[valid], table.car).all()
    assert np.all(nb[valid] != table.car[valid])
    assert np.all(feats["distance"] > 0)
