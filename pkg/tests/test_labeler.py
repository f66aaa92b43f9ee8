import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssmhelm.errors import InsufficientNormals
from ssmhelm.ingest import FrameTable
from ssmhelm.labeler import (CLOSE_SEVERE, CLOSE_WEAK, RAPID_ACCEL, RAPID_LANE, EmptyBinWarning,
                             Labels, SplitSpec, close_lane_rule, lane_change_window, make_split,
                             merge_labels, rapid_accel_rule, rapid_lane_rule, read_overrides)


def test_tail_example():
    a = np.array([-3, -1, 0, 0, 0, 0, 0, 0, 1, 3], dtype=float)
    mask, cuts = rapid_accel_rule(a, np.full(10, 15.0), fraction=0.2)
    assert set(a[mask]) == {-3.0, 3.0}
    assert cuts[0].low == pytest.approx(-1.2) and cuts[0].high == pytest.approx(1.2)


def test_zero_fraction_and_ties():
    a = np.random.default_rng(0).normal(size=50)
    assert not rapid_accel_rule(a, np.full(50, 15.0), fraction=0.0)[0].any()
    assert not rapid_accel_rule(np.full(50, 0.7), np.full(50, 15.0))[0].any()


def test_floor_gates_small_values():
    a = np.linspace(-1, 1, 100)
    assert rapid_accel_rule(a, np.full(100, 15.0))[0].any()
    assert not rapid_accel_rule(a, np.full(100, 15.0), floor=2.0)[0].any()


def test_sparse_bins_merge_with_warning():
    speed = np.concatenate((np.full(40, 11.0), np.full(3, 30.0)))
    a = np.random.default_rng(0).normal(size=43)
    with pytest.warns(EmptyBinWarning):
        _, cuts = rapid_accel_rule(a, speed)
    assert sum(c.count for c in cuts) == 43


@pytest.mark.parametrize("fraction", [0.05, 0.16, 0.3])
def test_flagged_share_per_bin(fraction):
    rng = np.random.default_rng(5)
    speed = rng.uniform(0, 20, 20000)
    a = rng.normal(size=20000)
    mask, cuts = rapid_accel_rule(a, speed, fraction=fraction)
    bins = np.clip(np.searchsorted(np.arange(0, 42, 2.0), speed, side="right") - 1, 0, 19)
    for b in np.unique(bins):
        rows = bins == b
        if rows.sum() >= 1000:
            assert abs(mask[rows].mean() - fraction) <= 0.02


@given(st.lists(st.floats(-10, 10), min_size=12, max_size=80), st.floats(0.0, 0.5),
       st.floats(0.0, 0.5))
def test_fraction_monotone(a, f1, f2):
    a = np.array(a)
    lo, hi = sorted((f1, f2))
    speed = np.full(len(a), 12.0)
    small = rapid_accel_rule(a, speed, fraction=lo)[0]
    big = rapid_accel_rule(a, speed, fraction=hi)[0]
    assert not (small & ~big).any()


def test_lateral_rule():
    np.testing.assert_array_equal(rapid_lane_rule([1.4, 1.3, 0.0, -1.4, -1.3]),
                                  [True, False, False, True, False])


@given(st.lists(st.floats(-5, 5), max_size=40), st.floats(0, 4), st.floats(0, 4))
def test_lateral_monotone(a_lat, t1, t2):
    lo, hi = sorted((t1, t2))
    assert not (rapid_lane_rule(a_lat, hi) & ~rapid_lane_rule(a_lat, lo)).any()


def test_close_lane_rule():
    sev, weak = close_lane_rule([0.482, 0.75, 131.453, 0.3], [True, True, True, False])
    np.testing.assert_array_equal(sev, [True, False, False, False])
    np.testing.assert_array_equal(weak, [False, True, False, False])


def test_lane_change_window():
    frames = np.arange(40)
    lanes = np.where(frames < 20, 1, 2)
    table = FrameTable(frames, np.zeros(40, dtype=np.int64), lanes, *([np.zeros(40)] * 9))
    lc = lane_change_window(table, window=5)
    assert np.array_equal(np.flatnonzero(lc), np.arange(15, 25))


def test_merge_union():
    triggers = {RAPID_ACCEL: [True, False, False], CLOSE_WEAK: [True, False, True]}
    labels = merge_labels([1, 2, 3], [7, 7, 7], triggers)
    assert len(labels) == 3
    np.testing.assert_array_equal(labels.abnormal, [True, False, True])
    row = labels[0]
    assert row.abnormal == 1 and row.triggers == {RAPID_ACCEL, CLOSE_WEAK}
    assert row.severity == "severe"
    assert labels[1].triggers == frozenset() and labels[1].abnormal == 0
    assert labels[2].severity == "weak"


@given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans(), st.booleans()),
                max_size=30))
def test_abnormal_is_nonempty_trigger_set(rows):
    names = (RAPID_ACCEL, RAPID_LANE, CLOSE_SEVERE, CLOSE_WEAK)
    trig = {n: [r[k] for r in rows] for k, n in enumerate(names)}
    labels = merge_labels(range(len(rows)), [0] * len(rows), trig)
    assert len(labels) == len(rows)
    assert [bool(lab.triggers) for lab in labels] == [bool(a) for a in labels.abnormal]


def test_overrides_and_csv_round_trip(tmp_path):
    labels = merge_labels([1, 2, 3], [7, 7, 8], {RAPID_LANE: [True, False, False]})
    path = tmp_path / "ov.csv"
    path.write_text("frame,car,abnormal\n1,7,0\n3,8,1\n99,1,1\n")
    changed = labels.apply_overrides(read_overrides(path))
    np.testing.assert_array_equal(changed.abnormal, [False, False, True])
    assert changed[0].triggers == {RAPID_LANE}
    changed.to_csv(tmp_path / "labels.csv")
    back = Labels.from_csv(tmp_path / "labels.csv")
    np.testing.assert_array_equal(back.abnormal, changed.abnormal)
    assert back[0].triggers == {RAPID_LANE}
    sub = changed.take([2])
    assert len(sub) == 1 and sub[0].abnormal == 1


def test_split_counts():
    abnormal = np.zeros(23605, dtype=bool)
    abnormal[np.random.default_rng(0).choice(23605, 11480, replace=False)] = True
    split = make_split(abnormal, 3638, seed=3)
    assert split.train_normal.size + split.valid_normal.size == 8487
    assert split.test.size == 15118
    again = make_split(abnormal, 3638, seed=3)
    for name in ("train_normal", "valid_normal", "test_normal", "test_abnormal"):
        np.testing.assert_array_equal(getattr(split, name), getattr(again, name))


def test_split_insufficient():
    with pytest.raises(InsufficientNormals):
        make_split(np.array([False, True, True]), 2)


@given(st.lists(st.booleans(), min_size=5, max_size=200), st.integers(0, 2**31),
       st.floats(0.05, 0.5))
def test_split_partition(abnormal, seed, valid_fraction):
    abnormal = np.array(abnormal)
    n_test = int((~abnormal).sum()) // 3
    split = make_split(abnormal, n_test, seed, valid_fraction)
    parts = np.concatenate((split.train_normal, split.valid_normal, split.test))
    np.testing.assert_array_equal(np.sort(parts), np.arange(len(abnormal)))
    assert not abnormal[split.train_normal].any()
    assert not abnormal[split.valid_normal].any()
    np.testing.assert_array_equal(split.test_abnormal, np.flatnonzero(abnormal))


def test_split_json_round_trip(tmp_path):
    split = make_split(np.array([False] * 20 + [True] * 5), 4, seed=1)
    split.save(tmp_path / "s.json")
    back = SplitSpec.load(tmp_path / "s.json")
    np.testing.assert_array_equal(back.test, split.test)


def test_scene_labels(scene):
    result, _, labels = scene
    assert len(labels) == len(result.table)
    ab = labels.abnormal
    assert 0 < ab.mean() < 0.5
