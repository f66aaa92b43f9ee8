"""Rule-based ground truth: three abnormal behaviours, merged into one label.

* rapid acceleration / emergency braking: longitudinal acceleration in the
  extreme ``fraction`` of its speed bin (half in each tail);
* rapid lane change: ``|a_lat|`` strictly above a threshold;
* close lane change: nearest-vehicle distance below 0.5 m (severe) or 1.0 m
  (weak) while the vehicle's lane id changes nearby in time.
"""

import csv
import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientNormals

log = logging.getLogger(__name__)

RAPID_ACCEL = "RapidAccel"
RAPID_LANE = "RapidLane"
CLOSE_SEVERE = "CloseLaneSevere"
CLOSE_WEAK = "CloseLaneWeak"
TRIGGERS = (RAPID_ACCEL, RAPID_LANE, CLOSE_SEVERE, CLOSE_WEAK)

DEFAULT_BINS = np.arange(0.0, 42.0, 2.0)
MIN_BIN = 10


class EmptyBinWarning(UserWarning):
    """A speed bin had fewer than MIN_BIN rows and was merged into a neighbour."""


@dataclass(frozen=True)
class BinCut:
    lo: float
    hi: float
    count: int
    low: float
    high: float


def _group_bins(bin_of, n_bins):
    """Merge consecutive speed bins until every group holds >= MIN_BIN rows."""
    counts = np.bincount(bin_of, minlength=n_bins)
    groups, current, total = [], [], 0
    for b in range(n_bins):
        current.append(b)
        total += counts[b]
        if total >= MIN_BIN:
            groups.append(current)
            current, total = [], 0
    if current:
        if groups:
            groups[-1].extend(current)
        else:
            groups.append(current)
    for g in groups:
        small = [b for b in g if 0 < counts[b] < MIN_BIN]
        if small and len(g) > 1:
            warnings.warn(f"speed bins {small} have < {MIN_BIN} rows; merged with neighbours",
                          EmptyBinWarning, stacklevel=3)
    return groups


def rapid_accel_rule(a_long, speed, bins=DEFAULT_BINS, fraction=0.16, floor=0.0):
    """Flag rows whose ``a_long`` lies strictly beyond its speed bin's tail cuts.

    The cuts are the ``fraction/2`` and ``1 - fraction/2`` linear-interpolation
    quantiles of the bin. ``floor`` additionally requires ``|a_long| > floor``
    (0 disables it). Returns ``(mask, cuts)``.
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    a_long = np.asarray(a_long, dtype=float)
    speed = np.asarray(speed, dtype=float)
    bins = np.asarray(bins, dtype=float)
    n_bins = len(bins) - 1
    bin_of = np.clip(np.searchsorted(bins, speed, side="right") - 1, 0, n_bins - 1)
    mask = np.zeros(len(a_long), dtype=bool)
    cuts = []
    if len(a_long) == 0:
        return mask, cuts
    for group in _group_bins(bin_of, n_bins):
        rows = np.flatnonzero(np.isin(bin_of, group))
        if len(rows) == 0:
            continue
        vals = a_long[rows]
        low, high = np.quantile(vals, [fraction / 2, 1 - fraction / 2])
        hit = (vals < low) | (vals > high)
        if floor > 0:
            hit &= np.abs(vals) > floor
        mask[rows] = hit
        cuts.append(BinCut(float(bins[group[0]]), float(bins[group[-1] + 1]), len(rows),
                           float(low), float(high)))
    return mask, cuts


def rapid_lane_rule(a_lat, threshold=1.3):
    a_lat = np.asarray(a_lat, dtype=float)
    return (a_lat > threshold) | (a_lat < -threshold)


def lane_change_window(table, window=15):
    """True for rows whose track changes lane id within +-``window`` frames."""
    out = np.zeros(len(table), dtype=bool)
    for _, sl in table.track_slices():
        frames = table.frame[sl]
        lanes = table.lane[sl]
        change = np.concatenate(([0], (lanes[1:] != lanes[:-1]).astype(np.int64)))
        csum = np.cumsum(change)
        lo = np.searchsorted(frames, frames - window, side="left")
        hi = np.searchsorted(frames, frames + window, side="right") - 1
        # a change at position k means lanes[k] != lanes[k-1]; count k in (lo, hi]
        out[sl] = (csum[hi] - csum[lo]) > 0
    return out


def close_lane_rule(distance, in_lane_change, severe=0.5, weak=1.0):
    """Return ``(severe_mask, weak_mask)``; only rows inside a lane change count."""
    distance = np.asarray(distance, dtype=float)
    lc = np.asarray(in_lane_change, dtype=bool)
    sev = lc & (distance < severe)
    wk = lc & (distance >= severe) & (distance < weak)
    return sev, wk


@dataclass(frozen=True)
class RuleLabel:
    frame: int
    car: int
    abnormal: int
    triggers: frozenset
    severity: str


class Labels:
    """Merged rule output for N rows; indexable as a sequence of RuleLabel."""

    def __init__(self, frame, car, triggers, override=None):
        self.frame = np.asarray(frame, dtype=np.int64)
        self.car = np.asarray(car, dtype=np.int64)
        n = len(self.frame)
        self.triggers = {name: np.zeros(n, dtype=bool) for name in TRIGGERS}
        for name, mask in triggers.items():
            if name not in self.triggers:
                raise KeyError(f"unknown trigger {name!r}")
            self.triggers[name] = np.asarray(mask, dtype=bool).copy()
        self.override = np.full(n, -1, dtype=np.int8) if override is None else override

    def __len__(self):
        return len(self.frame)

    @property
    def abnormal(self):
        fired = np.zeros(len(self), dtype=bool)
        for mask in self.triggers.values():
            fired |= mask
        return np.where(self.override >= 0, self.override > 0, fired)

    @property
    def severity(self):
        t = self.triggers
        severe = t[CLOSE_SEVERE] | t[RAPID_ACCEL] | t[RAPID_LANE]
        weak = t[CLOSE_WEAK] & ~severe
        out = np.full(len(self), "none", dtype=object)
        out[weak] = "weak"
        out[severe] = "severe"
        return out

    def __getitem__(self, i):
        ab = self.abnormal
        sev = self.severity
        return RuleLabel(
            frame=int(self.frame[i]), car=int(self.car[i]), abnormal=int(ab[i]),
            triggers=frozenset(n for n in TRIGGERS if self.triggers[n][i]),
            severity=sev[i],
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Labels(self.frame[rows], self.car[rows],
                      {n: m[rows] for n, m in self.triggers.items()}, self.override[rows])

    def apply_overrides(self, rows):
        """Force labels from ``(frame, car, abnormal)`` triples; unknown keys are ignored."""
        index = {(int(f), int(c)): i for i, (f, c) in enumerate(zip(self.frame, self.car))}
        override = self.override.copy()
        applied = 0
        for frame, car, abnormal in rows:
            i = index.get((int(frame), int(car)))
            if i is not None:
                override[i] = int(abnormal)
                applied += 1
        log.info("applied %d label overrides", applied)
        return Labels(self.frame, self.car, self.triggers, override)

    def to_csv(self, path):
        ab = self.abnormal
        sev = self.severity
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "car", "abnormal", "triggers", "severity"])
            for i in range(len(self)):
                trig = "|".join(n for n in TRIGGERS if self.triggers[n][i])
                w.writerow([int(self.frame[i]), int(self.car[i]), int(ab[i]), trig, sev[i]])

    @classmethod
    def from_csv(cls, path):
        frame, car, override = [], [], []
        trig = {n: [] for n in TRIGGERS}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                frame.append(int(row["frame"]))
                car.append(int(row["car"]))
                names = set(filter(None, row["triggers"].split("|")))
                for n in TRIGGERS:
                    trig[n].append(n in names)
                override.append(int(row["abnormal"]))
        labels = cls(frame, car, trig)
        derived = labels.abnormal
        ov = np.asarray(override, dtype=np.int8)
        labels.override = np.where(ov != derived.astype(np.int8), ov, -1).astype(np.int8)
        return labels


def read_overrides(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["frame"]), int(r["car"]), int(r["abnormal"])) for r in csv.DictReader(fh)]


def merge_labels(frame, car, triggers):
    """Union of trigger masks per row; abnormal iff any trigger fired."""
    return Labels(frame, car, triggers)


def label_table(table, feats, fraction=0.16, bins=DEFAULT_BINS, accel_floor=0.0,
                lat_threshold=1.3, severe=0.5, weak=1.0, lane_window=15):
    """Run all three rules over a FrameTable and its computed features."""
    accel, cuts = rapid_accel_rule(feats["a_long"], table.speed, bins, fraction, accel_floor)
    for c in cuts:
        log.debug("speed bin [%g, %g): n=%d cuts=(%.3f, %.3f)", c.lo, c.hi, c.count, c.low, c.high)
    lc = lane_change_window(table, lane_window)
    sev, wk = close_lane_rule(feats["distance"], lc, severe, weak)
    return merge_labels(table.frame, table.car, {
        RAPID_ACCEL: accel,
        RAPID_LANE: rapid_lane_rule(feats["a_lat"], lat_threshold),
        CLOSE_SEVERE: sev,
        CLOSE_WEAK: wk,
    })


@dataclass(frozen=True)
class SplitSpec:
    train_normal: np.ndarray
    valid_normal: np.ndarray
    test_normal: np.ndarray
    test_abnormal: np.ndarray
    seed: int

    @property
    def test(self):
        return np.sort(np.concatenate((self.test_normal, self.test_abnormal)))

    def to_json(self):
        return {
            "seed": self.seed,
            "train_normal": self.train_normal.tolist(),
            "valid_normal": self.valid_normal.tolist(),
            "test_normal": self.test_normal.tolist(),
            "test_abnormal": self.test_abnormal.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(*(np.asarray(obj[k], dtype=np.int64) for k in
                     ("train_normal", "valid_normal", "test_normal", "test_abnormal")),
                   seed=int(obj["seed"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def make_split(abnormal, normal_test_count=3638, seed=0, valid_fraction=0.2):
    """Partition row indices: every abnormal row goes to test.

    Normal rows are shuffled with ``seed``; the first ``normal_test_count`` go
    to test, ``valid_fraction`` of the remainder to validation, the rest to
    training. Index arrays are returned sorted.
    """
    abnormal = np.asarray(abnormal).astype(bool)
    normal_idx = np.flatnonzero(~abnormal)
    if normal_test_count > len(normal_idx):
        raise InsufficientNormals(
            f"need {normal_test_count} normal test rows, have {len(normal_idx)}")
    perm = np.random.default_rng(seed).permutation(normal_idx)
    rest = perm[normal_test_count:]
    n_valid = int(round(valid_fraction * len(rest)))
    return SplitSpec(
        train_normal=np.sort(rest[n_valid:]),
        valid_normal=np.sort(rest[:n_valid]),
        test_normal=np.sort(perm[:normal_test_count]),
        test_abnormal=np.flatnonzero(abnormal),
        seed=seed,
    )
