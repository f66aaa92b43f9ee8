"""Synthetic multi-lane freeway traffic with injected abnormal behaviours.

Stands in for drone trajectory data. Vehicles drive along a straight road
whose direction is ``road_heading`` degrees. Longitudinal speed follows a slow
travelling speed wave plus a per-vehicle offset, filtered through a bounded
car-following controller. Positions are integrated from velocities at the
configured frame rate, so speed, heading and position agree.

Injected behaviours, each tagged in the ground truth:

``brake``
    a vehicle brakes at ``brake_decel`` for ``brake_duration`` s, regains
    ``recover_fraction`` of the lost speed at ``recover_accel`` and leaves the
    rest to the ordinary controller; a tailgating follower reacts
    ``reaction_time`` s later with a shorter brake (``follower_brake_scale``
    of the duration), so it keeps closing in while the leader recovers;
``rapid_lc``
    a lane change completed in ``rapid_lc_duration`` s;
``close_lc``
    a vehicle riding alongside another swerves into its lane, to within
    ``close_miss`` m of its centerline, and back; the squeezed vehicle brakes
    ``close_reaction_time`` s later and recovers the same way.

Slow lane changes (``normal_lc_duration``) and a gentle lateral sway within
the lane are part of normal traffic.
"""

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import InvalidSpec
from ..ingest import FT_TO_M, MPH_TO_MS, FrameTable

SYNTH_VERSION = "synth-v1"
EVENT_KINDS = ("brake", "rapid_lc", "close_lc")


@dataclass(frozen=True)
class SynthSpec:
    version: str = SYNTH_VERSION
    fps: float = 30.0
    duration: float = 12.0
    n_lanes: int = 3
    lane_width: float = 3.7
    road_heading: float = 90.0
    vehicles_per_lane: int = 40
    spacing: float = 60.0
    base_speed: float = 25.0
    speed_jitter: float = 0.15
    wave_amplitude: float = 1.0
    wave_length: float = 800.0
    wave_period: float = 40.0
    headway: float = 1.4
    max_accel: float = 1.0
    max_decel: float = 1.5
    length_range: tuple = (4.2, 5.0)
    normal_lc_rate: float = 0.0
    normal_lc_duration: float = 7.0
    brake_rate: float = 0.02
    brake_decel: float = 6.0
    brake_duration: float = 0.8
    tailgate_gap: float = 9.0
    reaction_time: float = 0.6
    follower_brake_scale: float = 0.5
    recover_accel: float = 3.0
    recover_fraction: float = 0.6
    rapid_lc_rate: float = 0.05
    rapid_lc_duration: float = 1.6
    cutin_gap: float = 14.0
    cutin_clearance: float = 12.0
    close_lc_rate: float = 0.03
    close_lc_duration: float = 2.4
    close_offset: float = 0.3
    close_miss: float = 0.4
    close_reaction_time: float = 0.3
    close_react_decel: float = 4.0
    close_react_duration: float = 1.0
    sway_amplitude: float = 0.01
    sway_period: tuple = (6.0, 12.0)

    def validate(self):
        if self.version != SYNTH_VERSION:
            raise InvalidSpec(f"unsupported synth spec version {self.version!r}")
        if self.fps <= 0 or self.duration <= 0:
            raise InvalidSpec("fps and duration must be positive")
        if self.n_lanes < 1 or self.lane_width <= 0:
            raise InvalidSpec("need at least one lane of positive width")
        if self.n_lanes < 2 and (self.rapid_lc_rate or self.close_lc_rate or self.normal_lc_rate):
            raise InvalidSpec("lane changes need at least two lanes")
        if self.vehicles_per_lane < 2:
            raise InvalidSpec("need at least two vehicles per lane")
        rates = (self.normal_lc_rate, self.brake_rate, self.rapid_lc_rate, self.close_lc_rate)
        if any(r < 0 for r in rates) or sum(rates) + self.brake_rate > 1:
            raise InvalidSpec("event rates must be non-negative and leave room for brake followers")
        if not 0 <= self.recover_fraction <= 1:
            raise InvalidSpec("recover_fraction must lie in [0, 1]")
        if not 0 < self.follower_brake_scale <= 1:
            raise InvalidSpec("follower_brake_scale must lie in (0, 1]")
        if self.spacing <= self.length_range[1] or self.tailgate_gap <= self.length_range[1] + 2.0:
            raise InvalidSpec("spacing and tailgate gap must exceed the vehicle length")
        if min(self.brake_duration, self.rapid_lc_duration, self.close_lc_duration,
               self.normal_lc_duration, self.brake_decel, self.close_react_decel,
               self.recover_accel) <= 0:
            raise InvalidSpec("event durations and accelerations must be positive")
        if self.sway_amplitude < 0 or min(self.sway_period) <= 0:
            raise InvalidSpec("sway amplitude must be non-negative and periods positive")
        if self.max_accel <= 0 or self.max_decel <= 0:
            raise InvalidSpec("acceleration bounds must be positive")
        return self

    @classmethod
    def from_dict(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidSpec(f"unknown synth spec keys: {sorted(unknown)}")
        obj = dict(obj)
        for key in ("length_range", "sway_period"):
            if key in obj:
                obj[key] = tuple(obj[key])
        try:
            return cls(**obj).validate()
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from exc

    def to_dict(self):
        d = asdict(self)
        d["length_range"] = list(self.length_range)
        d["sway_period"] = list(self.sway_period)
        return d


@dataclass
class SynthResult:
    table: FrameTable
    truth: dict          # kind -> bool array aligned with table rows
    events: list         # dicts: kind, car, start, end (seconds), other

    @property
    def any_event(self):
        out = np.zeros(len(self.table), dtype=bool)
        for mask in self.truth.values():
            out |= mask
        return out


def _min_jerk(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (10 - 15 * tau + 6 * tau ** 2)


def _solve_min_jerk(frac):
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if _min_jerk(mid) < frac:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def _swerve(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return _min_jerk(np.where(tau < 0.5, 2 * tau, 2 - 2 * tau))


def _recovery(spec, decel, dur):
    return spec.recover_fraction * decel * dur / spec.recover_accel


def _plan(spec, rng, lane0, s0, length):
    """Pick event hosts and adjust their start positions.

    Returns ``(lat, brake, close, pace, events, s0, headway)``; ``pace`` maps a
    car to the vehicle whose speed it starts with.
    """
    n = len(lane0)
    headway = np.full(n, spec.headway)
    busy = np.zeros(n, dtype=bool)
    s0 = s0.copy()
    lat, brake, close, pace, events = {}, {}, {}, {}, []
    lane_center = lambda k: (k + 0.5) * spec.lane_width
    margin = 1.5

    def follower_of(car):
        same = np.flatnonzero((lane0 == lane0[car]) & (s0 < s0[car]))
        return int(same[np.argmax(s0[same])]) if same.size else -1

    def pick(count):
        free = np.flatnonzero(~busy)
        return [int(c) for c in rng.permutation(free)[:count]]

    for car in pick(int(round(spec.brake_rate * n))):
        f = follower_of(car)
        if busy[car] or f < 0 or busy[f]:
            continue
        busy[car] = busy[f] = True
        s0[f] = s0[car] - spec.tailgate_gap
        bumper = spec.tailgate_gap - (length[car] + length[f]) / 2
        headway[f] = max((bumper - 2.0) / spec.base_speed, 0.0)
        dur, decel = spec.brake_duration, spec.brake_decel
        f_dur = spec.follower_brake_scale * dur
        lead_for = dur + _recovery(spec, decel, dur)
        follow_for = f_dur + _recovery(spec, decel, f_dur)
        busy_for = max(lead_for, spec.reaction_time + follow_for)
        t0 = rng.uniform(margin, max(margin, spec.duration - busy_for - margin))
        t_f = t0 + spec.reaction_time
        brake[car] = (t0, dur, decel)
        brake[f] = (t_f, f_dur, decel)
        events.append({"kind": "brake", "car": car, "start": t0, "end": t0 + lead_for,
                       "other": f, "other_start": t_f, "other_end": t_f + follow_for})

    def direction(car):
        k = lane0[car]
        options = [d for d in (-1, 1) if 0 <= k + d < spec.n_lanes]
        return options[rng.integers(len(options))]

    def clear_at(pos, lane, exclude):
        others = np.flatnonzero((lane0 == lane) & (np.arange(n) != exclude))
        return others.size == 0 or np.min(np.abs(s0[others] - pos)) >= spec.cutin_clearance

    for car in pick(int(round(spec.normal_lc_rate * n))):
        busy[car] = True
        dur = spec.normal_lc_duration
        t0 = rng.uniform(margin, max(margin, spec.duration - dur - margin))
        k = lane0[car]
        lat[car] = (t0, dur, lane_center(k), lane_center(k + direction(car)), "change")

    # rapid lane changes cut in ``cutin_gap`` m ahead of a target-lane vehicle
    for car in pick(int(round(spec.rapid_lc_rate * n))):
        d = direction(car)
        k = lane0[car]
        cand = np.flatnonzero((lane0 == k + d) & ~busy)
        cand = [int(c) for c in cand[np.argsort(np.abs(s0[cand] - s0[car]))[:4]]
                if clear_at(s0[c] + spec.cutin_gap, k, car)
                and clear_at(s0[c] + spec.cutin_gap, k + d, c)]
        if not cand:
            continue
        target = cand[0]
        busy[car] = True
        s0[car] = s0[target] + spec.cutin_gap
        pace[car] = target
        dur = spec.rapid_lc_duration
        t0 = rng.uniform(margin, max(margin, spec.duration - dur - margin))
        lat[car] = (t0, dur, lane_center(k), lane_center(k + d), "change")
        events.append({"kind": "rapid_lc", "car": car, "start": t0, "end": t0 + dur,
                       "other": target})

    for car in pick(int(round(spec.close_lc_rate * n))):
        d = direction(car)
        cand = np.flatnonzero((lane0 == lane0[car] + d) & ~busy)
        if cand.size == 0:
            continue
        target = int(cand[np.argmin(np.abs(s0[cand] - s0[car]))])
        busy[car] = busy[target] = True
        # ride alongside the target, then swerve at it and back
        s0[car] = s0[target] + spec.close_offset
        pace[car] = target
        dur = spec.close_lc_duration
        t0 = rng.uniform(margin, max(margin, spec.duration - dur - margin))
        k = lane0[car]
        edge = lane_center(k + d) - d * spec.close_miss
        lat[car] = (t0, dur, lane_center(k), edge, "swerve")
        close[car] = (t0, target)
        t_r = t0 + spec.close_reaction_time
        brake[target] = (t_r, spec.close_react_duration, spec.close_react_decel)
        react_for = spec.close_react_duration + _recovery(spec, spec.close_react_decel,
                                                          spec.close_react_duration)
        events.append({"kind": "close_lc", "car": car, "start": t0, "end": t0 + dur,
                       "other": target, "other_start": t_r, "other_end": t_r + react_for})
    return lat, brake, close, pace, events, s0, headway


def synth_generate(spec=None, seed=0):
    """Simulate traffic per ``spec``; deterministic in ``seed``."""
    spec = (spec or SynthSpec()).validate()
    rng = np.random.default_rng(seed)
    dt = 1.0 / spec.fps
    n_steps = int(round(spec.duration * spec.fps))
    nl, per = spec.n_lanes, spec.vehicles_per_lane
    n = nl * per
    lane0 = np.repeat(np.arange(nl), per)
    slot = np.tile(np.arange(per), nl)
    s = (per - 1 - slot) * spec.spacing + lane0 * spec.spacing / nl + rng.uniform(-2, 2, n)
    offset = rng.normal(0.0, spec.speed_jitter, n)
    length = rng.uniform(*spec.length_range, n)
    lat_plans, brake_plans, close_plans, pace, events, s, headway = _plan(spec, rng, lane0, s,
                                                                          length)

    def wave(pos, t):
        return spec.wave_amplitude * np.sin(2 * np.pi * (pos / spec.wave_length - t / spec.wave_period))

    for car, target in pace.items():
        offset[car] = offset[target]
    v = spec.base_speed + offset + wave(s, 0.0)
    for car, target in pace.items():
        v[car] = v[target]
    l0 = (lane0 + 0.5) * spec.lane_width
    l = l0.copy()
    # lane-keeping sway: a slow sinusoid in the lateral offset
    sway_w = 2 * np.pi / rng.uniform(*spec.sway_period, n)
    sway_phase = rng.uniform(0, 2 * np.pi, n)

    def sway(t):
        return spec.sway_amplitude * (np.sin(sway_w * t + sway_phase) - np.sin(sway_phase))

    S = np.empty((n_steps, n))
    L = np.empty((n_steps, n))
    VS = np.empty((n_steps, n))
    VL = np.empty((n_steps, n))
    for step in range(n_steps):
        t = step * dt
        l_now, l_next = l0.copy(), l0.copy()
        for car, (t0, dur, la, lb, shape) in lat_plans.items():
            profile = _swerve if shape == "swerve" else _min_jerk
            l_now[car] = la + (lb - la) * profile((t - t0) / dur)
            l_next[car] = la + (lb - la) * profile((t + dt - t0) / dur)
        vl = (l_next - l_now + sway(t + dt) - sway(t)) / dt
        S[step], L[step], VS[step], VL[step] = s, l, v, vl

        lane_now = np.clip(np.floor(l / spec.lane_width), 0, nl - 1).astype(int)
        # a swerving vehicle is ignored by car-following; its victim reacts by script
        for car, (t0, _) in close_plans.items():
            if t0 <= t < t0 + spec.close_lc_duration:
                lane_now[car] = -1
        v_des = spec.base_speed + offset + wave(s, t)
        a = np.clip(0.8 * (v_des - v), -spec.max_decel, spec.max_accel)
        for k in range(nl):
            idx = np.flatnonzero(lane_now == k)
            if idx.size < 2:
                continue
            idx = idx[np.argsort(s[idx])]
            follower, leader = idx[:-1], idx[1:]
            gap = s[leader] - s[follower] - (length[leader] + length[follower]) / 2
            s_des = 2.0 + headway[follower] * v[follower]
            a_cf = 0.1 * (gap - s_des) + 1.0 * (v[leader] - v[follower])
            closing = v[follower] - v[leader]
            urgent = (closing > 0) & (gap < 4.0 * closing)
            lo = np.where(urgent, -8.0, -spec.max_decel)
            a[follower] = np.minimum(a[follower], np.clip(a_cf, lo, spec.max_accel))
        for car, (t0, dur, decel) in brake_plans.items():
            if t0 <= t < t0 + dur:
                a[car] = -decel
            elif t0 + dur <= t < t0 + dur + _recovery(spec, decel, dur):
                a[car] = spec.recover_accel
        for car, (t0, target) in close_plans.items():
            # pace the target until the swerve is over
            if t < t0 + spec.close_lc_duration:
                a[car] = a[target]
        s = s + v * dt
        l = l + vl * dt
        v = np.maximum(v + a * dt, 0.0)

    h = math.radians(spec.road_heading)
    ch, sh = math.cos(h), math.sin(h)
    X = S * ch - L * sh
    Y = S * sh + L * ch
    VX = VS * ch - VL * sh
    VY = VS * sh + VL * ch
    speed = np.hypot(VX, VY)
    heading = np.degrees(np.arctan2(VY, VX)) % 360.0
    theta = np.radians(heading)
    half = length[None, :] / 2
    lane_id = np.clip(np.floor(L / spec.lane_width), 0, nl - 1).astype(np.int64) + 1
    times = np.arange(n_steps) * dt

    cols = {
        "frame": np.tile(np.arange(n_steps, dtype=np.int64), n),
        "car": np.repeat(np.arange(n, dtype=np.int64), n_steps),
        "lane": lane_id.T.ravel(),
        "x": X.T.ravel(), "y": Y.T.ravel(),
        "head_x": (X + half * np.cos(theta)).T.ravel(),
        "head_y": (Y + half * np.sin(theta)).T.ravel(),
        "tail_x": (X - half * np.cos(theta)).T.ravel(),
        "tail_y": (Y - half * np.sin(theta)).T.ravel(),
        "speed": speed.T.ravel(), "heading": heading.T.ravel(),
        "time": np.tile(times, n),
    }
    # car-major ravel of (frame, car) arrays is already (car, frame) ordered
    table = FrameTable(**cols)

    truth = {kind: np.zeros(len(table), dtype=bool) for kind in EVENT_KINDS}
    for ev in events:
        spans = [(ev["car"], ev["start"], ev["end"])]
        if "other_start" in ev:
            spans.append((ev["other"], ev["other_start"], ev["other_end"]))
        for c, lo, hi in spans:
            truth[ev["kind"]] |= (table.car == c) & (table.time >= lo) & (table.time < hi)
    return SynthResult(table, truth, events)


def write_citysim_csv(table, path):
    """Write a FrameTable in the raw CitySim layout (feet, mph)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frameNum", "carId", "carCenterXft", "carCenterYft", "headXft", "headYft",
                    "tailXft", "tailYft", "speed", "heading", "laneId"])
        for i in range(len(table)):
            w.writerow([
                int(table.frame[i]), int(table.car[i]),
                repr(float(table.x[i] / FT_TO_M)), repr(float(table.y[i] / FT_TO_M)),
                repr(float(table.head_x[i] / FT_TO_M)), repr(float(table.head_y[i] / FT_TO_M)),
                repr(float(table.tail_x[i] / FT_TO_M)), repr(float(table.tail_y[i] / FT_TO_M)),
                repr(float(table.speed[i] / MPH_TO_MS)), repr(float(table.heading[i])),
                int(table.lane[i]),
            ])
