"""Kinematic and surrogate-safety features.

Heading convention: 0 deg points along +x and angles grow counter-clockwise,
so a vehicle with speed ``s`` and heading ``h`` moves with velocity
``s * (cos h, sin h)``. Lateral quantities are measured along the left
perpendicular ``(-sin h, cos h)``.

Two-dimensional TTC between vehicles i and j uses the relative velocity
``dv = v_i - v_j``. The distance to collision is the center-to-center
displacement from i to j projected on ``dv / |dv|`` (optionally reduced by
both vehicles' half-lengths along that direction); TTC is that distance over
``|dv|`` when positive and infinite otherwise.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import MissingFeature, TooShort

DEFAULT_RADIUS = 50.0
DEFAULT_CAP = 300.0
DEFAULT_WINDOW = 3
CRITICAL_TTC = 1.0
LANE_HALF_WIDTH = 1.8

# Feature columns per setting; edit here to try other combinations.
SETTINGS = {
    "S1": ("x", "y", "speed", "heading"),
    "S2": ("x", "y", "speed", "heading", "a_long", "a_lat", "distance"),
    "S3": ("x", "y", "speed", "heading", "ttc2d"),
}

_CLAMPED = ("distance", "ttc2d", "ttc")


@dataclass(frozen=True)
class Kinematics:
    velocity: tuple[float, float]
    accel: tuple[float, float]
    a_long: float
    a_lat: float


@dataclass(frozen=True)
class SafetyMeasures:
    distance: float
    ttc: float
    ttc2d: float
    neighbor: int | None


def heading_unit(heading):
    theta = np.radians(heading)
    return np.cos(theta), np.sin(theta)


def velocity_vector(f):
    c, s = heading_unit(f.heading)
    return np.array([f.speed * c, f.speed * s])


def moving_average(values, window):
    """Centered moving average along axis 0; the window shrinks at the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    values = np.asarray(values, dtype=float)
    if window == 1:
        return values.copy()
    kernel = np.ones(window)
    n, h = len(values), window // 2
    # full convolution sliced to the centre; mode="same" misbehaves when n < window
    smooth = lambda v: np.convolve(v, kernel)[h:h + n]
    counts = smooth(np.ones(n))
    if values.ndim == 1:
        return smooth(values) / counts
    out = np.empty_like(values)
    for k in range(values.shape[1]):
        out[:, k] = smooth(values[:, k]) / counts
    return out


def track_kinematics(time, speed, heading, window=DEFAULT_WINDOW):
    """Velocity and acceleration arrays for one time-ordered track.

    Returns a dict with ``vx, vy, ax, ay, a_long, a_lat``. Acceleration is the
    finite difference of the velocity vector in time (central inside, one-sided
    at both ends), then smoothed with a centered moving average.
    """
    time = np.asarray(time, dtype=float)
    if len(time) < 2:
        raise TooShort("acceleration needs at least two frames")
    c, s = heading_unit(np.asarray(heading, dtype=float))
    speed = np.asarray(speed, dtype=float)
    vel = np.column_stack((speed * c, speed * s))
    acc = np.gradient(vel, time, axis=0, edge_order=1)
    acc = moving_average(acc, window)
    a_long = acc[:, 0] * c + acc[:, 1] * s
    a_lat = -acc[:, 0] * s + acc[:, 1] * c
    return {"vx": vel[:, 0], "vy": vel[:, 1], "ax": acc[:, 0], "ay": acc[:, 1],
            "a_long": a_long, "a_lat": a_lat}


def acceleration(track, i, window=DEFAULT_WINDOW):
    """Kinematics of the ``i``-th frame (position in the track) of ``track``."""
    frames = track.frames
    if len(frames) < 2:
        raise TooShort(f"track {track.car} has {len(frames)} frame(s)")
    k = track_kinematics([f.time for f in frames], [f.speed for f in frames],
                         [f.heading for f in frames], window)
    return Kinematics(
        velocity=(float(k["vx"][i]), float(k["vy"][i])),
        accel=(float(k["ax"][i]), float(k["ay"][i])),
        a_long=float(k["a_long"][i]),
        a_lat=float(k["a_lat"][i]),
    )


def nearest_distance(f, same_frame):
    best = math.inf
    for g in same_frame:
        if g is f or g.car == f.car:
            continue
        best = min(best, math.hypot(g.center[0] - f.center[0], g.center[1] - f.center[1]))
    return best


def ttc_classic(gap, v_follow, v_lead):
    closing = v_follow - v_lead
    if closing <= 0:
        return math.inf
    return gap / closing


def pairwise_safety(x, y, vx, vy, axis_x, axis_y, half_len, radius=DEFAULT_RADIUS,
                    subtract_half_lengths=False, lane_half_width=LANE_HALF_WIDTH):
    """Safety measures for every vehicle of one frame against all the others.

    ``axis_x, axis_y`` is each vehicle's unit body axis (tail to head) and
    ``half_len`` half its length. Returns ``(distance, ttc, ttc2d, neighbor)``
    where ``neighbor`` is the index minimising ``ttc2d`` (-1 if none is finite).
    """
    n = len(x)
    dx = x[None, :] - x[:, None]
    dy = y[None, :] - y[:, None]
    dist = np.hypot(dx, dy)
    np.fill_diagonal(dist, np.inf)
    distance = dist.min(axis=1) if n > 1 else np.full(n, np.inf)

    dvx = vx[:, None] - vx[None, :]
    dvy = vy[:, None] - vy[None, :]
    rel = np.hypot(dvx, dvy)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        ux = dvx / rel
        uy = dvy / rel
        proj = dx * ux + dy * uy
        dtc = proj
        if subtract_half_lengths:
            ext_i = half_len[:, None] * np.abs(axis_x[:, None] * ux + axis_y[:, None] * uy)
            ext_j = half_len[None, :] * np.abs(axis_x[None, :] * ux + axis_y[None, :] * uy)
            dtc = proj - ext_i - ext_j
        t2d = dtc / rel
    ok = (rel > 0) & (proj > 0) & (dtc > 0) & (dist <= radius)
    t2d = np.where(ok, t2d, np.inf)
    if n > 1:
        neighbor = np.argmin(t2d, axis=1)
        ttc2d = t2d[np.arange(n), neighbor]
        neighbor = np.where(np.isfinite(ttc2d), neighbor, -1)
    else:
        ttc2d = np.full(n, np.inf)
        neighbor = np.full(n, -1)

    # classic TTC against the nearest vehicle ahead along the own heading
    spd = np.hypot(vx, vy)
    moving = spd > 0
    hx = np.where(moving, vx / np.where(moving, spd, 1.0), axis_x)
    hy = np.where(moving, vy / np.where(moving, spd, 1.0), axis_y)
    lon = dx * hx[:, None] + dy * hy[:, None]
    lat = -dx * hy[:, None] + dy * hx[:, None]
    ahead = (lon > 0) & (np.abs(lat) < lane_half_width) & (dist <= radius)
    lon_gap = np.where(ahead, lon, np.inf)
    ttc = np.full(n, np.inf)
    if n > 1:
        lead = np.argmin(lon_gap, axis=1)
        has = np.isfinite(lon_gap[np.arange(n), lead])
        v_f = vx * hx + vy * hy
        v_l = vx[lead] * hx + vy[lead] * hy
        closing = v_f - v_l
        gap = lon_gap[np.arange(n), lead]
        with np.errstate(invalid="ignore", divide="ignore"):
            ttc = np.where(has & (closing > 0), gap / closing, np.inf)
    return distance, ttc, ttc2d, neighbor


def _body(f):
    ax, ay = f.head[0] - f.tail[0], f.head[1] - f.tail[1]
    length = math.hypot(ax, ay)
    if length == 0:
        c, s = heading_unit(f.heading)
        return float(c), float(s), 0.0
    return ax / length, ay / length, length / 2


def ttc_2d(f, candidates, radius=DEFAULT_RADIUS, subtract_half_lengths=False):
    """Minimum two-dimensional TTC of ``f`` over ``candidates`` (same frame)."""
    others = [g for g in candidates if g.car != f.car]
    vehicles = [f] + others
    vel = np.array([velocity_vector(g) for g in vehicles])
    body = np.array([_body(g) for g in vehicles])
    distance, ttc, ttc2d, neighbor = pairwise_safety(
        np.array([g.center[0] for g in vehicles]),
        np.array([g.center[1] for g in vehicles]),
        vel[:, 0], vel[:, 1], body[:, 0], body[:, 1], body[:, 2],
        radius=radius, subtract_half_lengths=subtract_half_lengths,
    )
    nb = int(neighbor[0])
    return SafetyMeasures(
        distance=float(distance[0]),
        ttc=float(ttc[0]),
        ttc2d=float(ttc2d[0]),
        neighbor=vehicles[nb].car if nb >= 0 else None,
    )


def is_critical(ttc, horizon=CRITICAL_TTC):
    return ttc < horizon

def _first_per_owner(owner, other, key, n):
    """For each owner the (key, other) with the smallest key; ties go to the lower other."""
    best_key = np.full(n, np.inf)
    best_other = np.full(n, -1, dtype=np.int64)
    keep = np.isfinite(key)
    owner, other, key = owner[keep], other[keep], key[keep]
    if owner.size == 0:
        return best_key, best_other
    order = np.lexsort((other, key, owner))
    owner, other, key = owner[order], other[order], key[order]
    first = np.ones(owner.size, dtype=bool)
    first[1:] = owner[1:] != owner[:-1]
    best_key[owner[first]] = key[first]
    best_other[owner[first]] = other[first]
    return best_key, best_other


def sparse_safety(x, y, vx, vy, axis_x, axis_y, half_len, radius=DEFAULT_RADIUS,
                  subtract_half_lengths=False, lane_half_width=LANE_HALF_WIDTH):
    """Same result as :func:`pairwise_safety`, using a KD-tree for the radius search.

    Cost grows with the number of pairs inside ``radius`` rather than n^2.
    """
    n = len(x)
    if n < 2:
        return (np.full(n, np.inf), np.full(n, np.inf), np.full(n, np.inf),
                np.full(n, -1, dtype=np.int64))
    pts = np.column_stack((x, y))
    tree = cKDTree(pts)
    distance = tree.query(pts, k=2)[0][:, 1]
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if pairs.size == 0:
        return (distance, np.full(n, np.inf), np.full(n, np.inf),
                np.full(n, -1, dtype=np.int64))
    # both directions: owner i looks at other j
    i = np.concatenate((pairs[:, 0], pairs[:, 1]))
    j = np.concatenate((pairs[:, 1], pairs[:, 0]))
    dx = x[j] - x[i]
    dy = y[j] - y[i]
    dvx = vx[i] - vx[j]
    dvy = vy[i] - vy[j]
    rel = np.hypot(dvx, dvy)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        ux = dvx / rel
        uy = dvy / rel
        proj = dx * ux + dy * uy
        dtc = proj
        if subtract_half_lengths:
            dtc = (proj - half_len[i] * np.abs(axis_x[i] * ux + axis_y[i] * uy)
                   - half_len[j] * np.abs(axis_x[j] * ux + axis_y[j] * uy))
        t2d = dtc / rel
    ok = (rel > 0) & (proj > 0) & (dtc > 0)
    ttc2d, neighbor = _first_per_owner(i, j, np.where(ok, t2d, np.inf), n)

    spd = np.hypot(vx, vy)
    moving = spd > 0
    hx = np.where(moving, vx / np.where(moving, spd, 1.0), axis_x)
    hy = np.where(moving, vy / np.where(moving, spd, 1.0), axis_y)
    lon = dx * hx[i] + dy * hy[i]
    lat = -dx * hy[i] + dy * hx[i]
    ahead = (lon > 0) & (np.abs(lat) < lane_half_width)
    gap, lead = _first_per_owner(i, j, np.where(ahead, lon, np.inf), n)
    has = lead >= 0
    lead = np.maximum(lead, 0)
    closing = (vx * hx + vy * hy) - (vx[lead] * hx + vy[lead] * hy)
    with np.errstate(invalid="ignore", divide="ignore"):
        ttc = np.where(has & (closing > 0), gap / closing, np.inf)
    return distance, ttc, ttc2d, neighbor


def compute_features(table, window=DEFAULT_WINDOW, radius=DEFAULT_RADIUS,
                     subtract_half_lengths=False):
    """All per-row features for a :class:`~ssmhelm.ingest.FrameTable`.

    Returns a dict of arrays aligned with the table rows: ``vx, vy, ax, ay,
    a_long, a_lat, distance, ttc, ttc2d, neighbor`` (neighbor is a car id,
    -1 when no finite 2DTTC exists). Single-frame tracks get zero acceleration.
    """
    n = len(table)
    out = {k: np.zeros(n) for k in ("vx", "vy", "ax", "ay", "a_long", "a_lat")}
    for _, sl in table.track_slices():
        if sl.stop - sl.start < 2:
            c, s = heading_unit(table.heading[sl])
            out["vx"][sl] = table.speed[sl] * c
            out["vy"][sl] = table.speed[sl] * s
            continue
        k = track_kinematics(table.time[sl], table.speed[sl], table.heading[sl], window)
        for name, arr in k.items():
            out[name][sl] = arr

    ax_len = np.hypot(table.head_x - table.tail_x, table.head_y - table.tail_y)
    c, s = heading_unit(table.heading)
    safe = np.where(ax_len > 0, ax_len, 1.0)
    axis_x = np.where(ax_len > 0, (table.head_x - table.tail_x) / safe, c)
    axis_y = np.where(ax_len > 0, (table.head_y - table.tail_y) / safe, s)
    half_len = ax_len / 2

    distance = np.full(n, np.inf)
    ttc = np.full(n, np.inf)
    ttc2d = np.full(n, np.inf)
    neighbor = np.full(n, -1, dtype=np.int64)
    order = np.argsort(table.frame, kind="stable")
    frames = table.frame[order]
    bounds = np.flatnonzero(np.diff(frames)) + 1
    for idx in np.split(order, bounds):
        if len(idx) == 0:
            continue
        d, t, t2, nb = sparse_safety(
            table.x[idx], table.y[idx], out["vx"][idx], out["vy"][idx],
            axis_x[idx], axis_y[idx], half_len[idx], radius=radius,
            subtract_half_lengths=subtract_half_lengths,
        )
        distance[idx] = d
        ttc[idx] = t
        ttc2d[idx] = t2
        neighbor[idx] = np.where(nb >= 0, table.car[idx][np.maximum(nb, 0)], -1)
    out.update(distance=distance, ttc=ttc, ttc2d=ttc2d, neighbor=neighbor)
    return out


@dataclass
class FeatureMatrix:
    setting: str
    names: tuple[str, ...]
    values: np.ndarray
    frame: np.ndarray
    car: np.ndarray

    @property
    def shape(self):
        return self.values.shape


TTC_ENCODINGS = ("clamp", "inverse", "log")
TTC_FLOOR = 0.1


def encode_ttc(ttc, encoding="clamp", cap=DEFAULT_CAP, floor=TTC_FLOOR):
    """Finite encoding of a TTC column.

    ``clamp`` is ``min(ttc, cap)``. ``inverse`` is ``1 / clip(ttc, floor, cap)``,
    which keeps no-conflict rows near zero and spreads out the short TTCs.
    ``log`` is ``ln(clip(ttc, floor, cap))``, giving every decade the same width.
    """
    ttc = np.asarray(ttc, dtype=float)
    if encoding == "clamp":
        return np.minimum(ttc, cap)
    if encoding == "inverse":
        return 1.0 / np.clip(ttc, floor, cap)
    if encoding == "log":
        return np.log(np.clip(ttc, floor, cap))
    raise ValueError(f"unknown ttc encoding {encoding!r}")


def assemble(table, feats, setting, cap=DEFAULT_CAP, settings=None, ttc_encoding="clamp"):
    """Stack the columns of ``setting`` into a finite N x k matrix.

    ``distance`` and the TTC columns are clamped to ``cap`` so that infinite
    sentinels become finite; ``ttc_encoding="inverse"`` maps the TTC columns
    through :func:`encode_ttc` instead. Raises :class:`MissingFeature` when a
    column the setting needs is neither a table column nor in ``feats``.
    """
    names = (settings or SETTINGS)[setting]
    base = {"x": table.x, "y": table.y, "speed": table.speed, "heading": table.heading}
    cols = []
    for name in names:
        if name in base:
            col = np.asarray(base[name], dtype=float)
        elif feats is not None and name in feats:
            col = np.asarray(feats[name], dtype=float)
        else:
            raise MissingFeature(f"setting {setting} needs feature {name!r}")
        if name in ("ttc", "ttc2d"):
            col = encode_ttc(col, ttc_encoding, cap)
        elif name in _CLAMPED:
            col = np.minimum(col, cap)
        cols.append(col)
    values = np.column_stack(cols) if cols else np.empty((len(table), 0))
    if not np.all(np.isfinite(values)):
        raise MissingFeature(f"setting {setting}: non-finite values after clamping")
    return FeatureMatrix(setting, tuple(names), values, table.frame.copy(), table.car.copy())
