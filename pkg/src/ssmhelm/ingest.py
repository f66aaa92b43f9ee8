"""Load CitySim-style trajectory CSVs and convert them to metric per-frame records.

Raw files carry positions in feet and speed in mph. Everything downstream works
in meters, m/s and seconds, with ``time = frame / fps``.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DuplicateObservation, MissingColumn, ParseError

log = logging.getLogger(__name__)

FT_TO_M = 0.3048
MPH_TO_MS = 0.44704
DEFAULT_FPS = 30.0

# internal field -> CSV header
DEFAULT_SCHEMA = {
    "frame": "frameNum",
    "car": "carId",
    "center_x": "carCenterXft",
    "center_y": "carCenterYft",
    "head_x": "headXft",
    "head_y": "headYft",
    "tail_x": "tailXft",
    "tail_y": "tailYft",
    "speed": "speed",
    "heading": "heading",
    "lane": "laneId",
}

_INT_FIELDS = ("frame", "car", "lane")


@dataclass(frozen=True)
class RawRecord:
    """One row of the raw dataset. Lengths in feet, speed in mph.

    A field is ``None`` when its cell was empty; :func:`clean` drops such rows.
    """

    frame: int | None
    car: int | None
    center_x: float | None
    center_y: float | None
    head_x: float | None
    head_y: float | None
    tail_x: float | None
    tail_y: float | None
    speed: float | None
    heading: float | None
    lane: int | None

    def is_complete(self):
        return all(getattr(self, f.name) is not None for f in fields(self))


@dataclass(frozen=True)
class TrackFrame:
    """One vehicle at one video frame, metric units."""

    frame: int
    car: int
    center: tuple[float, float]
    head: tuple[float, float]
    tail: tuple[float, float]
    speed: float
    heading: float
    lane: int
    time: float

    @property
    def length(self):
        return math.hypot(self.head[0] - self.tail[0], self.head[1] - self.tail[1])


@dataclass(frozen=True)
class Track:
    car: int
    frames: tuple[TrackFrame, ...]

    def __len__(self):
        return len(self.frames)


def load_schema(path):
    """Read a column-mapping override (JSON object: field -> header name).

    Keys not present in the file keep their default header.
    """
    with open(path, encoding="utf-8") as fh:
        override = json.load(fh)
    unknown = set(override) - set(DEFAULT_SCHEMA)
    if unknown:
        raise MissingColumn(f"unknown schema fields: {sorted(unknown)}")
    return {**DEFAULT_SCHEMA, **override}


def _parse_cell(text, name, line):
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(line, name, text) from None
    if not math.isfinite(value):
        raise ParseError(line, name, text)
    if name in _INT_FIELDS:
        if value != int(value):
            raise ParseError(line, name, text)
        return int(value)
    if name == "heading":
        value = value % 360.0
    return value


def load_csv(path, schema=None):
    """Read a trajectory CSV into a list of :class:`RawRecord`, in file order.

    Empty cells become ``None``. Non-numeric or non-finite cells raise
    :class:`ParseError` carrying the 1-based file line number. Headings are
    wrapped into [0, 360).
    """
    schema = DEFAULT_SCHEMA if schema is None else {**DEFAULT_SCHEMA, **schema}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MissingColumn(f"{path}: no header row")
        header = [h.strip() for h in header]
        positions = {}
        for name, column in schema.items():
            if column not in header:
                raise MissingColumn(f"{path}: header lacks column {column!r} (field {name})")
            positions[name] = header.index(column)

        records = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = {}
            for name, pos in positions.items():
                cell = row[pos] if pos < len(row) else ""
                values[name] = _parse_cell(cell, name, line)
            records.append(RawRecord(**values))
    return records


def clean(records):
    """Drop records with any missing field. Order is preserved."""
    records = list(records)
    kept = [r for r in records if r.is_complete()]
    dropped = len(records) - len(kept)
    if dropped:
        log.info("clean: dropped %d of %d records", dropped, len(records))
    return kept


def summary(rows_in, rows_out):
    return {"rows_in": rows_in, "rows_dropped": rows_in - rows_out, "rows_out": rows_out}


def to_metric(r, fps=DEFAULT_FPS):
    if fps <= 0:
        raise ValueError("fps must be positive")
    return TrackFrame(
        frame=r.frame,
        car=r.car,
        center=(r.center_x * FT_TO_M, r.center_y * FT_TO_M),
        head=(r.head_x * FT_TO_M, r.head_y * FT_TO_M),
        tail=(r.tail_x * FT_TO_M, r.tail_y * FT_TO_M),
        speed=r.speed * MPH_TO_MS,
        heading=r.heading,
        lane=r.lane,
        time=r.frame / fps,
    )


def to_raw(f):
    """Inverse of :func:`to_metric` (time is dropped)."""
    return RawRecord(
        frame=f.frame,
        car=f.car,
        center_x=f.center[0] / FT_TO_M,
        center_y=f.center[1] / FT_TO_M,
        head_x=f.head[0] / FT_TO_M,
        head_y=f.head[1] / FT_TO_M,
        tail_x=f.tail[0] / FT_TO_M,
        tail_y=f.tail[1] / FT_TO_M,
        speed=f.speed / MPH_TO_MS,
        heading=f.heading,
        lane=f.lane,
    )


def index_tracks(frames):
    """Group frames by car and by frame number.

    Returns ``(tracks, by_frame)`` where ``tracks`` maps car id to a time-sorted
    :class:`Track` and ``by_frame`` maps frame number to the list of
    observations in that frame. Exact duplicates are collapsed; a repeated
    (car, frame) pair with different fields raises :class:`DuplicateObservation`.
    """
    seen = {}
    for f in frames:
        key = (f.car, f.frame)
        prev = seen.get(key)
        if prev is None:
            seen[key] = f
        elif prev != f:
            raise DuplicateObservation(f"car {f.car} frame {f.frame} observed twice with different values")

    per_car = {}
    by_frame = {}
    for (car, frame), f in seen.items():
        per_car.setdefault(car, []).append(f)
        by_frame.setdefault(frame, []).append(f)
    tracks = {
        car: Track(car, tuple(sorted(fs, key=lambda f: f.frame)))
        for car, fs in sorted(per_car.items())
    }
    by_frame = {k: sorted(v, key=lambda f: f.car) for k, v in sorted(by_frame.items())}
    return tracks, by_frame


TABLE_COLUMNS = ("frame", "car", "lane", "x", "y", "head_x", "head_y",
                 "tail_x", "tail_y", "speed", "heading", "time")


@dataclass
class FrameTable:
    """Column-oriented view of many TrackFrames, sorted by (car, frame).

    This is the representation the vectorised feature code works on.
    """

    frame: np.ndarray
    car: np.ndarray
    lane: np.ndarray
    x: np.ndarray
    y: np.ndarray
    head_x: np.ndarray
    head_y: np.ndarray
    tail_x: np.ndarray
    tail_y: np.ndarray
    speed: np.ndarray
    heading: np.ndarray
    time: np.ndarray

    def __len__(self):
        return len(self.frame)

    @classmethod
    def from_frames(cls, frames):
        tracks, _ = index_tracks(frames)
        ordered = [f for t in tracks.values() for f in t.frames]
        cols = {
            "frame": np.array([f.frame for f in ordered], dtype=np.int64),
            "car": np.array([f.car for f in ordered], dtype=np.int64),
            "lane": np.array([f.lane for f in ordered], dtype=np.int64),
            "x": np.array([f.center[0] for f in ordered], dtype=float),
            "y": np.array([f.center[1] for f in ordered], dtype=float),
            "head_x": np.array([f.head[0] for f in ordered], dtype=float),
            "head_y": np.array([f.head[1] for f in ordered], dtype=float),
            "tail_x": np.array([f.tail[0] for f in ordered], dtype=float),
            "tail_y": np.array([f.tail[1] for f in ordered], dtype=float),
            "speed": np.array([f.speed for f in ordered], dtype=float),
            "heading": np.array([f.heading for f in ordered], dtype=float),
            "time": np.array([f.time for f in ordered], dtype=float),
        }
        return cls(**cols)

    @classmethod
    def from_columns(cls, columns):
        cols = {name: np.asarray(columns[name]) for name in TABLE_COLUMNS}
        for name in ("frame", "car", "lane"):
            cols[name] = cols[name].astype(np.int64)
        for name in TABLE_COLUMNS[3:]:
            cols[name] = cols[name].astype(float)
        order = np.lexsort((cols["frame"], cols["car"]))
        return cls(**{k: v[order] for k, v in cols.items()})

    def columns(self):
        return {name: getattr(self, name) for name in TABLE_COLUMNS}

    def take(self, rows):
        """Rows ``rows`` (ascending indices keep the (car, frame) order)."""
        rows = np.asarray(rows, dtype=np.int64)
        return FrameTable(**{name: getattr(self, name)[rows] for name in TABLE_COLUMNS})

    def to_frames(self):
        return [
            TrackFrame(
                frame=int(self.frame[i]), car=int(self.car[i]),
                center=(float(self.x[i]), float(self.y[i])),
                head=(float(self.head_x[i]), float(self.head_y[i])),
                tail=(float(self.tail_x[i]), float(self.tail_y[i])),
                speed=float(self.speed[i]), heading=float(self.heading[i]),
                lane=int(self.lane[i]), time=float(self.time[i]),
            )
            for i in range(len(self))
        ]

    def track_slices(self):
        """Yield ``(car, slice)`` for each contiguous per-car block."""
        if len(self) == 0:
            return
        bounds = np.flatnonzero(np.diff(self.car)) + 1
        starts = np.concatenate(([0], bounds))
        stops = np.concatenate((bounds, [len(self)]))
        for a, b in zip(starts, stops):
            yield int(self.car[a]), slice(int(a), int(b))


def read_table(path, fps=DEFAULT_FPS, schema=None):
    """load_csv -> clean -> to_metric, returning a FrameTable and the summary dict."""
    raw = load_csv(path, schema)
    kept = clean(raw)
    frames = [to_metric(r, fps) for r in kept]
    return FrameTable.from_frames(frames), summary(len(raw), len(kept))
