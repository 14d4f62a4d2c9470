"""Raw GPS CSV parsing, UTM projection and study-window filtering."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .geodesy import ProjectionError, project_to_utm, utm_to_lonlat

log = logging.getLogger(__name__)

GPS_HEADER = ("user_id", "device_type", "timestamp", "longitude", "latitude", "accuracy")
DEVICE_TYPES = {"android": "Android", "ios": "iOS"}


class SchemaError(ValueError):
    """Input file does not follow the declared CSV schema."""


@dataclass(frozen=True)
class RawGpsRecord:
    user_id: str
    device_type: str
    timestamp: int
    longitude: float
    latitude: float
    accuracy: float


@dataclass(frozen=True)
class GpsPoint:
    user_id: str
    device_type: str
    t: int
    x1: float
    x2: float
    accuracy: float


@dataclass(frozen=True)
class BBox:
    """Closed axis-aligned rectangle in projected metres."""

    x1_min: float
    x2_min: float
    x1_max: float
    x2_max: float

    def __post_init__(self):
        if not (self.x1_min <= self.x1_max and self.x2_min <= self.x2_max):
            raise ValueError(f"malformed bounding box {self}")

    def contains(self, x1: float, x2: float) -> bool:
        return self.x1_min <= x1 <= self.x1_max and self.x2_min <= x2 <= self.x2_max

    def expand(self, buffer: float) -> "BBox":
        return BBox(self.x1_min - buffer, self.x2_min - buffer,
                    self.x1_max + buffer, self.x2_max + buffer)

    def distance_to(self, x1: float, x2: float) -> float:
        d1 = max(self.x1_min - x1, 0.0, x1 - self.x1_max)
        d2 = max(self.x2_min - x2, 0.0, x2 - self.x2_max)
        return math.hypot(d1, d2)

    @property
    def width(self) -> float:
        return self.x1_max - self.x1_min

    @property
    def height(self) -> float:
        return self.x2_max - self.x2_min


@dataclass(frozen=True)
class StudyWindow:
    """Calendar and time-of-day window, evaluated in local civil time ``tz``.

    ``weekdays`` uses Python's convention (Monday = 0).
    """

    date_start: dt.date = dt.date(2019, 12, 1)
    date_end: dt.date = dt.date(2019, 12, 20)
    weekdays: frozenset = field(default_factory=lambda: frozenset(range(5)))
    arrival_start: dt.time = dt.time(7, 30)
    arrival_end: dt.time = dt.time(9, 30)
    tz: str = "Europe/Rome"

    def __post_init__(self):
        if self.date_start > self.date_end:
            raise ValueError("date_start must not follow date_end")
        if not self.arrival_start < self.arrival_end:
            raise ValueError("arrival_start must precede arrival_end")

    def local(self, t: float) -> dt.datetime:
        return dt.datetime.fromtimestamp(t, ZoneInfo(self.tz))

    def day_ok(self, t: float) -> bool:
        d = self.local(t)
        return self.date_start <= d.date() <= self.date_end and d.weekday() in self.weekdays

    def arrival_ok(self, t: float) -> bool:
        tod = self.local(t).time()
        return self.arrival_start <= tod <= self.arrival_end


@dataclass
class ParseResult:
    records: list[RawGpsRecord]
    skipped: int

    def __iter__(self):
        return iter((self.records, self.skipped))


def _parse_row(row: Sequence[str]) -> RawGpsRecord:
    if len(row) != len(GPS_HEADER):
        raise ValueError("wrong field count")
    user_id, device, ts, lon, lat, acc = (s.strip() for s in row)
    if not user_id:
        raise ValueError("empty user id")
    device_type = DEVICE_TYPES[device.lower()]
    timestamp = int(ts)
    lon_f, lat_f, acc_f = float(lon), float(lat), float(acc)
    if not (timestamp > 0 and acc_f > 0 and math.isfinite(acc_f)):
        raise ValueError("timestamp/accuracy out of range")
    if not (-180.0 <= lon_f <= 180.0 and -90.0 < lat_f < 90.0):
        raise ValueError("coordinates out of range")
    return RawGpsRecord(user_id, device_type, timestamp, lon_f, lat_f, acc_f)


def parse_gps_csv(path: str | Path) -> ParseResult:
    """Read a GPS CSV; malformed rows are skipped and counted.

    Raises ``FileNotFoundError`` for a missing file and :class:`SchemaError`
    when the header differs from ``GPS_HEADER``.
    """
    path = Path(path)
    records: list[RawGpsRecord] = []
    skipped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != GPS_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(GPS_HEADER)}, got {header}")
        for row in reader:
            if not row:
                continue
            try:
                records.append(_parse_row(row))
            except (ValueError, KeyError):
                skipped += 1
    if skipped:
        log.info("%s: skipped %d malformed rows", path, skipped)
    return ParseResult(records, skipped)


def write_gps_csv(path: str | Path, records: Iterable[RawGpsRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GPS_HEADER)
        for r in records:
            w.writerow([r.user_id, r.device_type.lower(), r.timestamp,
                        repr(r.longitude), repr(r.latitude), repr(r.accuracy)])


def project_records(records: Sequence[RawGpsRecord], zone: int = 32,
                    north: bool = True) -> list[GpsPoint]:
    """Project every record; order is preserved."""
    if not records:
        return []
    lon = np.array([r.longitude for r in records])
    lat = np.array([r.latitude for r in records])
    x1, x2 = project_to_utm(lon, lat, zone, north)
    x1 = np.atleast_1d(x1)
    x2 = np.atleast_1d(x2)
    return [GpsPoint(r.user_id, r.device_type, r.timestamp, float(a), float(b), r.accuracy)
            for r, a, b in zip(records, x1, x2)]


def filter_window(points: Iterable[GpsPoint], window: StudyWindow, bbox: BBox) -> list[GpsPoint]:
    """Keep points on an in-window weekday that fall inside the closed ``bbox``.

    The arrival time-of-day is a journey-level constraint and is not applied here.
    """
    return [p for p in points if bbox.contains(p.x1, p.x2) and window.day_ok(p.t)]


__all__ = [
    "BBox", "GPS_HEADER", "GpsPoint", "ParseResult", "ProjectionError", "RawGpsRecord",
    "SchemaError", "StudyWindow", "filter_window", "parse_gps_csv", "project_records",
    "project_to_utm", "utm_to_lonlat", "write_gps_csv",
]
