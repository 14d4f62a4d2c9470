"""Stop detection, journey segmentation, campus filtering and commute labels."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import GpsPoint, StudyWindow

STOP = True
MOVE = False

SAMPLE_HEADER = ("journey_id", "user_id", "t", "x1", "x2", "y_minutes")


@dataclass(frozen=True)
class StopCriteria:
    """Thresholds flagging a point as a stop. Gaps in minutes, speeds in m/s."""

    global_zero_distance: float = 0.0
    global_min_gap: float = 60.0
    global_max_speed: float = 0.7
    android_max_gap: float = 15.0
    android_max_speed: float = 1.0
    ios_max_distance: float = 100.0
    ios_max_speed: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class CampusSite:
    name: str
    x1: float
    x2: float
    catchment_radius: float = 250.0

    def __post_init__(self):
        if not self.catchment_radius > 0:
            raise ValueError("catchment_radius must be positive")

    def distance(self, x1: float, x2: float) -> float:
        return math.hypot(x1 - self.x1, x2 - self.x2)

    def within(self, x1: float, x2: float, radius: float | None = None) -> bool:
        r = self.catchment_radius if radius is None else radius
        return self.distance(x1, x2) <= r


@dataclass(frozen=True)
class Journey:
    user_id: str
    points: tuple[GpsPoint, ...]
    length_m: float = field(init=False)

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a journey needs at least two points")
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("journey timestamps must be strictly increasing")
        length = sum(math.hypot(b.x1 - a.x1, b.x2 - a.x2)
                     for a, b in zip(self.points, self.points[1:]))
        object.__setattr__(self, "length_m", length)

    @property
    def arrival_t(self) -> int:
        return self.points[-1].t

    @property
    def journey_id(self) -> str:
        # unique per user because timestamps within a user stream are distinct
        return f"{self.user_id}@{self.arrival_t}"

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class LabeledSample:
    x1: float
    x2: float
    y: float
    journey_id: str
    user_id: str
    t: int = 0


def pair_kinematics(a: GpsPoint, b: GpsPoint) -> tuple[float, float, float]:
    """Planar distance (m), elapsed time (s) and mean speed (m/s) from a to b."""
    dt = b.t - a.t
    if dt <= 0:
        raise ValueError(f"non-positive time step {dt} s between consecutive points")
    dx = math.hypot(b.x1 - a.x1, b.x2 - a.x2)
    return dx, float(dt), dx / dt


def deduplicate(points: Sequence[GpsPoint]) -> tuple[list[GpsPoint], int]:
    """Sort one user's points by time, keeping the most accurate of equal timestamps.

    Ties in accuracy keep the earliest point in input order.
    """
    order = sorted(range(len(points)), key=lambda i: (points[i].t, points[i].accuracy, i))
    out: list[GpsPoint] = []
    for i in order:
        if out and out[-1].t == points[i].t:
            continue
        out.append(points[i])
    return out, len(points) - len(out)


def group_by_user(points: Iterable[GpsPoint]) -> dict[str, list[GpsPoint]]:
    groups: dict[str, list[GpsPoint]] = defaultdict(list)
    for p in points:
        groups[p.user_id].append(p)
    return dict(groups)


def detect_stops(points: Sequence[GpsPoint], criteria: StopCriteria = StopCriteria()) -> np.ndarray:
    """Flag each point of a single, time-sorted user stream as STOP (True) or MOVE.

    A point is a stop when, relative to its predecessor, any global rule fires
    (zero displacement, long gap, low speed) or its device-specific rule fires.
    The first point has no predecessor and is a stop by convention.
    """
    n = len(points)
    flags = np.ones(n, dtype=bool)
    if n < 2:
        return flags
    x1 = np.array([p.x1 for p in points])
    x2 = np.array([p.x2 for p in points])
    t = np.array([p.t for p in points], dtype=float)
    dev = np.array([p.device_type for p in points[1:]])
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("points must be strictly time-ordered (deduplicate first)")
    dx = np.hypot(np.diff(x1), np.diff(x2))
    v = dx / dt
    c = criteria
    stop = (dx <= c.global_zero_distance) | (dt > c.global_min_gap * 60.0) | (v < c.global_max_speed)
    stop |= (dev == "Android") & (dt < c.android_max_gap * 60.0) & (v < c.android_max_speed)
    stop |= (dev == "iOS") & (dx < c.ios_max_distance) & (v < c.ios_max_speed)
    flags[1:] = stop
    return flags


def segment_journeys(points: Sequence[GpsPoint], flags: Sequence[bool]) -> list[Journey]:
    """Split a user stream into maximal MOVE runs closed by one STOP point.

    Trailing MOVE points with no closing stop produce no journey.
    """
    if len(points) != len(flags):
        raise ValueError("flags must align with points")
    journeys: list[Journey] = []
    run: list[GpsPoint] = []
    for p, is_stop in zip(points, flags):
        if is_stop:
            if run:
                run.append(p)
                journeys.append(Journey(p.user_id, tuple(run)))
                run = []
        else:
            run.append(p)
    return journeys


def extract_journeys(points: Iterable[GpsPoint], criteria: StopCriteria = StopCriteria()
                     ) -> tuple[list[Journey], dict[str, int]]:
    """Deduplicate, sort, flag and segment every user's stream.

    Returns the journeys (users in sorted order) and point counts for attrition
    accounting: ``duplicates`` and ``outside_journeys``.
    """
    journeys: list[Journey] = []
    dup_total = 0
    outside = 0
    for user in sorted(groups := group_by_user(points)):
        pts, dups = deduplicate(groups[user])
        dup_total += dups
        found = segment_journeys(pts, detect_stops(pts, criteria))
        outside += len(pts) - sum(len(j) for j in found)
        journeys.extend(found)
    return journeys, {"duplicates": dup_total, "outside_journeys": outside}


REJECT_REASONS = ("destination", "min_points", "accuracy", "self_loop", "arrival_window")


def rejection_reason(journey: Journey, site: CampusSite, window: StudyWindow,
                     max_accuracy: float = 1500.0, min_points: int = 6) -> str | None:
    """First failing retention rule for a journey, or ``None`` when it is kept."""
    last = journey.points[-1]
    first = journey.points[0]
    if not site.within(last.x1, last.x2):
        return "destination"
    if len(journey) < min_points:
        return "min_points"
    if any(p.accuracy >= max_accuracy for p in journey.points):
        return "accuracy"
    if site.within(first.x1, first.x2):
        return "self_loop"
    if not window.arrival_ok(journey.arrival_t):
        return "arrival_window"
    return None


def filter_journeys(journeys: Iterable[Journey], site: CampusSite, window: StudyWindow,
                    max_accuracy: float = 1500.0, min_points: int = 6) -> list[Journey]:
    """Journeys ending in the campus catchment that pass the robustness filters."""
    return [j for j in journeys
            if rejection_reason(j, site, window, max_accuracy, min_points) is None]


def label_commute_times(journey: Journey) -> list[LabeledSample]:
    """Minutes from each point to the journey's final (arrival) point."""
    arrival = journey.arrival_t
    jid = journey.journey_id
    return [LabeledSample(p.x1, p.x2, (arrival - p.t) / 60.0, jid, journey.user_id, p.t)
            for p in journey.points]


def label_all(journeys: Iterable[Journey]) -> list[LabeledSample]:
    return [s for j in journeys for s in label_commute_times(j)]


@dataclass(frozen=True)
class JourneyStats:
    n_signals: int
    n_trajectories: int
    n_users: int
    signals_per_trajectory: tuple[float, float, float]
    km_per_trajectory: tuple[float, float, float]
    signals_per_user: tuple[float, float, float]
    trajectories_per_user: tuple[float, float, float]

    def rows(self) -> list[tuple[str, str]]:
        def rng(v):
            return f"[{v[0]:g}; {v[2]:g}] mean={v[1]:.4g}"
        return [
            ("n. signals", str(self.n_signals)),
            ("n. trajectories", str(self.n_trajectories)),
            ("n. signals per trajectory", rng(self.signals_per_trajectory)),
            ("distance per trajectory [km]", rng(self.km_per_trajectory)),
            ("n. unique anonymous users", str(self.n_users)),
            ("n. signals per anonymous user", rng(self.signals_per_user)),
            ("n. trajectories per anonymous user", rng(self.trajectories_per_user)),
        ]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.rows())


def _mmm(values: Sequence[float]) -> tuple[float, float, float]:
    if len(values) == 0:
        return (math.nan, math.nan, math.nan)
    arr = np.asarray(values, dtype=float)
    return (float(arr.min()), float(arr.mean()), float(arr.max()))


def journey_stats(journeys: Sequence[Journey]) -> JourneyStats:
    """Descriptive statistics of a journey collection (signals, lengths, users)."""
    per_user_sig: dict[str, int] = defaultdict(int)
    per_user_traj: dict[str, int] = defaultdict(int)
    for j in journeys:
        per_user_sig[j.user_id] += len(j)
        per_user_traj[j.user_id] += 1
    return JourneyStats(
        n_signals=sum(len(j) for j in journeys),
        n_trajectories=len(journeys),
        n_users=len(per_user_sig),
        signals_per_trajectory=_mmm([len(j) for j in journeys]),
        km_per_trajectory=_mmm([j.length_m / 1000.0 for j in journeys]),
        signals_per_user=_mmm(list(per_user_sig.values())),
        trajectories_per_user=_mmm(list(per_user_traj.values())),
    )


def write_samples_csv(path: str | Path, samples: Iterable[LabeledSample]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_HEADER)
        for s in samples:
            w.writerow([s.journey_id, s.user_id, s.t, repr(s.x1), repr(s.x2), repr(s.y)])


def read_samples_csv(path: str | Path) -> list[LabeledSample]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SAMPLE_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [LabeledSample(float(r["x1"]), float(r["x2"]), float(r["y_minutes"]),
                              r["journey_id"], r["user_id"], int(r["t"])) for r in reader]
