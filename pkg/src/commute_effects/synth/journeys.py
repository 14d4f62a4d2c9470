"""Simulated smartphone pings along shortest-time paths to the campus."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from zoneinfo import ZoneInfo

import numpy as np

from ..geodesy import utm_to_lonlat
from ..ingest import RawGpsRecord, StudyWindow
from .city import TravelOracle


@dataclass(frozen=True)
class PingModel:
    """Device sampling behaviour.

    iOS reports after ``ios_spacing`` meters of displacement, of which a
    fraction ``ios_keep`` reaches the dataset; Android reports every
    ``android_interval`` seconds. Position noise is Gaussian with per-axis SD
    ``noise_scale * accuracy``. With ``arrival_ping`` the phone reports on
    reaching the campus (a geofence trigger) and again after ``dwell``
    seconds; that stationary pair is what closes a journey with a stop.
    Without it only the device's own schedule continues at the campus.
    """

    ios_spacing: float = 50.0
    ios_keep: float = 0.15
    android_interval: float = 300.0
    android_jitter: float = 30.0
    ios_accuracy: tuple[float, float] = (5.0, 30.0)
    android_accuracy: tuple[float, float] = (10.0, 60.0)
    noise_scale: float = 0.5
    bad_fix_prob: float = 0.002
    dwell: tuple[float, float] = (60.0, 120.0)
    campus_interval: tuple[float, float] = (240.0, 360.0)
    arrival_ping: bool = True

    def __post_init__(self):
        if not (self.ios_spacing > 0 and self.android_interval > 0):
            raise ValueError("ping spacing and interval must be positive")
        if not 0 < self.ios_keep <= 1:
            raise ValueError("ios_keep must lie in (0, 1]")


@dataclass(frozen=True)
class Trip:
    """Ground truth for one simulated journey."""

    user_id: str
    device_type: str
    origin_node: int
    origin: tuple[float, float]
    depart_t: float
    arrive_t: float
    true_minutes: float


@dataclass
class SimulatedGps:
    records: list[RawGpsRecord]
    trips: list[Trip]

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def study_days(window: StudyWindow) -> list[dt.date]:
    days = []
    d = window.date_start
    while d <= window.date_end:
        if d.weekday() in window.weekdays:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def _path_profile(oracle: TravelOracle, node: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions, elapsed seconds and cumulative meters along the path to campus."""
    path = oracle.path(node)
    xy = oracle.nodes[path]
    elapsed = oracle.time_s[path[0]] - oracle.time_s[path]
    dist = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
    return xy, elapsed, dist


def _position_at(xy: np.ndarray, elapsed: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.column_stack([np.interp(t, elapsed, xy[:, 0]), np.interp(t, elapsed, xy[:, 1])])


def _time_at_distance(elapsed: np.ndarray, dist: np.ndarray, s: np.ndarray) -> np.ndarray:
    """First time the cumulative distance reaches ``s`` (paths may pause at stations)."""
    k = np.clip(np.searchsorted(dist, s, side="left"), 1, dist.size - 1)
    span = dist[k] - dist[k - 1]
    frac = np.where(span > 0, (s - dist[k - 1]) / np.where(span > 0, span, 1.0), 1.0)
    return elapsed[k - 1] + frac * (elapsed[k] - elapsed[k - 1])


def _journey_pings(oracle: TravelOracle, node: int, device: str, arrive: float,
                   model: PingModel, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
    """Ping times (epoch seconds) and true positions for one journey."""
    xy, elapsed, dist = _path_profile(oracle, node)
    total = float(elapsed[-1])
    depart = arrive - total
    if device == "iOS":
        n = int(dist[-1] // model.ios_spacing)
        s = (np.arange(1, n + 1) + rng.uniform(-0.2, 0.2, n)) * model.ios_spacing
        s = s[(s > 0) & (s < dist[-1])]
        s = s[rng.random(s.size) < model.ios_keep]
        t_move = _time_at_distance(elapsed, dist, s)
        d1 = rng.uniform(*model.dwell)
        t_stay = np.array([total + d1, total + d1 + rng.uniform(*model.campus_interval)])
    else:
        step = model.android_interval
        n = int(total // step) + 3
        ticks = np.arange(1, n + 1) * step + rng.uniform(-model.android_jitter, model.android_jitter, n)
        t_move = ticks[ticks < total]
        t_stay = ticks[ticks >= total][:2]
    if model.arrival_ping:
        d1 = rng.uniform(*model.dwell)
        t_stay = np.array([total, total + d1, total + d1 + rng.uniform(*model.campus_interval)])
    t_rel = np.concatenate([[0.0], np.sort(t_move), t_stay])
    pos = _position_at(xy, elapsed, np.minimum(t_rel, total))
    return depart + t_rel, pos, depart


def simulate_journeys(oracle: TravelOracle, n_journeys: int, device_mix: float = 0.5,
                      ping_model: PingModel = PingModel(), seed: int = 0,
                      window: StudyWindow = StudyWindow(), journeys_per_user: tuple[int, int] = (1, 3),
                      arrival_minutes: tuple[float, float] = (7 * 60 + 45, 9 * 60 + 15),
                      zone: int = 32, north: bool = True) -> SimulatedGps:
    """Commuters with a home lattice node each travel to the campus on distinct study days.

    ``device_mix`` is the share of iOS users. Users, their homes, devices and
    travel days come from the master seed; each user then draws pings from
    its own child stream, so results are identical however users are split.
    """
    if n_journeys < 0:
        raise ValueError("n_journeys must be non-negative")
    master = np.random.default_rng(seed)
    days = study_days(window)
    lo, hi = journeys_per_user
    hi = min(hi, len(days))
    counts = []
    while sum(counts) < n_journeys:
        counts.append(int(master.integers(lo, hi + 1)))
    if counts:
        counts[-1] -= sum(counts) - n_journeys
    n_users = len(counts)
    homes = master.integers(0, oracle.n_lattice, n_users)
    ios = master.random(n_users) < device_mix
    children = np.random.SeedSequence(seed).spawn(n_users)
    tz = ZoneInfo(window.tz)

    records: list[RawGpsRecord] = []
    trips: list[Trip] = []
    for u in range(n_users):
        rng = np.random.default_rng(children[u])
        uid = f"u{u:05d}"
        device = "iOS" if ios[u] else "Android"
        chosen = sorted(rng.choice(len(days), size=counts[u], replace=False))
        node = int(homes[u])
        for di in chosen:
            minute = rng.uniform(*arrival_minutes)
            local = dt.datetime.combine(days[di], dt.time(0, 0), tzinfo=tz) + dt.timedelta(minutes=minute)
            arrive = local.timestamp()
            t, pos, depart = _journey_pings(oracle, node, device, arrive, ping_model, rng)
            lo_acc, hi_acc = ping_model.ios_accuracy if device == "iOS" else ping_model.android_accuracy
            acc = rng.uniform(lo_acc, hi_acc, t.size)
            bad = rng.random(t.size) < ping_model.bad_fix_prob
            acc[bad] = rng.uniform(1500.0, 3000.0, int(bad.sum()))
            noisy = pos + rng.normal(size=pos.shape) * (ping_model.noise_scale * acc)[:, None]
            lon, lat = utm_to_lonlat(noisy[:, 0], noisy[:, 1], zone, north)
            for k in range(t.size):
                records.append(RawGpsRecord(uid, device, int(round(t[k])), float(lon[k]),
                                            float(lat[k]), round(float(acc[k]), 1)))
            tt = float(oracle.time_s[node])
            trips.append(Trip(uid, device, node, tuple(map(float, oracle.nodes[node])), depart, arrive,
                              tt / 60.0))
    return SimulatedGps(records, trips)
