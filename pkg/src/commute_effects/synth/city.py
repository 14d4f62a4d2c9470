"""Synthetic city: a walkable lattice plus fast transit lines, and its travel-time oracle.

Coordinates are UTM meters (zone 32 north by default) so that simulated
pings can be emitted as longitude/latitude and pass through the ordinary
ingest path unchanged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from ..ingest import BBox
from ..trajectory import CampusSite

PITCH = 100.0


@dataclass(frozen=True)
class TransitLine:
    """Polyline served by a fast line; stations every ``station_spacing`` meters."""

    vertices: tuple[tuple[float, float], ...]
    speed: float = 12.0
    station_spacing: float = 800.0

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValueError("a transit line needs at least two vertices")
        if not (self.speed > 0 and self.station_spacing > 0):
            raise ValueError("line speed and station spacing must be positive")

    def stations(self) -> np.ndarray:
        """Points at equal arc length along the polyline, both ends included."""
        v = np.asarray(self.vertices, float)
        seg = np.hypot(*np.diff(v, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        n = max(1, int(round(cum[-1] / self.station_spacing)))
        s = np.linspace(0.0, cum[-1], n + 1)
        return np.column_stack([np.interp(s, cum, v[:, 0]), np.interp(s, cum, v[:, 1])])


@dataclass(frozen=True)
class CityModel:
    bbox: BBox
    campus: CampusSite
    walk_speed: float = 3.0
    transit_lines: tuple[TransitLine, ...] = ()
    boarding_wait: float = 30.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.walk_speed > 0:
            raise ValueError("walk_speed must be positive")
        if not self.boarding_wait >= 0:
            raise ValueError("boarding_wait must be non-negative")
        if not self.bbox.contains(self.campus.x1, self.campus.x2):
            raise ValueError("campus must lie inside the city box")


def default_city(seed: int = 0, n_lines: int = 2) -> CityModel:
    """16 x 12 km city around Milan with up to two lines crossing at the campus."""
    bbox = BBox(507000.0, 5027000.0, 523000.0, 5039000.0)
    campus = CampusSite("campus", 515000.0, 5033000.0)
    lines = [
        TransitLine(((507500.0, 5033000.0), (522500.0, 5033000.0))),
        TransitLine(((509000.0, 5027500.0), (515000.0, 5033000.0), (520000.0, 5038500.0))),
    ][:n_lines]
    return CityModel(bbox, campus, transit_lines=tuple(lines), rng_seed=seed)


class DisconnectedError(ValueError):
    pass


@dataclass
class TravelOracle:
    """Shortest travel times (seconds) to the campus over the city graph.

    Nodes ``0 .. nx*ny-1`` are lattice points in row-major ``(i, j)`` order
    (``index = i * ny + j``); the rest are transit stations.
    """

    city: CityModel
    nodes: np.ndarray
    nx: int
    ny: int
    graph: sparse.csr_matrix
    campus_node: int
    time_s: np.ndarray
    predecessor: np.ndarray = field(repr=False)

    @property
    def n_lattice(self) -> int:
        return self.nx * self.ny

    @property
    def origin(self) -> tuple[float, float]:
        return self.city.bbox.x1_min, self.city.bbox.x2_min

    def lattice_xy(self) -> np.ndarray:
        return self.nodes[: self.n_lattice]

    def lattice_minutes(self) -> np.ndarray:
        return self.time_s[: self.n_lattice] / 60.0

    def path(self, node: int) -> list[int]:
        """Node sequence from ``node`` to the campus along the shortest-time tree."""
        out = [int(node)]
        while out[-1] != self.campus_node:
            nxt = int(self.predecessor[out[-1]])
            if nxt < 0:
                raise DisconnectedError(f"node {node} cannot reach the campus")
            out.append(nxt)
        return out

    def true_minutes(self, xy) -> np.ndarray:
        """Travel time from arbitrary points: best corner of the enclosing cell plus a walk."""
        xy = np.atleast_2d(np.asarray(xy, float))
        x0, y0 = self.origin
        fi = np.clip((xy[:, 0] - x0) / PITCH, 0, self.nx - 1)
        fj = np.clip((xy[:, 1] - y0) / PITCH, 0, self.ny - 1)
        i0 = np.minimum(np.floor(fi).astype(np.int64), self.nx - 2)
        j0 = np.minimum(np.floor(fj).astype(np.int64), self.ny - 2)
        best = np.full(xy.shape[0], np.inf)
        for di in (0, 1):
            for dj in (0, 1):
                idx = (i0 + di) * self.ny + (j0 + dj)
                d = np.hypot(xy[:, 0] - self.nodes[idx, 0], xy[:, 1] - self.nodes[idx, 1])
                best = np.minimum(best, self.time_s[idx] + d / self.city.walk_speed)
        return best / 60.0


def lattice_edges(nx: int, ny: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """8-connected lattice edges (each once) with their lengths in pitch units."""
    idx = np.arange(nx * ny).reshape(nx, ny)
    src, dst, length = [], [], []
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        a = idx[: nx - di, max(0, -dj): ny - max(0, dj)]
        b = idx[di:, max(0, dj): ny - max(0, -dj)]
        src.append(a.ravel())
        dst.append(b.ravel())
        length.append(np.full(a.size, math.hypot(di, dj)))
    return np.concatenate(src), np.concatenate(dst), np.concatenate(length)


def build_oracle(city: CityModel) -> TravelOracle:
    """Single-source shortest times to the campus (scipy Dijkstra on an undirected graph)."""
    bb = city.bbox
    nx = int(math.floor(bb.width / PITCH + 1e-9)) + 1
    ny = int(math.floor(bb.height / PITCH + 1e-9)) + 1
    if nx < 2 or ny < 2:
        raise ValueError("city box must span at least one lattice cell in each direction")
    gi, gj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    lattice = np.column_stack([bb.x1_min + gi.ravel() * PITCH, bb.x2_min + gj.ravel() * PITCH])
    s, d, ln = lattice_edges(nx, ny)
    src, dst, wt = [s], [d], [ln * PITCH / city.walk_speed]

    def nearest_lattice(p) -> int:
        i = int(np.clip(round((p[0] - bb.x1_min) / PITCH), 0, nx - 1))
        j = int(np.clip(round((p[1] - bb.x2_min) / PITCH), 0, ny - 1))
        return i * ny + j

    stations = []
    next_id = nx * ny
    for line in city.transit_lines:
        st = line.stations()
        st = st[[bb.contains(x, y) for x, y in st]]
        ids = np.arange(next_id, next_id + len(st))
        next_id += len(st)
        stations.append(st)
        if len(st) > 1:
            hop = np.hypot(*np.diff(st, axis=0).T) / line.speed
            src.append(ids[:-1])
            dst.append(ids[1:])
            wt.append(np.maximum(hop, 1e-3))
        for k, p in zip(ids, st):
            lat = nearest_lattice(p)
            walk = math.hypot(p[0] - lattice[lat, 0], p[1] - lattice[lat, 1]) / city.walk_speed
            # half the wait each way keeps the graph undirected; a transit ride pays it once
            src.append(np.array([k]))
            dst.append(np.array([lat]))
            wt.append(np.array([max(walk + 0.5 * city.boarding_wait, 1e-3)]))
    nodes = np.vstack([lattice, *stations]) if stations else lattice
    n = nodes.shape[0]
    src, dst, wt = np.concatenate(src), np.concatenate(dst), np.concatenate(wt)
    graph = sparse.coo_matrix((wt, (src, dst)), shape=(n, n)).tocsr()
    campus = nearest_lattice((city.campus.x1, city.campus.x2))
    times, pred = dijkstra(graph, directed=False, indices=campus, return_predecessors=True)
    if not np.all(np.isfinite(times)):
        bad = int(np.flatnonzero(~np.isfinite(times))[0])
        raise DisconnectedError(f"node {bad} at {nodes[bad].tolist()} cannot reach the campus")
    return TravelOracle(city, nodes, nx, ny, graph, campus, times, pred)


def write_oracle_csv(path: str | Path, oracle: TravelOracle) -> None:
    xy = oracle.lattice_xy()
    minutes = oracle.lattice_minutes()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "true_minutes"])
        for (x, y), m in zip(xy, minutes):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(m))])


def read_oracle_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]


def station_points(city: CityModel) -> np.ndarray:
    pts = [line.stations() for line in city.transit_lines]
    return np.vstack(pts) if pts else np.zeros((0, 2))

