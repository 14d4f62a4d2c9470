"""Accessibility maps on a regular grid and nearest-node queries."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..ingest import BBox
from ..trajectory import CampusSite
from .estimator import BandwidthSpec, KreSampleSet, _as_set, predict

MAP_HEADER = ("x1", "x2", "t_hat_minutes")


class OutsideMapError(ValueError):
    def __init__(self, location, distance: float):
        super().__init__(f"location {tuple(location)} lies {distance:.1f} m outside the map box")
        self.distance = distance


@dataclass
class AccessibilityMap:
    """Commuting-time estimates on nodes ``origin + (i, j) * spacing``.

    ``values[i, j]`` belongs to the node at column ``i`` along x1 and row ``j``
    along x2, i.e. the array has shape ``(nx, ny)``.
    """

    origin: tuple[float, float]
    spacing: float
    nx: int
    ny: int
    values: np.ndarray
    campus: CampusSite
    bbox: BBox
    spec: BandwidthSpec | None = None
    data_hash: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.nx, self.ny):
            raise ValueError(f"values shape {self.values.shape} != ({self.nx}, {self.ny})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("map values must be finite")

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def node_coords(self) -> np.ndarray:
        """All node locations, shape ``(nx * ny, 2)``, in ``values`` C-order."""
        gx = self.origin[0] + self.spacing * np.arange(self.nx)
        gy = self.origin[1] + self.spacing * np.arange(self.ny)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def nearest_node(self, location) -> tuple[int, int]:
        x1, x2 = float(location[0]), float(location[1])
        if not self.bbox.contains(x1, x2):
            raise OutsideMapError((x1, x2), self.bbox.distance_to(x1, x2))
        # ceil(f - 1/2) rounds exact half-way positions down: ties go to the smaller index
        i = math.ceil((x1 - self.origin[0]) / self.spacing - 0.5)
        j = math.ceil((x2 - self.origin[1]) / self.spacing - 0.5)
        return min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1)

    def query(self, location) -> float:
        i, j = self.nearest_node(location)
        return float(self.values[i, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, AccessibilityMap):
            return NotImplemented
        return (self.origin == other.origin and self.spacing == other.spacing
                and self.nx == other.nx and self.ny == other.ny
                and np.array_equal(self.values, other.values) and self.campus == other.campus
                and self.bbox == other.bbox and self.spec == other.spec
                and self.data_hash == other.data_hash)

    def metadata(self) -> dict:
        return {
            "origin": list(self.origin),
            "spacing": self.spacing,
            "nx": self.nx,
            "ny": self.ny,
            "bbox": [self.bbox.x1_min, self.bbox.x2_min, self.bbox.x1_max, self.bbox.x2_max],
            "campus": {"name": self.campus.name, "x1": self.campus.x1, "x2": self.campus.x2,
                       "catchment_radius": self.campus.catchment_radius},
            "spec": None if self.spec is None else {"k_frac": self.spec.k_frac, "c": self.spec.c},
            "data_hash": self.data_hash,
        }


def build_map(samples, bbox: BBox, spacing: float = 100.0, buffer: float = 1000.0,
              spec: BandwidthSpec | None = None, campus: CampusSite | None = None,
              backend: str | None = None) -> AccessibilityMap:
    """Evaluate the estimator on a grid anchored at the buffered box's lower-left corner."""
    if spec is None:
        raise ValueError("a bandwidth spec is required")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if not (bbox.width > 0 and bbox.height > 0):
        raise ValueError("bounding box must be non-degenerate")
    s: KreSampleSet = _as_set(samples)
    box = bbox.expand(buffer)
    nx = int(math.floor(box.width / spacing + 1e-9)) + 1
    ny = int(math.floor(box.height / spacing + 1e-9)) + 1
    campus = campus or CampusSite("campus", 0.5 * (box.x1_min + box.x1_max),
                                  0.5 * (box.x2_min + box.x2_max))
    m = AccessibilityMap((box.x1_min, box.x2_min), float(spacing), nx, ny,
                         np.zeros((nx, ny)), campus, box, spec, s.digest())
    m.values = predict(s, m.node_coords(), spec, backend).reshape(nx, ny)
    return m


def query_map(amap: AccessibilityMap, location) -> float:
    """Estimated minutes at the grid node nearest to ``location``."""
    return amap.query(location)


def write_map(amap: AccessibilityMap, csv_path: str | Path, meta_path: str | Path | None = None) -> Path:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".meta.json")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MAP_HEADER)
        for (x1, x2), v in zip(amap.node_coords(), amap.values.ravel()):
            w.writerow([repr(float(x1)), repr(float(x2)), repr(float(v))])
    meta_path.write_text(json.dumps(amap.metadata(), indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    return meta_path


def read_map(csv_path: str | Path, meta_path: str | Path | None = None) -> AccessibilityMap:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != MAP_HEADER:
            raise ValueError(f"{csv_path}: unexpected header")
        rows = np.array([[float(v) for v in r] for r in reader if r]).reshape(-1, 3)
    c = meta["campus"]
    spec = meta.get("spec")
    amap = AccessibilityMap(
        origin=tuple(meta["origin"]), spacing=meta["spacing"], nx=meta["nx"], ny=meta["ny"],
        values=rows[:, 2].reshape(meta["nx"], meta["ny"]),
        campus=CampusSite(c["name"], c["x1"], c["x2"], c["catchment_radius"]),
        bbox=BBox(*meta["bbox"]),
        spec=None if spec is None else BandwidthSpec(spec["k_frac"], spec["c"]),
        data_hash=meta.get("data_hash", ""),
    )
    if not np.array_equal(amap.node_coords(), rows[:, :2]):
        raise ValueError(f"{csv_path}: node coordinates disagree with metadata")
    return amap
