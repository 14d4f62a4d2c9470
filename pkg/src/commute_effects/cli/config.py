"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments. Every key has a typed default; an
unknown key or an unparseable value is a configuration error. Lists are
comma-separated, campuses are ``name@x1,x2[,radius]`` separated by ``;``.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from ..ingest import BBox, StudyWindow
from ..trajectory import CampusSite, StopCriteria


class ConfigError(ValueError):
    pass


def _int(s: str) -> int:
    return int(s)


def _opt_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none", "auto") else int(s)


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN not allowed")
    return v


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _words(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _date(s: str) -> dt.date:
    return dt.date.fromisoformat(s.strip())


def _time(s: str) -> dt.time:
    return dt.time.fromisoformat(s.strip())


def _str(s: str) -> str:
    return s.strip()


def _campuses(s: str) -> tuple[CampusSite, ...]:
    out = []
    for item in s.split(";"):
        if not item.strip():
            continue
        name, _, coords = item.partition("@")
        vals = _floats(coords)
        if not name.strip() or len(vals) not in (2, 3):
            raise ValueError(f"campus must read name@x1,x2[,radius], got {item!r}")
        out.append(CampusSite(name.strip(), *vals))
    if not out:
        raise ValueError("at least one campus is required")
    if len({c.name for c in out}) != len(out):
        raise ValueError("campus names must be unique")
    return tuple(out)


def _bbox(s: str) -> BBox:
    v = _floats(s)
    if len(v) != 4:
        raise ValueError("bbox needs x1_min,x2_min,x1_max,x2_max")
    return BBox(*v)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if v is None:
        return "auto"
    if isinstance(v, tuple) and v and isinstance(v[0], CampusSite):
        return ";".join(f"{c.name}@{c.x1!r},{c.x2!r},{c.catchment_radius!r}" for c in v)
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, BBox):
        return f"{v.x1_min!r},{v.x2_min!r},{v.x1_max!r},{v.x2_max!r}"
    if isinstance(v, (dt.date, dt.time)):
        return v.isoformat()
    return repr(v) if isinstance(v, float) else str(v)


_SW = StudyWindow()
_SC = StopCriteria()

# key -> (parser, default, help)
KEYS: dict[str, tuple[Callable[[str], Any], Any, str]] = {
    "seed": (_opt_int, None, "master seed; required by every stochastic step"),
    "threads": (_int, 0, "numba worker threads (0 keeps the numba default)"),
    # files, relative to out_dir unless absolute
    "gps_csv": (_str, "gps.csv", "raw GPS CSV (written by simulate, read by map)"),
    "students_csv": (_str, "students.csv", "student CSV"),
    "homes_csv": (_str, "homes.csv", "student home coordinates: student_id,x1,x2"),
    "oracle_csv": (_str, "oracle.csv", "true lattice commuting times from the simulator"),
    # geography
    "utm_zone": (_int, 32, "UTM zone of the projected frame"),
    "bbox": (_bbox, BBox(507000.0, 5027000.0, 523000.0, 5039000.0), "study box in projected metres"),
    "campuses": (_campuses, (CampusSite("campus", 515000.0, 5033000.0),), "name@x1,x2[,radius];..."),
    "date_start": (_date, _SW.date_start, "first study day"),
    "date_end": (_date, _SW.date_end, "last study day"),
    "weekdays": (_words, tuple(str(d) for d in sorted(_SW.weekdays)), "weekday numbers, Monday = 0"),
    "arrival_start": (_time, _SW.arrival_start, "earliest campus arrival"),
    "arrival_end": (_time, _SW.arrival_end, "latest campus arrival"),
    "tz": (_str, _SW.tz, "civil time zone of the study"),
    # segmentation
    **{f"stop.{k}": (_float, v, "stop criterion override") for k, v in _SC.__dict__.items()},
    "max_accuracy": (_float, 1500.0, "journeys with any fix at or above this accuracy are dropped"),
    "min_points": (_int, 6, "minimum points per journey"),
    # kernel regression
    "k_frac_grid": (_floats, (0.005, 0.01, 0.02, 0.05), "candidate neighbour fractions"),
    "c_grid": (_floats, (0.25, 1.0 / 3.0, 0.5, 1.0, 2.0), "candidate kernel shape constants"),
    "test_frac": (_float, 0.15, "share of journeys held out for testing"),
    "map_spacing": (_float, 100.0, "map node spacing in metres"),
    "map_buffer": (_float, 1000.0, "map buffer around bbox in metres"),
    # simulation
    "n_journeys": (_int, 600, "simulated journeys"),
    "device_mix": (_float, 0.5, "share of iOS users"),
    "n_lines": (_int, 2, "transit lines in the synthetic city (0..2)"),
    "n_students": (_int, 500, "resident students"),
    "n_nonresident": (_int, 150, "non-resident students (no commute time)"),
    "n_programs": (_int, 20, "degree programs"),
    "dose_response": (_floats, (7.0, -2.0), "polynomial coefficients of GPA in commute hours"),
    "confounding_strength": (_float, 1.0, "home-location tilt strength"),
    "noise_sd": (_float, 2.0, "GPA residual SD"),
    "sigma_u": (_float, 0.5, "program intercept SD for GPA"),
    "pass_intercept": (_float, 1.2, "logit of passing for an average student"),
    "student_commute": (_str, "map", "'map': leave commute blank for effects to fill; 'oracle': true time"),
    # effects
    "effects_campus": (_str, "", "campus whose map fills commute times (default: first)"),
    "methods": (_words, ("EB", "EB_ml", "GLM", "FEM", "REM"), "weighting methods"),
    "degree": (_opt_int, None, "LMM polynomial degree, or auto for hold-out selection"),
    "max_degree": (_int, 10, "largest degree tried by auto selection"),
    "n_grid": (_int, 60, "treatment grid points"),
    "level": (_float, 0.90, "effect-curve band level"),
    "bootstrap": (_int, 0, "program-cluster bootstrap replicates for the bands (0: delta method)"),
    "loo": (_bool, True, "compute leave-one-out RMSE and accuracy"),
    "glmm": (_bool, True, "fit the pass/fail model on residents"),
}


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: v[1] for k, v in KEYS.items()})
    out_dir: Path = Path("out")

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        if key not in KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            self.values[key] = KEYS[key][0](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}") from None

    def path(self, key: str) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.out_dir / p

    @property
    def window(self) -> StudyWindow:
        try:
            return StudyWindow(self["date_start"], self["date_end"],
                               frozenset(int(d) for d in self["weekdays"]),
                               self["arrival_start"], self["arrival_end"], self["tz"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def criteria(self) -> StopCriteria:
        try:
            return StopCriteria(**{k: self[f"stop.{k}"] for k in _SC.__dict__})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def campus(self) -> CampusSite:
        name = self["effects_campus"]
        for c in self["campuses"]:
            if not name or c.name == name:
                return c
        raise ConfigError(f"effects_campus {name!r} is not among the configured campuses")

    def require_seed(self, step: str) -> int:
        if self["seed"] is None:
            raise ConfigError(f"{step} is stochastic: set 'seed' in the config or pass --seed")
        return int(self["seed"])

    def to_text(self) -> str:
        """Resolved configuration (paths as configured, so the text is location independent)."""
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in KEYS)


def parse_lines(lines: Iterable[str], cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    for no, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, val = s.partition("=")
        if not sep:
            raise ConfigError(f"line {no}: expected 'key = value', got {s!r}")
        cfg.set(key.strip(), val.strip())
    return cfg


def load_config(path: str | Path | None, overrides: Iterable[str] = ()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        parse_lines(text.splitlines(), cfg)
    parse_lines(overrides, cfg)
    return cfg


def documented_keys() -> str:
    return "".join(f"{k} = {_fmt(v[1])}    # {v[2]}\n" for k, v in KEYS.items())
