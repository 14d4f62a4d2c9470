"""Pipeline stages behind the ``simulate``, ``map``, ``effects`` and ``report`` subcommands."""

from __future__ import annotations

import csv
import hashlib
import logging
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..balance import (EbConvergenceError, WeightVector, balance_report, eb_weights, fit_gps_model,
                       ipw_weights, read_students_csv, write_balance_csv, write_students_csv,
                       write_weights_csv)
from ..balance.records import StudentRecord
from ..ingest import filter_window, parse_gps_csv, project_records, write_gps_csv
from ..kre import build_map, query_map, read_map, tune_bandwidth, write_map
from ..kre.estimator import KreSampleSet
from ..kre.grid import OutsideMapError
from ..mixed import RankDeficientError
from ..outcome import (LmmSpec, SeparationError, cluster_bootstrap_curve, cohort_compare, effect_curve,
                       fit_glmm_binary, fit_lmm, loo_rmse, resident_groups, select_degree, write_compare_csv, write_curve_csv)
from ..synth import CityModel, CohortSpec, build_oracle, default_city, generate_cohort, simulate_journeys
from ..synth.city import write_oracle_csv
from ..trajectory import (REJECT_REASONS, extract_journeys, journey_stats, label_all, rejection_reason,
                          write_samples_csv)
from .config import ConfigError, RunConfig
from .svg import curves_svg, heatmap_svg

log = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
IPW_MODES = ("GLM", "FEM", "REM")


class DataError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


def _out(cfg: RunConfig) -> Path:
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        probe = cfg.out_dir / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {cfg.out_dir} is not writable: {exc}") from None
    return cfg.out_dir


def write_manifest(out_dir: Path) -> Path:
    """``sha256  relative/path`` for every file under ``out_dir`` except the manifest."""
    lines = []
    for p in sorted(q for q in out_dir.rglob("*") if q.is_file() and q.name != MANIFEST):
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        lines.append(f"{digest}  {p.relative_to(out_dir).as_posix()}\n")
    m = out_dir / MANIFEST
    m.write_text("".join(lines), encoding="utf-8")
    return m


def read_manifest(out_dir: Path) -> dict[str, str]:
    m = out_dir / MANIFEST
    if not m.exists():
        return {}
    return {line[66:].rstrip("\n"): line[:64] for line in m.read_text(encoding="utf-8").splitlines() if line}


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# simulate ---------------------------------------------------------------------------------------

def synthetic_city(cfg: RunConfig) -> CityModel:
    if not 0 <= cfg["n_lines"] <= 2:
        raise ConfigError("n_lines must lie in 0..2")
    base = default_city(n_lines=cfg["n_lines"])
    try:
        return CityModel(cfg["bbox"], cfg["campuses"][0], transit_lines=base.transit_lines)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(cfg: RunConfig) -> int:
    """Synthetic GPS pings, students (with homes) and the true travel-time lattice."""
    seed = cfg.require_seed("simulate")
    out = _out(cfg)
    if cfg["student_commute"] not in ("map", "oracle"):
        raise ConfigError("student_commute must be 'map' or 'oracle'")
    oracle = build_oracle(synthetic_city(cfg))
    sim = simulate_journeys(oracle, cfg["n_journeys"], cfg["device_mix"], seed=seed, window=cfg.window,
                            zone=cfg["utm_zone"])
    write_gps_csv(cfg.path("gps_csv"), sim.records)
    try:
        spec = CohortSpec(n_students=cfg["n_students"], n_programs=cfg["n_programs"],
                          dose_response=cfg["dose_response"],
                          confounding_strength=cfg["confounding_strength"], noise_sd=cfg["noise_sd"],
                          sigma_u=cfg["sigma_u"], rng_seed=seed, pass_intercept=cfg["pass_intercept"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cohort = generate_cohort(spec, oracle, n_nonresident=cfg["n_nonresident"])
    records = cohort.records
    if cfg["student_commute"] == "map":
        records = [replace(r, commute_hours=None) for r in records]
    write_students_csv(cfg.path("students_csv"), records)
    with cfg.path("homes_csv").open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["student_id", "x1", "x2"])
        for r, (x1, x2) in zip(cohort.records, cohort.homes):
            wr.writerow([r.student_id, repr(float(x1)), repr(float(x2))])
    write_oracle_csv(cfg.path("oracle_csv"), oracle)
    _write_text(out / "config_used.txt", cfg.to_text())
    write_manifest(out)
    return 0


# map --------------------------------------------------------------------------------------------

def attrition(cfg: RunConfig) -> tuple[dict[str, dict[str, int]], dict[str, list]]:
    """Point counts removed by each filter, per campus, and the retained journeys."""
    parsed = parse_gps_csv(cfg.path("gps_csv"))
    raw = len(parsed.records) + parsed.skipped
    points = project_records(parsed.records, cfg["utm_zone"])
    kept_pts = filter_window(points, cfg.window, cfg["bbox"])
    journeys, counts = extract_journeys(kept_pts, cfg.criteria)
    tables, retained = {}, {}
    for site in cfg["campuses"]:
        t = {"raw_points": raw, "malformed": parsed.skipped,
             "outside_window_or_bbox": len(points) - len(kept_pts),
             "duplicates": counts["duplicates"], "outside_journeys": counts["outside_journeys"]}
        by_reason = {r: 0 for r in REJECT_REASONS}
        n_by_reason = {r: 0 for r in REJECT_REASONS}
        keep = []
        for j in journeys:
            why = rejection_reason(j, site, cfg.window, cfg["max_accuracy"], cfg["min_points"])
            if why is None:
                keep.append(j)
            else:
                by_reason[why] += len(j)
                n_by_reason[why] += 1
        for r in REJECT_REASONS:
            t[f"journey_{r}"] = by_reason[r]
        t["retained_points"] = sum(len(j) for j in keep)
        t["journeys_extracted"] = len(journeys)
        for r in REJECT_REASONS:
            t[f"journeys_rejected_{r}"] = n_by_reason[r]
        t["journeys_retained"] = len(keep)
        tables[site.name] = t
        retained[site.name] = keep
    return tables, retained


POINT_FILTERS = ("malformed", "outside_window_or_bbox", "duplicates", "outside_journeys",
                 *(f"journey_{r}" for r in REJECT_REASONS))


def _attrition_text(t: dict[str, int]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in t.items())


def cmd_map(cfg: RunConfig) -> int:
    """Segment, label, tune and map every campus; write map CSV, metadata, SVG and reports."""
    seed = cfg.require_seed("map (journey split)")
    out = _out(cfg)
    if not cfg.path("gps_csv").exists():
        raise DataError(f"GPS CSV {cfg.path('gps_csv')} not found")
    tables, retained = attrition(cfg)
    for site in cfg["campuses"]:
        t = tables[site.name]
        _write_text(out / f"attrition_{site.name}.txt", _attrition_text(t))
        kept = retained[site.name]
        if len(kept) < 2:
            detail = ", ".join(f"{k}={t[k]}" for k in POINT_FILTERS)
            raise DataError(f"campus {site.name}: {len(kept)} journeys retained "
                            f"(raw points {t['raw_points']}; dropped {detail})")
        samples = label_all(kept)
        write_samples_csv(out / f"samples_{site.name}.csv", samples)
        _write_text(out / f"journeys_{site.name}.txt", journey_stats(kept).to_text())
        ss = KreSampleSet.from_samples(samples)
        rep = tune_bandwidth(ss, cfg["k_frac_grid"], cfg["c_grid"], split_seed=seed,
                             test_frac=cfg["test_frac"])
        _write_text(out / f"cv_{site.name}.txt", rep.to_text())
        amap = build_map(ss, cfg["bbox"], cfg["map_spacing"], cfg["map_buffer"], rep.best, site)
        write_map(amap, out / f"map_{site.name}.csv")
        _write_text(out / f"map_{site.name}.svg",
                    heatmap_svg(amap, title=f"estimated commuting time to {site.name} [min]"))
    _write_text(out / "config_used.txt", cfg.to_text())
    write_manifest(out)
    return 0


# effects ----------------------------------------------------------------------------------------

def read_homes(path: Path) -> dict[str, tuple[float, float]]:
    with path.open(newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != ("student_id", "x1", "x2"):
            raise DataError(f"{path}: expected header student_id,x1,x2")
        return {r["student_id"]: (float(r["x1"]), float(r["x2"])) for r in rd}


def fill_commute(records: list[StudentRecord], cfg: RunConfig) -> list[StudentRecord]:
    """Commute hours from the campus map for students with a home and no recorded time."""
    need = [r for r in records if r.commute_hours is None]
    if not need or not cfg.path("homes_csv").exists():
        return records
    homes = read_homes(cfg.path("homes_csv"))
    site = cfg.campus()
    map_csv = cfg.out_dir / f"map_{site.name}.csv"
    if not map_csv.exists():
        raise DataError(f"commute times missing and no map at {map_csv}; run 'map' first")
    amap = read_map(map_csv)
    out = []
    for r in records:
        if r.commute_hours is None and r.student_id in homes:
            try:
                r = r.with_commute(max(query_map(amap, homes[r.student_id]), 0.0) / 60.0)
            except OutsideMapError as exc:
                raise DataError(f"{r.student_id}: {exc}") from None
        out.append(r)
    return out


def method_weights(method: str, records: list[StudentRecord]) -> WeightVector:
    if method == "NO":
        return WeightVector.uniform(len(records))
    if method == "EB":
        return eb_weights(records)
    if method == "EB_ml":
        return eb_weights(records, multilevel=True)
    if method in IPW_MODES:
        return ipw_weights(fit_gps_model(records, method), records)
    raise ConfigError(f"unknown weighting method {method!r}")


SOLVER_ERRORS = (EbConvergenceError, RankDeficientError, SeparationError, np.linalg.LinAlgError,
                 FloatingPointError)


def cmd_effects(cfg: RunConfig) -> int:
    """Weights, balance tables, outcome models and effect curves for every configured method.

    A method whose weighting or outcome fit fails is listed in
    ``failures.txt`` and skipped; the other outputs are still written and the
    exit status is the solver code.
    """
    seed = cfg.require_seed("effects (degree selection split)")
    out = _out(cfg)
    try:
        everyone = read_students_csv(cfg.path("students_csv"))
    except FileNotFoundError:
        raise DataError(f"student CSV {cfg.path('students_csv')} not found") from None
    everyone = fill_commute(everyone, cfg)
    residents = [r for r in everyone if r.commute_hours is not None]
    sample = [r for r in residents if r.passed_any]
    if len(sample) < 10:
        raise DataError(f"only {len(sample)} resident students with a GPA")
    for m in cfg["methods"]:
        if m not in ("NO", "EB", "EB_ml", *IPW_MODES):
            raise ConfigError(f"unknown weighting method {m!r}")
    failures: list[str] = []
    weights: dict[str, WeightVector] = {"NO": WeightVector.uniform(len(sample))}
    for m in cfg["methods"]:
        if m == "NO":
            continue
        try:
            weights[m] = method_weights(m, sample)
        except SOLVER_ERRORS as exc:
            failures.append(f"{m}: weighting failed: {exc}")
    write_weights_csv(out / "weights.csv", [w for k, w in weights.items() if k != "NO"])
    write_balance_csv(out / "balance.csv", {k: balance_report(sample, w) for k, w in weights.items()})

    if cfg["degree"] is None:
        sel = select_degree(sample, LmmSpec(), tuple(range(1, cfg["max_degree"] + 1)), seed=seed)
        degree = sel.best
        lines = [f"selected_degree = {degree}"]
        lines += [f"holdout_mse[{d}] = {v!r}" for d, v in sorted(sel.mse.items())]
        lines += [f"failed[{d}] = {msg}" for d, msg in sorted(sel.failed.items())]
        _write_text(out / "degree.txt", "\n".join(lines) + "\n")
    else:
        degree = cfg["degree"]
    curves = {}
    for m, w in weights.items():
        spec = LmmSpec(degree, weights=None if m == "NO" else w)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                model = fit_lmm(sample, spec)
                if cfg["bootstrap"]:
                    curve = cluster_bootstrap_curve(model, sample, cfg["bootstrap"], seed, cfg["n_grid"],
                                                    cfg["level"])
                else:
                    curve = effect_curve(model, sample, cfg["n_grid"], cfg["level"])
                text = model.to_text()
                if cfg["loo"]:
                    text += f"loo_rmse = {loo_rmse(sample, spec)!r}\n"
        except (*SOLVER_ERRORS, ValueError, RuntimeError) as exc:
            failures.append(f"{m}: outcome model failed: {exc}")
            continue
        curves[m] = curve
        _write_text(out / f"model_{m}.txt", text)
        write_curve_csv(out / f"curve_{m}_adrf.csv", curve, "adrf")
        write_curve_csv(out / f"curve_{m}_amef.csv", curve, "amef")
    for m, c in curves.items():
        base = curves.get("NO")
        _write_text(out / f"curves_{m}.svg", curves_svg(base, c) if base is not None and m != "NO"
                    else curves_svg(c))

    if cfg["glmm"]:
        try:
            g = fit_glmm_binary(residents, loo=cfg["loo"])
            _write_text(out / "glmm.txt", g.to_text())
        except (*SOLVER_ERRORS, ValueError) as exc:
            failures.append(f"GLMM: {exc}")
    write_compare_csv(out / "compare.csv", cohort_compare(resident_groups(everyone)))
    _write_text(out / "failures.txt", "".join(f + "\n" for f in failures))
    _write_text(out / "config_used.txt", cfg.to_text())
    write_manifest(out)
    for f in failures:
        log.error(f)
    return 4 if failures else 0


# report -----------------------------------------------------------------------------------------

def _kv(path: Path) -> dict[str, str]:
    out = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            k, sep, v = line.partition(" = ")
            if sep:
                out[k] = v
    return out


def cmd_report(cfg: RunConfig) -> int:
    """Verify the manifest and collect headline numbers into ``report.txt``."""
    out = cfg.out_dir
    manifest = read_manifest(out)
    if not manifest:
        raise DataError(f"no manifest in {out}; run the pipeline first")
    bad = [p for p, h in manifest.items()
           if p != "report.txt" and (not (out / p).exists()
                                     or hashlib.sha256((out / p).read_bytes()).hexdigest() != h)]
    if bad:
        raise DataError(f"files changed since the manifest was written: {', '.join(sorted(bad))}")
    lines = ["# commuting-time pipeline report", ""]
    for site in cfg["campuses"]:
        att = _kv(out / f"attrition_{site.name}.txt")
        cv = _kv(out / f"cv_{site.name}.txt")
        if att:
            lines.append(f"## campus {site.name}")
            lines += [f"{k}: {v}" for k, v in att.items()]
            lines += [f"{k}: {cv[k]}" for k in ("best_k_frac", "best_c", "test_mse_min2", "test_mae_min") if k in cv]
            stats = out / f"journeys_{site.name}.txt"
            if stats.exists():
                lines += stats.read_text(encoding="utf-8").splitlines()
            lines.append("")
    deg = _kv(out / "degree.txt")
    if deg:
        lines.append(f"selected polynomial degree: {deg['selected_degree']}")
    for p in sorted(out.glob("model_*.txt")):
        kv = _kv(p)
        slope = [k for k in kv if k.startswith("beta[a^1]")]
        lines.append(f"{p.stem}: sigma_u={kv.get('sigma_u')} sigma_eps={kv.get('sigma_eps')}"
                     + (f" loo_rmse={kv['loo_rmse']}" if "loo_rmse" in kv else "")
                     + (f" beta[a^1]={kv[slope[0]]}" if slope else ""))
    g = _kv(out / "glmm.txt")
    if g:
        lines.append(f"pass/fail model: loo_accuracy={g.get('loo_accuracy')} sigma_u2={g.get('sigma_u2')}")
        lines += [f"  {k}: {v}" for k, v in g.items() if k.startswith("beta[commute_hours]")]
    fails = (out / "failures.txt")
    if fails.exists() and fails.read_text(encoding="utf-8").strip():
        lines += ["", "failures:"] + fails.read_text(encoding="utf-8").splitlines()
    _write_text(out / "report.txt", "\n".join(lines) + "\n")
    write_manifest(out)
    return 0
