"""Weighted balance diagnostics: treatment correlations, moments and ESS."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .propensity import WeightVector
from .records import (GENDERS, INCOMES, TRACKS, VARIABLE_COLUMNS, StudentRecord, design_matrix,
                      treatment)

CONTINUOUS = {"AdmissionAge": "admission_age", "HighSchoolGrade": "hs_grade"}
CATEGORICAL = {"Gender": ("gender", GENDERS), "FamilyIncome": ("income", INCOMES),
               "HighSchoolTrack": ("hs_track", TRACKS)}


@dataclass(frozen=True)
class Correlation:
    value: float
    column: str
    zero_variance: bool = False


@dataclass
class BalanceReport:
    method: str
    correlations: dict[str, Correlation]
    column_correlations: dict[str, Correlation]
    moments: list[tuple[str, str, float]]
    ess: float
    n: int
    flags: list[str] = field(default_factory=list)

    def moment(self, variable: str, statistic: str) -> float:
        for v, s, x in self.moments:
            if v == variable and s == statistic:
                return x
        raise KeyError((variable, statistic))

    def rows(self) -> list[tuple[str, str, str, float]]:
        out = [("correlation", var, "max_abs_rho", c.value) for var, c in self.correlations.items()]
        out += [("moments", v, s, x) for v, s, x in self.moments]
        out.append(("size", "ESS", "ess", self.ess))
        return out


def weighted_mean(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * x) / np.sum(w))


def weighted_sd(x: np.ndarray, w: np.ndarray) -> float:
    """Reliability-weight SD; with unit weights it is the usual ``n - 1`` SD."""
    sw = np.sum(w)
    m = np.sum(w * x) / sw
    denom = sw - np.sum(w * w) / sw
    return float(np.sqrt(np.sum(w * (x - m) ** 2) / denom)) if denom > 0 else 0.0


def weighted_corr(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, bool]:
    """Weighted Pearson correlation; ``(0, True)`` when either side is constant."""
    sw = np.sum(w)
    dx = x - np.sum(w * x) / sw
    dy = y - np.sum(w * y) / sw
    sxx = np.sum(w * dx * dx)
    syy = np.sum(w * dy * dy)
    if sxx <= 1e-300 or syy <= 1e-300:
        return 0.0, True
    return float(np.sum(w * dx * dy) / np.sqrt(sxx * syy)), False


def effective_sample_size(w) -> float:
    w = np.asarray(w, float)
    return float(np.sum(w) ** 2 / np.sum(w * w))


def balance_report(records: Sequence[StudentRecord], weights: WeightVector | np.ndarray,
                   include_program: bool = False) -> BalanceReport:
    """Correlations of treatment with each covariate and weighted moments.

    Categorical variables report the dummy with the largest ``|rho|``.
    """
    method = weights.method if isinstance(weights, WeightVector) else "custom"
    w = np.asarray(weights.w if isinstance(weights, WeightVector) else weights, float)
    if w.size != len(records):
        raise ValueError("one weight per record required")
    a = treatment(records)
    X, names = design_matrix(records, "dummies" if include_program else "none")

    col_corr: dict[str, Correlation] = {}
    flags = []
    for j, nm in enumerate(names[1:], start=1):
        rho, flat = weighted_corr(a, X[:, j], w)
        col_corr[nm] = Correlation(rho, nm, flat)
        if flat:
            flags.append(f"zero variance: {nm}")

    groups = dict(VARIABLE_COLUMNS)
    if include_program:
        groups["Program"] = tuple(nm for nm in names if nm.startswith("program_"))
    corr = {}
    for var, cols in groups.items():
        if not cols:
            continue
        best = max((col_corr[c] for c in cols), key=lambda c: abs(c.value))
        corr[var] = best

    moments: list[tuple[str, str, float]] = [
        ("CommutingTime", "mean", weighted_mean(a, w)), ("CommutingTime", "sd", weighted_sd(a, w))]
    for var, attr in CONTINUOUS.items():
        x = np.array([getattr(r, attr) for r in records], float)
        moments += [(var, "mean", weighted_mean(x, w)), (var, "sd", weighted_sd(x, w))]
    sw = np.sum(w)
    for var, (attr, levels) in CATEGORICAL.items():
        vals = np.array([getattr(r, attr) for r in records])
        for lev in levels:
            moments.append((var, lev, float(np.sum(w[vals == lev]) / sw)))
    return BalanceReport(method, corr, col_corr, moments, effective_sample_size(w), len(records), flags)


def describe(records: Sequence[StudentRecord], include_program: bool = False) -> BalanceReport:
    """Unweighted descriptive pass (unit weights)."""
    return balance_report(records, WeightVector.uniform(len(records)), include_program)


def write_weights_csv(path: str | Path, weights: Sequence[WeightVector]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["student_id", "method", "weight"])
        for wv in weights:
            for sid, x in zip(wv.student_ids, wv.w):
                wr.writerow([sid, wv.method, repr(float(x))])


def read_weights_csv(path: str | Path) -> dict[str, WeightVector]:
    by_method: dict[str, tuple[list[str], list[float]]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            ids, ws = by_method.setdefault(r["method"], ([], []))
            ids.append(r["student_id"])
            ws.append(float(r["weight"]))
    return {m: WeightVector(m, np.array(ws), tuple(ids)) for m, (ids, ws) in by_method.items()}


def write_balance_csv(path: str | Path, reports: Mapping[str, BalanceReport]) -> None:
    """One row per diagnostic, one column per weighting method."""
    methods = list(reports)
    keyed = {m: {(s, v, st): x for s, v, st, x in reports[m].rows()} for m in methods}
    order = [k[:3] for k in reports[methods[0]].rows()]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["section", "variable", "statistic", *methods])
        for key in order:
            wr.writerow([*key, *(repr(float(keyed[m].get(key, np.nan))) for m in methods)])
