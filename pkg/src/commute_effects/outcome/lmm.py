"""Weighted polynomial random-intercept model for GPA."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..balance.propensity import WeightVector
from ..balance.records import BASE_COLUMNS, StudentRecord, design_matrix, program_codes, \
    program_levels, treatment
from ..mixed import fit_random_intercept

log = logging.getLogger(__name__)

COVARIATES = BASE_COLUMNS[1:]
COND_WARN = 1e8


@dataclass(frozen=True)
class LmmSpec:
    """Outcome model layout: raw treatment powers ``a^1 .. a^D`` plus covariates."""

    degree: int = 1
    covariates: tuple[str, ...] = COVARIATES
    weights: WeightVector | None = None

    def __post_init__(self):
        if not 1 <= self.degree <= 10:
            raise ValueError("degree must lie in 1..10")
        unknown = set(self.covariates) - set(COVARIATES)
        if unknown:
            raise ValueError(f"unknown covariates {sorted(unknown)}")


@dataclass
class FittedLmm:
    beta: np.ndarray
    vcov_beta: np.ndarray
    sigma_u: float
    sigma_eps: float
    u_hat: np.ndarray
    names: list[str]
    degree: int
    covariates: tuple[str, ...]
    programs: list[int]
    criterion: float
    singular: bool
    weights_method: str
    weights: np.ndarray = field(repr=False)
    condition_number: float = math.nan
    fit_log: list[tuple[float, float]] = field(default_factory=list, repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov_beta))

    @property
    def treatment_slice(self) -> slice:
        return slice(len(self.names) - self.degree, len(self.names))

    def design(self, records: Sequence[StudentRecord], a=None) -> np.ndarray:
        return lmm_design(records, self.degree, self.covariates, a)[0]

    def predict(self, records: Sequence[StudentRecord], conditional: bool = True) -> np.ndarray:
        eta = self.design(records) @ self.beta
        if conditional:
            lookup = {p: k for k, p in enumerate(self.programs)}
            u = np.array([self.u_hat[lookup[r.program_id]] if r.program_id in lookup else 0.0
                          for r in records])
            eta = eta + u
        return eta

    def to_text(self) -> str:
        lines = ["model = weighted polynomial random-intercept LMM (REML)",
                 f"weights = {self.weights_method}", f"degree = {self.degree}",
                 f"sigma_u = {self.sigma_u!r}", f"sigma_eps = {self.sigma_eps!r}",
                 f"reml_criterion = {self.criterion!r}", f"singular_fit = {int(self.singular)}",
                 f"condition_number = {self.condition_number!r}"]
        interpretable = self.weights_method in ("NO", "uniform")
        for nm, b, s in zip(self.names, self.beta, self.se):
            note = "" if interpretable or nm.startswith("a^") or nm == "(Intercept)" \
                else "  # not interpretable under balancing weights"
            lines.append(f"beta[{nm}] = {float(b)!r}  se = {float(s)!r}{note}")
        for p, u in zip(self.programs, self.u_hat):
            lines.append(f"u_hat[program_{p}] = {float(u)!r}")
        for k, (t, c) in enumerate(self.fit_log):
            lines.append(f"fit_log[{k}] = theta {float(t)!r} criterion {float(c)!r}")
        return "\n".join(lines) + "\n"


def lmm_design(records: Sequence[StudentRecord], degree: int, covariates: Sequence[str],
               a=None) -> tuple[np.ndarray, list[str]]:
    """Intercept, chosen covariates, then ``a^1 .. a^D`` (``a`` overrides the records' hours)."""
    X, names = design_matrix(records)
    keep = [0] + [names.index(c) for c in covariates]
    a = treatment(records) if a is None else np.broadcast_to(np.asarray(a, float), (len(records),))
    powers = np.column_stack([a ** d for d in range(1, degree + 1)])
    return np.hstack([X[:, keep], powers]), [names[k] for k in keep] + [f"a^{d}" for d in range(1, degree + 1)]


def _outcome(records: Sequence[StudentRecord]) -> np.ndarray:
    missing = [r.student_id for r in records if r.gpa is None]
    if missing:
        raise ValueError(f"gpa missing for {len(missing)} students, e.g. {missing[:3]}")
    return np.array([r.gpa for r in records], float)


def _weight_array(spec: LmmSpec, n: int) -> tuple[np.ndarray, str]:
    if spec.weights is None:
        return np.ones(n), "NO"
    if len(spec.weights) != n:
        raise ValueError("weight vector length differs from the number of records")
    return np.asarray(spec.weights.w, float), spec.weights.method


def fit_lmm(records: Sequence[StudentRecord], spec: LmmSpec = LmmSpec(),
            fix_sigma_u_zero: bool = False, weights: np.ndarray | None = None) -> FittedLmm:
    """Profiled-REML fit; ``weights`` (raw array) overrides ``spec.weights``."""
    y = _outcome(records)
    X, names = lmm_design(records, spec.degree, spec.covariates)
    if weights is None:
        w, method = _weight_array(spec, len(records))
    else:
        w, method = np.asarray(weights, float), "custom"
    levels = program_levels(records)
    groups = program_codes(records, levels)
    cond = float(np.linalg.cond(X))
    if cond > COND_WARN:
        warnings.warn(f"outcome design condition number {cond:.3g} exceeds {COND_WARN:g}",
                      RuntimeWarning, stacklevel=2)
    fit = fit_random_intercept(X, y, groups, weights=w, method="REML", names=names,
                               fix_theta=0.0 if fix_sigma_u_zero else None)
    return FittedLmm(fit.beta, fit.vcov, float(fit.sigma_u), float(fit.sigma_e), fit.u_hat, names,
                     spec.degree, tuple(spec.covariates), levels, float(fit.criterion), bool(fit.singular),
                     method, w / w.mean(), cond, fit.fit_log)


@dataclass
class DegreeSelection:
    best: int
    mse: dict[int, float]
    failed: dict[int, str]


def select_degree(records: Sequence[StudentRecord], spec_base: LmmSpec = LmmSpec(),
                  degrees: Sequence[int] = tuple(range(1, 11)), split: float = 0.7, seed: int = 0,
                  rtol: float = 1e-9, atol: float = 1e-10) -> DegreeSelection:
    """Hold-out MSE per degree; the smallest degree within tolerance of the minimum wins.

    Two MSEs tie when they differ by less than ``rtol`` times the minimum
    plus ``atol`` times the outcome variance, so noiseless fits that all
    reach rounding level resolve to the simplest model.
    """
    n = len(records)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_tr = int(round(split * n))
    if n_tr < 2 or n - n_tr < 2:
        raise ValueError("each split needs at least two records")
    train = [records[i] for i in sorted(perm[:n_tr])]
    test = [records[i] for i in sorted(perm[n_tr:])]
    w_all = None if spec_base.weights is None else np.asarray(spec_base.weights.w)
    w_tr = None if w_all is None else w_all[np.sort(perm[:n_tr])]
    y_te = _outcome(test)
    mse: dict[int, float] = {}
    failed: dict[int, str] = {}
    for d in degrees:
        spec = LmmSpec(d, spec_base.covariates, None)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                model = fit_lmm(train, spec, weights=w_tr)
            mse[d] = float(np.mean((model.predict(test) - y_te) ** 2))
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failed[d] = str(exc)
            log.info("degree %d excluded: %s", d, exc)
    if not mse:
        raise RuntimeError(f"every degree failed: {failed}")
    lo = min(mse.values())
    tol = rtol * lo + atol * float(np.var(_outcome(records)))
    best = min(d for d, v in mse.items() if v <= lo + tol)
    return DegreeSelection(best, mse, failed)


def loo_rmse(records: Sequence[StudentRecord], spec: LmmSpec = LmmSpec()) -> float:
    """Leave-one-student-out prediction RMSE (one refit per student)."""
    n = len(records)
    if n < 2:
        raise ValueError("loo_rmse needs at least two records")
    y = _outcome(records)
    w_all = None if spec.weights is None else np.asarray(spec.weights.w)
    base = LmmSpec(spec.degree, spec.covariates, None)
    err = np.empty(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i in range(n):
            rest = [r for j, r in enumerate(records) if j != i]
            w = None if w_all is None else np.delete(w_all, i)
            model = fit_lmm(rest, base, weights=w)
            err[i] = model.predict([records[i]])[0] - y[i]
    return float(np.sqrt(np.mean(err ** 2)))
