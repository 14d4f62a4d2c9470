"""Normal generalized-propensity-score models and inverse-probability weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from ..mixed import check_rank, fit_random_intercept
from .records import StudentRecord, design_matrix, program_codes, program_levels, treatment

MODES = ("GLM", "FEM", "REM")


@dataclass(frozen=True)
class WeightVector:
    """Positive weights normalised to sum to ``n``."""

    method: str
    w: np.ndarray
    student_ids: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.w, float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise ValueError(f"{self.method}: weights must be positive and finite")
        if abs(w.sum() - w.size) > 1e-9 * w.size:
            raise ValueError(f"{self.method}: weights must sum to n")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def normalized(cls, method: str, raw, student_ids: Sequence[str] = ()) -> "WeightVector":
        raw = np.asarray(raw, float)
        return cls(method, raw * (raw.size / raw.sum()), tuple(student_ids))

    @classmethod
    def uniform(cls, n: int, method: str = "NO", student_ids: Sequence[str] = ()) -> "WeightVector":
        return cls(method, np.ones(n), tuple(student_ids))

    def __len__(self) -> int:
        return self.w.size


@dataclass
class GpsModel:
    """Fitted Normal model for commute time given covariates.

    ``program_effects`` is indexed by program position in ``programs``
    (sorted ids); it is empty for GLM.
    """

    mode: str
    gamma: np.ndarray
    columns: list[str]
    program_effects: np.ndarray
    programs: list[int]
    sigma_eps: float
    sigma_z: float | None = None
    fitted_mean: np.ndarray = field(default=None, repr=False)

    def mean(self, records: Sequence[StudentRecord]) -> np.ndarray:
        X, names = design_matrix(records)
        idx = [names.index(c) for c in self.columns]
        mu = X[:, idx] @ self.gamma
        if self.program_effects.size:
            mu = mu + self.program_effects[program_codes(records, self.programs)]
        return mu


def _ls_fit(X: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares coefficients and ML residual SD (RSS / n)."""
    coef, *_ = linalg.lstsq(X, a, lapack_driver="gelsd")
    resid = a - X @ coef
    return coef, math.sqrt(float(resid @ resid) / a.size)


def fit_gps_model(records: Sequence[StudentRecord], mode: str = "GLM",
                  columns: Sequence[str] | None = None) -> GpsModel:
    """Fit commute time on covariates (GLM), plus program intercepts (FEM/REM).

    ``columns`` restricts the covariate design (default: every base column;
    ``["(Intercept)"]`` gives the intercept-only model). REM is fitted by
    profiled maximum likelihood and stores predicted program intercepts.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    a = treatment(records)
    Xall, names = design_matrix(records)
    cols = list(names if columns is None else columns)
    X = Xall[:, [names.index(c) for c in cols]]
    levels = program_levels(records)
    codes = program_codes(records, levels)

    if mode == "GLM":
        check_rank(X, cols)
        if len(records) <= X.shape[1]:
            raise ValueError("need more students than model columns")
        gamma, s = _ls_fit(X, a)
        return GpsModel("GLM", gamma, cols, np.zeros(0), levels, s, None, X @ gamma)

    if mode == "FEM":
        Xp, pnames = design_matrix(records, "dummies", levels)
        P = Xp[:, len(names):]
        Xf = np.hstack([X, P])
        check_rank(Xf, cols + pnames[len(names):])
        if len(records) <= Xf.shape[1]:
            raise ValueError("need more students than model columns")
        coef, s = _ls_fit(Xf, a)
        gamma = coef[:X.shape[1]]
        effects = np.concatenate([[0.0], coef[X.shape[1]:]])
        return GpsModel("FEM", gamma, cols, effects, levels, s, None, Xf @ coef)

    fit = fit_random_intercept(X, a, codes, method="ML", names=cols)
    mu = X @ fit.beta + fit.u_hat[codes]
    return GpsModel("REM", fit.beta, cols, fit.u_hat, levels, fit.sigma_e, fit.sigma_u, mu)


def _normal_logpdf(x: np.ndarray, mu: np.ndarray, sigma: float) -> np.ndarray:
    return -0.5 * math.log(2.0 * math.pi * sigma * sigma) - (x - mu) ** 2 / (2.0 * sigma * sigma)


def ipw_weights(model: GpsModel, records: Sequence[StudentRecord], stabilized: bool = True,
                trim: float | None = None) -> WeightVector:
    """Inverse generalized-propensity weights, rescaled to sum to ``n``.

    Stabilised weights divide the marginal Normal density of the treatment
    (an intercept-only fit, same ML variance convention) by the conditional
    density. ``trim`` caps weights at that upper quantile before rescaling.
    """
    a = treatment(records)
    mu = model.fitted_mean if model.fitted_mean is not None and len(model.fitted_mean) == len(a) \
        else model.mean(records)
    log_cond = _normal_logpdf(a, mu, model.sigma_eps)
    dens = np.exp(log_cond)
    if np.any(dens == 0.0):
        i = int(np.flatnonzero(dens == 0.0)[0])
        raise FloatingPointError(
            f"conditional density underflows to 0 for student {records[i].student_id}")
    if stabilized:
        c0, s0 = _ls_fit(np.ones((a.size, 1)), a)
        log_marg = _normal_logpdf(a, np.ones((a.size, 1)) @ c0, s0)
        raw = np.exp(log_marg - log_cond)
    else:
        raw = np.exp(-log_cond)
    if trim is not None:
        raw = np.minimum(raw, np.quantile(raw, trim))
    tag = model.mode if stabilized else f"{model.mode}_unstab"
    return WeightVector.normalized(tag, raw, [r.student_id for r in records])
