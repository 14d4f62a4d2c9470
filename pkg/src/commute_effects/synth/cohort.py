"""Synthetic student cohort with a known dose-response and tunable confounding.

Covariate margins follow the descriptive statistics of a first-year
engineering intake (27% female, income mostly High, Scientific track
dominant, HS grade on [0.6, 1] with mean 0.82). Confounding enters through
where students live: each student's home is drawn over the city lattice with
probability proportional to ``exp(kappa * s_i * r / 3 km)``, ``r`` the
distance to the campus and ``s_i`` a preference score that pulls High-income
and merit students (HS grade >= 0.9) close and pushes Grant students out.
Merit students also get a GPA bonus, a step in HS grade that an additive
linear adjustment for HS grade cannot absorb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..balance.records import INCOMES, TRACKS, StudentRecord
from .city import TravelOracle

AGE_VALUES = np.array([-1, 0, 1, 2, 3, 4, 5, 7, 14], float)
AGE_PROBS = np.array([0.02, 0.61, 0.26, 0.062, 0.026, 0.012, 0.006, 0.003, 0.001])
INCOME_PROBS = np.array([281, 96, 38, 92], float) / 507
TRACK_PROBS = np.array([444, 29, 26, 8], float) / 507
FEMALE_SHARE = 137 / 507
HS_BETA = (1.25, 1.02)

# home preference: negative pulls toward the campus
INCOME_TILT = {"High": -1.0, "Middle": 0.0, "Low": 0.5, "Grant": 1.0}
MERIT_TILT = -1.5
MERIT_GRADE = 0.9
TILT_SCALE = 3000.0

DEFAULT_EFFECTS = {
    "female": -0.66, "admission_age": -0.3, "hs_grade": 11.09,
    "income_Middle": -0.2, "income_Low": -0.4, "income_Grant": -0.3,
    "track_Humanistic": -1.0, "track_Technical": -0.5, "track_Other": -0.5,
    "merit": 1.5,
}


@dataclass(frozen=True)
class CohortSpec:
    """Generative parameters; ``dose_response`` holds polynomial coefficients in hours.

    ``pass_intercept`` sets the logit of passing at least one exam for an
    average student (``inf`` makes everybody pass).
    """

    n_students: int = 500
    n_programs: int = 20
    dose_response: tuple[float, ...] = (7.0, -2.0)
    confounding_strength: float = 1.0
    noise_sd: float = 2.0
    sigma_u: float = 0.5
    rng_seed: int = 0
    pass_intercept: float = 1.2
    pass_sigma_u: float = 0.5
    effects: dict = field(default_factory=lambda: dict(DEFAULT_EFFECTS))

    def __post_init__(self):
        if not self.n_students >= self.n_programs >= 1:
            raise ValueError("need n_students >= n_programs >= 1")
        if self.noise_sd < 0 or self.sigma_u < 0 or self.pass_sigma_u < 0:
            raise ValueError("standard deviations must be non-negative")
        if not self.dose_response:
            raise ValueError("dose_response needs at least one coefficient")

    def dose(self, a) -> np.ndarray:
        """True average dose-response at hours ``a`` (covariate terms held at zero)."""
        return np.polynomial.polynomial.polyval(np.asarray(a, float), self.dose_response)


@dataclass
class Cohort:
    spec: CohortSpec
    records: list[StudentRecord]
    homes: np.ndarray
    program_effects: np.ndarray
    covariate_part: np.ndarray

    def true_adrf(self, a) -> np.ndarray:
        """Resident-average potential GPA at each ``a``, including the [0, 12] clip.

        Averages the exact mean of a clipped normal over residents' covariate
        and program terms, so it is the estimand of a correctly balanced fit
        when the clip rarely binds.
        """
        res = np.array([r.commute_hours is not None for r in self.records])
        prog = np.array([r.program_id - 1 for r in self.records])[res]
        loc = self.covariate_part[res] + self.program_effects[prog]
        a = np.atleast_1d(np.asarray(a, float))
        return np.array([_clipped_normal_mean(self.spec.dose(x) + loc, self.spec.noise_sd).mean() for x in a])


def _clipped_normal_mean(m: np.ndarray, s: float, lo: float = 0.0, hi: float = 12.0) -> np.ndarray:
    """``E[clip(N(m, s^2), lo, hi)]``."""
    if s == 0:
        return np.clip(m, lo, hi)
    al, be = (lo - m) / s, (hi - m) / s
    return (lo * norm.cdf(al) + hi * norm.sf(be) + m * (norm.cdf(be) - norm.cdf(al))
            + s * (norm.pdf(al) - norm.pdf(be)))


def _draw_covariates(n: int, rng: np.random.Generator):
    female = rng.random(n) < FEMALE_SHARE
    age = rng.choice(AGE_VALUES, size=n, p=AGE_PROBS)
    income = rng.choice(len(INCOMES), size=n, p=INCOME_PROBS)
    hs = np.round(0.6 + 0.4 * rng.beta(*HS_BETA, size=n), 4)
    track = rng.choice(len(TRACKS), size=n, p=TRACK_PROBS)
    return female, age, income, hs, track


def _draw_homes(oracle: TravelOracle, score: np.ndarray, kappa: float,
                rng: np.random.Generator) -> np.ndarray:
    xy = oracle.lattice_xy()
    c = oracle.city.campus
    r = np.hypot(xy[:, 0] - c.x1, xy[:, 1] - c.x2) / TILT_SCALE
    homes = np.empty(score.size, np.int64)
    u = rng.random(score.size)
    for s in np.unique(score):
        idx = np.flatnonzero(score == s)
        logw = kappa * s * r
        cdf = np.cumsum(np.exp(logw - logw.max()))
        homes[idx] = np.searchsorted(cdf, u[idx] * cdf[-1], side="right")
    return np.minimum(homes, xy.shape[0] - 1)


def generate_cohort(spec: CohortSpec, oracle: TravelOracle, n_nonresident: int = 0) -> Cohort:
    """Students with homes, commute hours from the oracle, GPA and pass status.

    ``n_nonresident`` extra students (appended after the residents) live
    outside the city: their commute time is unknown and their GPA carries a
    dose at the longest in-city commute. ``homes`` covers residents only.
    """
    rng = np.random.default_rng(spec.rng_seed)
    n_res = spec.n_students
    n = n_res + n_nonresident
    female, age, income, hs, track = _draw_covariates(n, rng)
    program = rng.integers(0, spec.n_programs, n)
    merit = hs >= MERIT_GRADE
    score = np.array([INCOME_TILT[INCOMES[k]] for k in income]) + MERIT_TILT * merit
    homes = _draw_homes(oracle, score[:n_res], spec.confounding_strength, rng)
    a = np.concatenate([oracle.time_s[homes] / 3600.0,
                        np.full(n_nonresident, float(oracle.time_s.max()) / 3600.0)])

    e = spec.effects
    cov = (e["female"] * female + e["admission_age"] * age + e["hs_grade"] * (hs - 0.82)
           + np.array([0.0, e["income_Middle"], e["income_Low"], e["income_Grant"]])[income]
           + np.array([0.0, e["track_Humanistic"], e["track_Technical"], e["track_Other"]])[track]
           + spec.confounding_strength * e["merit"] * merit)
    u = rng.normal(0.0, spec.sigma_u, spec.n_programs) if spec.sigma_u > 0 else np.zeros(spec.n_programs)
    noise = rng.normal(0.0, spec.noise_sd, n) if spec.noise_sd > 0 else np.zeros(n)
    gpa = np.clip(spec.dose(a) + cov + u[program] + noise, 0.0, 12.0)

    if math.isinf(spec.pass_intercept) and spec.pass_intercept > 0:
        passed = np.ones(n, bool)
    else:
        v = rng.normal(0.0, spec.pass_sigma_u, spec.n_programs) if spec.pass_sigma_u > 0 \
            else np.zeros(spec.n_programs)
        eta = spec.pass_intercept + 4.0 * (hs - 0.82) - 0.3 * female + v[program]
        passed = rng.random(n) < 1.0 / (1.0 + np.exp(-eta))

    records = [
        StudentRecord(
            student_id=f"s{i:05d}", gender="F" if female[i] else "M",
            admission_age=float(age[i]), income=INCOMES[income[i]], hs_grade=float(hs[i]),
            hs_track=TRACKS[track[i]], program_id=int(program[i]) + 1,
            commute_hours=float(a[i]) if i < n_res else None, gpa=float(gpa[i]) if passed[i] else None,
            passed_any=bool(passed[i]))
        for i in range(n)
    ]
    return Cohort(spec, records, oracle.lattice_xy()[homes].copy(), u, cov)


def resident_records(cohort: Cohort) -> list[StudentRecord]:
    return [r for r in cohort.records if r.commute_hours is not None]
