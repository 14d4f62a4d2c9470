"""Average dose-response (ADRF) and marginal-effect (AMEF) curves with delta-method bands."""

from __future__ import annotations

import csv
import dataclasses
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from ..balance.records import StudentRecord, treatment
from .lmm import FittedLmm, LmmSpec, fit_lmm, lmm_design

log = logging.getLogger(__name__)
CURVE_HEADER = ("a_hours", "estimate", "lo90", "hi90", "significant")


@dataclass(frozen=True)
class EffectCurve:
    """Both curves on one treatment grid; ``significant`` marks AMEF bands excluding 0."""

    grid: np.ndarray
    adrf: np.ndarray
    adrf_lo: np.ndarray
    adrf_hi: np.ndarray
    amef: np.ndarray
    amef_lo: np.ndarray
    amef_hi: np.ndarray
    level: float
    weights_method: str

    @property
    def significant(self) -> np.ndarray:
        return (self.amef_lo > 0) | (self.amef_hi < 0)

    def slope(self) -> float:
        """Least-squares slope of the ADRF over the grid (GPA points per hour)."""
        return float(np.polyfit(self.grid, self.adrf, 1)[0])


def weighted_quantiles(a: np.ndarray, w: np.ndarray, q: Sequence[float]) -> np.ndarray:
    return np.quantile(a, q, weights=w, method="inverted_cdf")


def treatment_grid(records: Sequence[StudentRecord], weights: np.ndarray | None = None,
                   n_grid: int = 60, lo_q: float = 0.05, hi_q: float = 0.95) -> np.ndarray:
    """``n_grid`` equally spaced values between the (weighted) 5% and 95% quantiles."""
    a = treatment(records)
    w = np.ones(a.size) if weights is None else np.asarray(weights, float)
    lo, hi = weighted_quantiles(a, w, [lo_q, hi_q])
    if not hi > lo:
        raise ValueError(f"degenerate treatment grid: q{lo_q:g} = q{hi_q:g} = {lo:g}")
    return np.linspace(lo, hi, n_grid)


def effect_curve(model: FittedLmm, records: Sequence[StudentRecord], n_grid: int = 60,
                 level: float = 0.90) -> EffectCurve:
    """ADRF and AMEF from the fixed effects, averaged with the model's weights.

    At each grid value every student's treatment powers are set to ``a`` and
    the marginal predictions (random intercepts at zero) are weight-averaged.
    Under the additive model this equals ``g(a)' beta`` with ``g`` the
    weighted mean design row, so the band is ``g' V g`` on the fixed-effect
    covariance. The AMEF is the analytic derivative ``sum d beta_d a^(d-1)``.
    """
    w = model.weights
    if w.size != len(records):
        raise ValueError("records differ from those the model was fitted on")
    grid = treatment_grid(records, w, n_grid)
    G, Gd = _curve_rows(model, records, w, grid)
    z = float(norm.ppf(0.5 + level / 2.0))
    V = model.vcov_beta
    mu = G @ model.beta
    se_mu = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", G, V, G), 0.0))
    me = Gd @ model.beta
    se_me = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", Gd, V, Gd), 0.0))
    return EffectCurve(grid, mu, mu - z * se_mu, mu + z * se_mu, me, me - z * se_me, me + z * se_me,
                       level, model.weights_method)


def _curve_rows(model: FittedLmm, records: Sequence[StudentRecord], w: np.ndarray,
                grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weight-averaged design rows at each grid value and their treatment derivatives."""
    X, _ = lmm_design(records, model.degree, model.covariates)
    g_cov = (w @ X) / w.sum()
    sl = model.treatment_slice
    d = np.arange(1, model.degree + 1)
    G = np.tile(g_cov, (grid.size, 1))
    G[:, sl] = grid[:, None] ** d
    Gd = np.zeros_like(G)
    Gd[:, sl] = d * grid[:, None] ** (d - 1)
    return G, Gd


def cluster_bootstrap_curve(model: FittedLmm, records: Sequence[StudentRecord], n_boot: int = 200,
                            seed: int = 0, n_grid: int = 60, level: float = 0.90) -> EffectCurve:
    """Effect curve with percentile bands from resampling whole programs.

    Each replicate draws as many programs as observed, with replacement,
    keeps every student of a drawn program (duplicates become distinct
    programs) with their original weights, refits the outcome model and
    evaluates both curves on the original grid. The weights are held fixed
    rather than re-estimated per replicate. Point estimates are those of
    ``model``; replicates whose refit fails are dropped and logged.
    """
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    base = effect_curve(model, records, n_grid, level)
    w = model.weights
    by_prog: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        by_prog.setdefault(r.program_id, []).append(i)
    progs = sorted(by_prog)
    rng = np.random.default_rng(seed)
    spec = LmmSpec(model.degree, model.covariates)
    mus, mes = [], []
    for _ in range(n_boot):
        draw = rng.integers(0, len(progs), len(progs))
        idx, recs = [], []
        for new_id, k in enumerate(draw, 1):
            for i in by_prog[progs[k]]:
                idx.append(i)
                recs.append(dataclasses.replace(records[i], program_id=new_id))
        wb = w[idx]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_lmm(recs, spec, weights=wb)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.info("bootstrap replicate dropped: %s", exc)
            continue
        G, Gd = _curve_rows(fit, recs, wb, base.grid)
        mus.append(G @ fit.beta)
        mes.append(Gd @ fit.beta)
    if len(mus) < 2:
        raise RuntimeError("fewer than two bootstrap replicates succeeded")
    q = [0.5 - level / 2.0, 0.5 + level / 2.0]
    a_lo, a_hi = np.quantile(np.array(mus), q, axis=0)
    m_lo, m_hi = np.quantile(np.array(mes), q, axis=0)
    # percentile bands need not cover the point estimate; widen to keep it inside
    return EffectCurve(base.grid, base.adrf, np.minimum(a_lo, base.adrf), np.maximum(a_hi, base.adrf),
                       base.amef, np.minimum(m_lo, base.amef), np.maximum(m_hi, base.amef), level,
                       f"{model.weights_method}+bootstrap")


def adrf(model: FittedLmm, records: Sequence[StudentRecord], n_grid: int = 60,
         level: float = 0.90) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    c = effect_curve(model, records, n_grid, level)
    return c.grid, c.adrf, c.adrf_lo, c.adrf_hi


def amef(model: FittedLmm, records: Sequence[StudentRecord], n_grid: int = 60,
         level: float = 0.90) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    c = effect_curve(model, records, n_grid, level)
    return c.grid, c.amef, c.amef_lo, c.amef_hi


def finite_difference_gap(curve: EffectCurve) -> float:
    """Largest gap between centred differences of the ADRF and the AMEF (interior points)."""
    a, mu = curve.grid, curve.adrf
    fd = (mu[2:] - mu[:-2]) / (a[2:] - a[:-2])
    return float(np.max(np.abs(fd - curve.amef[1:-1]))) if fd.size else 0.0


def write_curve_csv(path: str | Path, curve: EffectCurve, which: str = "adrf") -> None:
    """``which`` is ``"adrf"`` or ``"amef"``; ``significant`` follows the AMEF band."""
    if which not in ("adrf", "amef"):
        raise ValueError("which must be 'adrf' or 'amef'")
    est, lo, hi = ((curve.adrf, curve.adrf_lo, curve.adrf_hi) if which == "adrf"
                   else (curve.amef, curve.amef_lo, curve.amef_hi))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CURVE_HEADER)
        for row in zip(curve.grid, est, lo, hi, curve.significant):
            wr.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                         repr(float(row[3])), int(bool(row[4]))])


def read_curve_csv(path: str | Path) -> dict[str, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {k: data[:, i] for i, k in enumerate(CURVE_HEADER)}
