"""Random-intercept logistic regression by the Laplace approximation.

For fixed ``(beta, tau = log sigma)`` each program's intercept mode solves a
scalar concave problem (vectorised Newton across programs). The outer
objective is minus the Laplace log-likelihood

    F = -sum_l [ h_l(u_l) - log(sigma^2 H_l) / 2 ]

with ``h_l`` the penalised group log-likelihood at its mode and ``H_l`` its
negative curvature. The analytic gradient carries the implicit
``d u_l / d(beta, tau)`` terms through ``H_l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from scipy.stats import norm

from ..balance.records import BASE_COLUMNS, StudentRecord, design_matrix, program_codes, program_levels

SEPARATION_LIMIT = 15.0
TAU_BOUNDS = (math.log(1e-4), math.log(20.0))
GLMM_COVARIATES = BASE_COLUMNS[1:] + ("commute_hours",)


class SeparationError(RuntimeError):
    pass


def _modes(eta0: np.ndarray, y: np.ndarray, groups: np.ndarray, n_groups: int, tau: float,
           u0: np.ndarray | None = None, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Per-group intercept modes by damped Newton (objective is strictly concave)."""
    s2inv = math.exp(-2.0 * tau)
    u = np.zeros(n_groups) if u0 is None else u0.copy()

    def h(u):
        eta = eta0 + u[groups]
        ll = y * eta - np.logaddexp(0.0, eta)
        return np.bincount(groups, ll, n_groups) - 0.5 * s2inv * u * u

    hu = h(u)
    for _ in range(max_iter):
        p = expit(eta0 + u[groups])
        g = np.bincount(groups, y - p, n_groups) - s2inv * u
        H = np.bincount(groups, p * (1 - p), n_groups) + s2inv
        if np.max(np.abs(g)) <= tol * (1.0 + np.max(np.abs(u))):
            break
        step = g / H
        t = np.ones(n_groups)
        for _ in range(30):
            cand = u + t * step
            hc = h(cand)
            ok = hc >= hu - 1e-14 * np.abs(hu)
            if ok.all():
                break
            t = np.where(ok, t, 0.5 * t)
        u, hu = cand, hc
    return u


@dataclass
class LaplaceProblem:
    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    n_groups: int
    _u: np.ndarray | None = field(default=None, repr=False)

    def objective(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """``(F, dF/dtheta)`` at ``theta = (beta..., tau)``."""
        X, y, gr, L = self.X, self.y, self.groups, self.n_groups
        beta, tau = theta[:-1], float(theta[-1])
        s2inv = math.exp(-2.0 * tau)
        eta0 = X @ beta
        u = _modes(eta0, y, gr, L, tau, self._u)
        self._u = u
        eta = eta0 + u[gr]
        p = expit(eta)
        w = p * (1 - p)
        H = np.bincount(gr, w, L) + s2inv
        h = np.bincount(gr, y * eta - np.logaddexp(0.0, eta), L) - 0.5 * s2inv * u * u
        F = -float(np.sum(h - 0.5 * (2.0 * tau + np.log(H))))

        # du/dbeta = -A / H with A_l = sum_i w_i x_i; du/dtau = 2 u s2inv / H
        A = np.zeros((L, X.shape[1]))
        np.add.at(A, gr, X * w[:, None])
        du_db = -A / H[:, None]
        du_dt = 2.0 * u * s2inv / H
        c = w * (1 - 2 * p)
        dH_db = np.zeros((L, X.shape[1]))
        np.add.at(dH_db, gr, c[:, None] * (X + du_db[gr]))
        dH_dt = np.bincount(gr, c * du_dt[gr], L) - 2.0 * s2inv
        g_beta = X.T @ (y - p) - 0.5 * np.sum(dH_db / H[:, None], axis=0)
        g_tau = float(np.sum(u * u * s2inv - 1.0 - 0.5 * dH_dt / H))
        return F, -np.concatenate([g_beta, [g_tau]])

    def modes(self, theta: np.ndarray) -> np.ndarray:
        return _modes(self.X @ theta[:-1], self.y, self.groups, self.n_groups, float(theta[-1]))


@dataclass
class FittedGlmm:
    beta: np.ndarray
    se: np.ndarray
    names: list[str]
    sigma_u2: float
    u_hat: np.ndarray
    programs: list[int]
    neg_loglik: float
    converged: bool
    loo_accuracy: float = math.nan
    loo_separated: int = 0
    level: float = 0.95

    @property
    def odds_ratios(self) -> np.ndarray:
        return np.exp(self.beta)

    def odds_ratio_ci(self) -> tuple[np.ndarray, np.ndarray]:
        z = float(norm.ppf(0.5 + self.level / 2))
        return np.exp(self.beta - z * self.se), np.exp(self.beta + z * self.se)

    def to_text(self) -> str:
        lo, hi = self.odds_ratio_ci()
        lines = ["model = random-intercept logistic (Laplace)", f"sigma_u2 = {self.sigma_u2!r}",
                 f"neg_loglik = {self.neg_loglik!r}", f"converged = {int(self.converged)}",
                 f"loo_accuracy = {self.loo_accuracy!r}", f"loo_separated_folds = {self.loo_separated}"]
        for k, nm in enumerate(self.names):
            lines.append(f"beta[{nm}] = {float(self.beta[k])!r}  se = {float(self.se[k])!r}  odds_ratio = "
                         f"{float(self.odds_ratios[k])!r}  ci = [{float(lo[k])!r}, {float(hi[k])!r}]")
        return "\n".join(lines) + "\n"


def glmm_design(records: Sequence[StudentRecord], covariates: Sequence[str] = GLMM_COVARIATES
                ) -> tuple[np.ndarray, list[str]]:
    X, names = design_matrix(records)
    cols = [X[:, 0]]
    out = ["(Intercept)"]
    for c in covariates:
        if c == "commute_hours":
            a = [r.commute_hours for r in records]
            if any(v is None for v in a):
                raise ValueError("commute_hours missing for some students")
            cols.append(np.asarray(a, float))
        else:
            cols.append(X[:, names.index(c)])
        out.append(c)
    return np.column_stack(cols), out


def _hessian(fun, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    k = x.size
    H = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = eps * max(1.0, abs(x[j]))
        H[:, j] = (fun(x + e)[1][:k] - fun(x - e)[1][:k]) / (2 * e[j])
    return 0.5 * (H + H.T)


def _fit_arrays(X, y, groups, n_groups, theta0=None, names=None, check=True):
    prob = LaplaceProblem(X, y, groups, n_groups)
    if theta0 is None:
        theta0 = np.zeros(X.shape[1] + 1)
        pbar = min(max(y.mean(), 1e-3), 1 - 1e-3)
        theta0[0] = math.log(pbar / (1 - pbar))
        theta0[-1] = math.log(0.5)
    bounds = [(None, None)] * X.shape[1] + [TAU_BOUNDS]
    res = minimize(prob.objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 1000, "gtol": 1e-8, "ftol": 1e-13})
    beta = res.x[:-1]
    if check and np.any(np.abs(beta) > SEPARATION_LIMIT):
        bad = [names[k] if names else str(k) for k in np.flatnonzero(np.abs(beta) > SEPARATION_LIMIT)]
        raise SeparationError(f"quasi-complete separation suspected: |beta| > {SEPARATION_LIMIT:g} "
                              f"for {', '.join(bad)}")
    return prob, res


def fit_glmm_binary(records_all: Sequence[StudentRecord],
                    covariates: Sequence[str] = GLMM_COVARIATES, loo: bool = True,
                    level: float = 0.95) -> FittedGlmm:
    """Fit ``passed_any`` on covariates with a program random intercept.

    Standard errors come from the inverse of the finite-difference Hessian
    (of the analytic gradient) over ``beta`` with ``tau`` held at its optimum.
    With ``loo`` the model is refitted once per student (warm-started) to get
    the leave-one-out classification accuracy at threshold 0.5. A fold may
    separate when it removes the only failure of a rare category; its
    prediction is still used and the fold is counted in ``loo_separated``.
    """
    y = np.array([float(r.passed_any) for r in records_all])
    if y.min() == y.max():
        raise ValueError("both outcome classes must be present")
    X, names = glmm_design(records_all, covariates)
    levels = program_levels(records_all)
    groups = program_codes(records_all, levels)
    L = len(levels)
    prob, res = _fit_arrays(X, y, groups, L, names=names)
    theta = res.x
    k = X.shape[1]
    Hb = _hessian(lambda b: prob.objective(np.concatenate([b, theta[-1:]])), theta[:-1])
    try:
        se = np.sqrt(np.maximum(np.diag(np.linalg.inv(Hb)), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(k, np.nan)
    u_hat = prob.modes(theta)
    fit = FittedGlmm(theta[:-1].copy(), se, names, math.exp(theta[-1]), u_hat, levels,
                     float(res.fun), bool(res.success), level=level)
    if loo:
        hits = sep = 0
        for i in range(len(records_all)):
            keep = np.ones(len(y), bool)
            keep[i] = False
            _, r_i = _fit_arrays(X[keep], y[keep], groups[keep], L, theta0=theta, check=False)
            sep += int(np.any(np.abs(r_i.x[:-1]) > SEPARATION_LIMIT))
            u_i = _modes(X[keep] @ r_i.x[:-1], y[keep], groups[keep], L, float(r_i.x[-1]))
            p_i = expit(X[i] @ r_i.x[:-1] + u_i[groups[i]])
            hits += int((p_i >= 0.5) == bool(y[i]))
        fit.loo_accuracy = hits / len(y)
        fit.loo_separated = sep
    return fit


def logistic_newton(X: np.ndarray, y: np.ndarray, tol: float = 1e-12, max_iter: int = 100
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Single-level logistic regression by Newton-Raphson; returns ``(beta, se)``."""
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        p = expit(X @ beta)
        H = X.T @ (X * (p * (1 - p))[:, None])
        step = np.linalg.solve(H, X.T @ (y - p))
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    p = expit(X @ beta)
    H = X.T @ (X * (p * (1 - p))[:, None])
    return beta, np.sqrt(np.diag(np.linalg.inv(H)))


__all__ = ["FittedGlmm", "GLMM_COVARIATES", "LaplaceProblem", "SeparationError", "fit_glmm_binary",
           "glmm_design", "logistic_newton"]
