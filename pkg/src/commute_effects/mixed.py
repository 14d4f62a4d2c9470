"""Weighted Gaussian random-intercept model fitted by profiled (RE)ML.

Model: ``y = X beta + u[group] + e`` with ``u ~ N(0, s_u^2)`` and
``e_i ~ N(0, s_e^2 / w_i)``. The likelihood is profiled over
``theta = s_u / s_e``; for each theta the fixed effects come from closed-form
GLS using per-group Sherman-Morrison updates, so one evaluation costs
``O(n p + L p^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

LOG_2PI = math.log(2.0 * math.pi)
_GOLD = 0.5 * (3.0 - math.sqrt(5.0))


class RankDeficientError(ValueError):
    def __init__(self, columns: Sequence[str]):
        super().__init__(f"design is rank deficient; collinear columns: {', '.join(columns)}")
        self.columns = list(columns)


def check_rank(X: np.ndarray, names: Sequence[str] | None = None, w: np.ndarray | None = None,
               rtol: float = 1e-10) -> None:
    """Raise :class:`RankDeficientError` naming the columns pivoted out by QR."""
    Xw = X if w is None else X * np.sqrt(w)[:, None]
    if Xw.shape[0] < Xw.shape[1]:
        raise RankDeficientError(list(names or [str(i) for i in range(X.shape[1])]))
    _, R, piv = linalg.qr(Xw, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    bad = d <= rtol * max(d[0], 1.0) if d.size else np.zeros(0, bool)
    if np.any(bad):
        names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
        raise RankDeficientError([names[piv[i]] for i in np.flatnonzero(bad)])


def bounded_brent(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-8,
                  maxiter: int = 500) -> tuple[float, float, list[tuple[float, float]]]:
    """Minimise ``f`` on ``[lo, hi]`` by golden-section search with parabolic steps.

    Returns ``(x, f(x), log)`` where ``log`` holds the best point after each
    iteration; its function values never increase.
    """
    a, b = lo, hi
    x = w = v = a + _GOLD * (b - a)
    fx = fw = fv = f(x)
    d = e = 0.0
    log = [(x, fx)]
    for _ in range(maxiter):
        m = 0.5 * (a + b)
        tol1 = xtol / 3.0 + 1e-12 * abs(x)
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (a - x) < p < q * (b - x):
                e, d = d, p / q
                u = x + d
                if (u - a) < tol2 or (b - u) < tol2:
                    d = tol1 if x < m else -tol1
                golden = False
        if golden:
            e = (b - x) if x < m else (a - x)
            d = _GOLD * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        fu = f(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
        log.append((x, fx))
    return x, fx, log


@dataclass
class RandomInterceptFit:
    beta: np.ndarray
    vcov: np.ndarray
    sigma_e: float
    sigma_u: float
    theta: float
    u_hat: np.ndarray
    criterion: float
    method: str
    singular: bool
    fit_log: list[tuple[float, float]] = field(default_factory=list)

    def fitted(self, X: np.ndarray, groups: np.ndarray, conditional: bool = True) -> np.ndarray:
        eta = X @ self.beta
        return eta + self.u_hat[groups] if conditional else eta


class _Profile:
    """Sufficient statistics for repeated evaluation at different theta."""

    def __init__(self, X, y, groups, w, n_groups):
        self.n, self.p = X.shape
        self.XtWX = X.T @ (X * w[:, None])
        self.XtWy = X.T @ (w * y)
        self.ytWy = float(y @ (w * y))
        self.A = np.zeros((n_groups, self.p))
        np.add.at(self.A, groups, X * w[:, None])
        self.b = np.bincount(groups, weights=w * y, minlength=n_groups)
        self.s = np.bincount(groups, weights=w, minlength=n_groups)
        self.sum_log_w = float(np.sum(np.log(w)))
        self.y_scale = max(self.ytWy, 1.0)

    def gls(self, theta: float):
        c = theta**2 / (1.0 + theta**2 * self.s)
        M = self.XtWX - self.A.T @ (self.A * c[:, None])
        r = self.XtWy - self.A.T @ (c * self.b)
        cho = linalg.cho_factor(M)
        beta = linalg.cho_solve(cho, r)
        rss = self.ytWy - float(np.sum(c * self.b**2)) - float(beta @ r)
        # exact fits leave only rounding noise; a floor keeps the criterion finite
        rss = max(rss, 1e-24 * self.y_scale)
        logdet_M = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        logdet_V = -self.sum_log_w + float(np.sum(np.log1p(theta**2 * self.s)))
        return beta, rss, cho, logdet_M, logdet_V, c

    def criterion(self, theta: float, method: str) -> float:
        _, rss, _, logdet_M, logdet_V, _ = self.gls(theta)
        n, p = self.n, self.p
        if method == "REML":
            dof = n - p
            return dof * math.log(rss / dof) + logdet_V + logdet_M + dof * (1.0 + LOG_2PI)
        return n * math.log(rss / n) + logdet_V + n * (1.0 + LOG_2PI)


def fit_random_intercept(X: np.ndarray, y: np.ndarray, groups: np.ndarray,
                         weights: np.ndarray | None = None, method: str = "REML",
                         theta_max: float = 10.0, xtol: float = 1e-8,
                         fix_theta: float | None = None,
                         names: Sequence[str] | None = None) -> RandomInterceptFit:
    """Fit the random-intercept model; ``groups`` are integer codes ``0..L-1``.

    Weights are rescaled to mean one, so multiplying them by a constant leaves
    every estimate unchanged. ``fix_theta`` skips the search (``0`` gives
    weighted least squares). ``criterion`` is minus twice the (restricted)
    log-likelihood. Boundary optima at ``theta = 0`` are flagged ``singular``.
    """
    if method not in ("REML", "ML"):
        raise ValueError("method must be 'REML' or 'ML'")
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    groups = np.asarray(groups, np.int64)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations ({n}) than fixed effects ({p})")
    w = np.ones(n) if weights is None else np.asarray(weights, float)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be positive and finite")
    w = w / w.mean()
    check_rank(X, names, w)
    n_groups = int(groups.max()) + 1 if n else 0
    prof = _Profile(X, y, groups, w, n_groups)

    def crit(t: float) -> float:
        v = prof.criterion(t, method)
        if not math.isfinite(v):
            raise FloatingPointError(f"non-finite {method} criterion at theta={t}")
        return v

    if fix_theta is not None:
        theta = float(fix_theta)
        best = crit(theta)
        log = [(theta, best)]
    else:
        # coarse scan picks the basin, bounded Brent refines inside it
        grid = np.concatenate([[0.0], np.geomspace(1e-3, theta_max, 24)])
        vals = np.array([crit(t) for t in grid])
        i = int(np.argmin(vals))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        theta, best, log = bounded_brent(crit, lo, hi, xtol=xtol)
        if vals[0] <= best:
            theta, best = 0.0, float(vals[0])
            log.append((theta, best))
    beta, rss, cho, _, _, c = prof.gls(theta)
    dof = n - p if method == "REML" else n
    s2 = rss / dof
    vcov = s2 * linalg.cho_solve(cho, np.eye(p))
    vcov = 0.5 * (vcov + vcov.T)
    u_hat = c * (prof.b - prof.A @ beta)
    return RandomInterceptFit(
        beta=beta, vcov=vcov, sigma_e=math.sqrt(s2), sigma_u=theta * math.sqrt(s2),
        theta=theta, u_hat=u_hat, criterion=best, method=method,
        singular=theta <= 1e-6, fit_log=log,
    )
