"""Entropy-balancing weights through the convex dual.

The primal problem is ``min sum p log(n p)`` subject to ``sum p = 1`` and
``G' p = 0`` where the rows of ``G`` hold centred constraint functions. Its
dual is ``min_lambda log sum exp(G lambda)``, solved by damped Newton; the
primal solution is the softmax ``p = exp(G lambda) / sum exp(G lambda)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp, softmax

from .propensity import WeightVector
from .records import StudentRecord, design_matrix, treatment


class EbConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: dict[str, float]):
        worst = sorted(residuals.items(), key=lambda kv: -abs(kv[1]))[:5]
        detail = ", ".join(f"{k}={v:.3g}" for k, v in worst)
        super().__init__(f"{message}; largest residuals: {detail}")
        self.residuals = residuals


@dataclass(frozen=True)
class MomentSpec:
    """Which constraint families enter the balancing problem."""

    means: bool = True
    treatment_moments: bool = True
    cross: bool = True


@dataclass
class EbSolution:
    p: np.ndarray
    lam: np.ndarray
    residuals: dict[str, float]
    iterations: int
    dropped: list[str]

    @property
    def max_residual(self) -> float:
        return max((abs(v) for v in self.residuals.values()), default=0.0)


def _standardize(v: np.ndarray) -> np.ndarray:
    v = v - v.mean()
    s = np.sqrt(np.mean(v * v))
    return v / s if s > 0 else v


def constraint_matrix(X: np.ndarray, a: np.ndarray, names: Sequence[str],
                      spec: MomentSpec = MomentSpec()) -> tuple[np.ndarray, list[str]]:
    """Centred constraint functions whose weighted means must vanish.

    ``X`` excludes the intercept. Each column is scaled to unit uniform SD so
    the stopping tolerance has the same meaning for every constraint;
    constant columns stay as all-zero columns (trivially satisfied).
    """
    X = np.asarray(X, float)
    a = np.asarray(a, float)
    cols, labels = [], []
    Xs = np.column_stack([_standardize(X[:, j]) for j in range(X.shape[1])]) if X.shape[1] \
        else np.zeros((a.size, 0))
    a_s = _standardize(a)
    if spec.means:
        cols += [Xs[:, j] for j in range(Xs.shape[1])]
        labels += [f"mean:{nm}" for nm in names]
    if spec.treatment_moments:
        cols += [a_s, _standardize(a_s * a_s)]
        labels += ["mean:treatment", "var:treatment"]
    if spec.cross:
        for j, nm in enumerate(names):
            prod = a_s * Xs[:, j]
            s = np.sqrt(np.mean(prod * prod))
            cols.append(prod / s if s > 0 else prod)
            labels.append(f"cross:{nm}")
    G = np.column_stack(cols) if cols else np.zeros((a.size, 0))
    return G, labels


def _independent_columns(G: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    if G.shape[1] == 0:
        return np.zeros(0, np.int64)
    _, R, piv = linalg.qr(G, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return np.zeros(0, np.int64)
    keep = piv[: int(np.sum(d > rtol * d[0]))]
    return np.sort(keep)


def solve_dual(G: np.ndarray, labels: Sequence[str] | None = None, tol: float = 1e-8,
               max_iter: int = 500) -> EbSolution:
    """Damped Newton on ``log sum exp(G lambda)``; stops at ``max |G'p| <= tol``."""
    n, m = G.shape
    labels = list(labels) if labels is not None else [f"c{j}" for j in range(m)]
    keep = _independent_columns(G)
    dropped = [labels[j] for j in range(m) if j not in set(keep.tolist())]
    Gk = G[:, keep]
    lam = np.zeros(keep.size)

    def resid(p):
        r = G.T @ p
        return {labels[j]: float(r[j]) for j in range(m)}

    p = np.full(n, 1.0 / n)
    f = logsumexp(Gk @ lam)
    for it in range(max_iter + 1):
        eta = Gk @ lam
        p = softmax(eta)
        g = Gk.T @ p
        if np.max(np.abs(G.T @ p), initial=0.0) <= tol:
            return EbSolution(p, lam, resid(p), it, dropped)
        if it == max_iter:
            break
        Gc = Gk - g
        H = Gc.T @ (Gc * p[:, None])
        try:
            step = -linalg.solve(H, g, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = -linalg.lstsq(H, g)[0]
        if not np.all(np.isfinite(step)):
            break
        # backtracking on the dual objective (Armijo)
        f = logsumexp(eta)
        slope = float(g @ step)
        t = 1.0
        while t > 1e-12:
            f_new = logsumexp(Gk @ (lam + t * step))
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        lam = lam + t * step
        if np.max(np.abs(lam)) > 1e6:
            break
    raise EbConvergenceError(
        f"entropy balancing did not converge in {max_iter} iterations (infeasible constraints?)",
        resid(p))


def entropy_balance(X: np.ndarray, a: np.ndarray, names: Sequence[str] | None = None,
                    spec: MomentSpec = MomentSpec(), tol: float = 1e-8,
                    max_iter: int = 500) -> EbSolution:
    """Balance covariates ``X`` (no intercept) against treatment ``a``."""
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[0] != np.size(a):
        X = X.T
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    G, labels = constraint_matrix(X, a, names, spec)
    return solve_dual(G, labels, tol=tol, max_iter=max_iter)


def eb_weights(records: Sequence[StudentRecord], moment_spec: MomentSpec = MomentSpec(),
               multilevel: bool = False, tol: float = 1e-8, max_iter: int = 500) -> WeightVector:
    """Entropy-balancing weights ``w = n p``; ``multilevel`` adds program dummies."""
    X, names = design_matrix(records, "dummies" if multilevel else "none")
    sol = entropy_balance(X[:, 1:], treatment(records), names[1:], moment_spec, tol, max_iter)
    return WeightVector.normalized("EB_ml" if multilevel else "EB", sol.p,
                                   [r.student_id for r in records])
