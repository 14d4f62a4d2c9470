"""Sample sets, bandwidth specification, tuning and evaluation."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..trajectory import LabeledSample
from . import _kernels

log = logging.getLogger(__name__)

DEFAULT_K_FRACS = (0.005, 0.01, 0.02, 0.05)
DEFAULT_CS = (0.25, 1.0 / 3.0, 0.5, 1.0, 2.0)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class BandwidthSpec:
    """Bandwidth ``h(x) = c * d_k(x)`` with ``k`` a fraction of the sample size."""

    k_frac: float
    c: float

    def __post_init__(self):
        if not 0 < self.k_frac <= 1:
            raise ValueError(f"k_frac must lie in (0, 1], got {self.k_frac}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    def k_for(self, n: int) -> int:
        return max(1, round_half_up(self.k_frac * n))


@dataclass(frozen=True)
class KreSampleSet:
    """Immutable arrays of sample locations, responses and integer journey codes."""

    xy: np.ndarray
    y: np.ndarray
    journey: np.ndarray
    journey_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.xy.ndim != 2 or self.xy.shape[1] != 2 or self.xy.shape[0] != self.y.shape[0]:
            raise ValueError("xy must be (n, 2) and aligned with y")
        if self.xy.shape[0] < 1:
            raise ValueError("a sample set needs at least one observation")
        if not (np.all(np.isfinite(self.xy)) and np.all(np.isfinite(self.y))):
            raise ValueError("sample coordinates and responses must be finite")
        for a in (self.xy, self.y, self.journey):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample]) -> "KreSampleSet":
        ids = sorted({s.journey_id for s in samples})
        code = {j: i for i, j in enumerate(ids)}
        xy = np.array([[s.x1, s.x2] for s in samples], dtype=float).reshape(-1, 2)
        y = np.array([s.y for s in samples], dtype=float)
        jr = np.array([code[s.journey_id] for s in samples], dtype=np.int64)
        return cls(xy, y, jr, tuple(ids))

    @classmethod
    def from_arrays(cls, xy, y, journey=None) -> "KreSampleSet":
        xy = np.array(xy, dtype=float).reshape(-1, 2)
        y = np.array(y, dtype=float).reshape(-1)
        jr = np.arange(y.shape[0]) if journey is None else np.asarray(journey)
        _, codes = np.unique(jr, return_inverse=True)
        return cls(xy, y, codes.astype(np.int64), tuple(str(u) for u in np.unique(jr)))

    def subset(self, mask: np.ndarray) -> "KreSampleSet":
        return KreSampleSet(self.xy[mask].copy(), self.y[mask].copy(),
                            self.journey[mask].copy(), self.journey_ids)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.xy).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()


def _as_set(samples) -> KreSampleSet:
    if isinstance(samples, KreSampleSet):
        return samples
    if len(samples) == 0:
        raise ValueError("empty sample set")
    return KreSampleSet.from_samples(samples)


def nn_distance(samples, x, k: int, backend: str | None = None) -> float:
    """Euclidean distance from ``x`` to its k-th nearest sample location."""
    s = _as_set(samples)
    if not 1 <= k <= s.n:
        raise ValueError(f"k={k} must lie in [1, n={s.n}]")
    return float(_kernels.knn_distance(s.xy, np.reshape(np.asarray(x, float), (1, 2)), k, backend)[0])


def predict(samples, locations, spec: BandwidthSpec, backend: str | None = None) -> np.ndarray:
    """Vector of estimates at ``locations`` (shape ``(m, 2)``)."""
    s = _as_set(samples)
    q = np.reshape(np.asarray(locations, float), (-1, 2))
    return _kernels.nw_predict(s.xy, s.y, q, spec.k_for(s.n), spec.c, backend)


def nw_estimate(samples, x, spec: BandwidthSpec, backend: str | None = None) -> float:
    """Nadaraya-Watson estimate of the commuting time (minutes) at ``x``."""
    return float(predict(samples, np.reshape(np.asarray(x, float), (1, 2)), spec, backend)[0])


def evaluate(samples_test, samples_train, spec: BandwidthSpec,
             backend: str | None = None) -> tuple[float, float]:
    """Test-set (MSE, MAE) of predictions fitted on ``samples_train``."""
    test = _as_set(samples_test)
    if test.n == 0:
        raise ValueError("empty test set")
    err = predict(samples_train, test.xy, spec, backend) - test.y
    return float(np.mean(err**2)), float(np.mean(np.abs(err)))


@dataclass
class CvReport:
    k_fracs: tuple[float, ...]
    cs: tuple[float, ...]
    mse: np.ndarray  # shape (len(k_fracs), len(cs))
    best: BandwidthSpec
    test_mse: float
    test_mae: float
    n_train: int
    n_test: int
    train_journeys: tuple[str, ...] = field(repr=False, default=())
    test_journeys: tuple[str, ...] = field(repr=False, default=())

    @property
    def grid(self) -> dict[tuple[float, float], float]:
        return {(kf, c): float(self.mse[a, b])
                for a, kf in enumerate(self.k_fracs) for b, c in enumerate(self.cs)}

    def to_text(self) -> str:
        lines = [f"best_k_frac = {self.best.k_frac!r}", f"best_c = {self.best.c!r}",
                 f"best_k = {self.best.k_for(self.n_train)}",
                 f"cv_mse_min2 = {float(self.mse.min())!r}",
                 f"test_mse_min2 = {self.test_mse!r}", f"test_mae_min = {self.test_mae!r}",
                 f"n_train_samples = {self.n_train}", f"n_test_samples = {self.n_test}",
                 f"n_train_journeys = {len(self.train_journeys)}",
                 f"n_test_journeys = {len(self.test_journeys)}"]
        for (kf, c), v in self.grid.items():
            lines.append(f"cv_mse[k_frac={kf!r},c={c!r}] = {v!r}")
        return "\n".join(lines) + "\n"


def split_journeys(samples: KreSampleSet, test_frac: float, seed: int) -> np.ndarray:
    """Boolean test mask assigning whole journeys to the test set."""
    codes = np.unique(samples.journey)
    n_test = round_half_up(test_frac * codes.size)
    perm = np.random.default_rng(seed).permutation(codes)
    return np.isin(samples.journey, perm[:n_test])


def cv_surface(train: KreSampleSet, k_fracs: Sequence[float], cs: Sequence[float],
               backend: str | None = None) -> np.ndarray:
    """Leave-one-journey-out MSE for each (k_frac, c) pair on ``train``."""
    ks = np.array([BandwidthSpec(kf, 1.0).k_for(train.n) for kf in k_fracs], dtype=np.int64)
    preds = _kernels.loo_group_predict(train.xy, train.y, train.journey, ks,
                                       np.asarray(cs, float), backend)
    return np.mean((preds - train.y[:, None, None]) ** 2, axis=0)


def tune_bandwidth(samples, k_frac_grid: Sequence[float] = DEFAULT_K_FRACS,
                   c_grid: Sequence[float] = DEFAULT_CS, split_seed: int = 0,
                   test_frac: float = 0.15, backend: str | None = None) -> CvReport:
    """Select (k_frac, c) by leave-one-journey-out CV on a journey-level train split.

    The test share of journeys is ``round(test_frac * J)``; when that is zero
    the test metrics are NaN. Ties in CV error keep the first grid pair
    (``k_frac`` outer, ``c`` inner).
    """
    s = _as_set(samples)
    if np.unique(s.journey).size < 2:
        raise ValueError("tuning needs at least two trajectories")
    if not k_frac_grid or not c_grid:
        raise ValueError("tuning grids must be non-empty")
    test_mask = split_journeys(s, test_frac, split_seed)
    train = s.subset(~test_mask)
    if np.unique(train.journey).size < 2:
        raise ValueError("training split must hold at least two trajectories")
    mse = cv_surface(train, k_frac_grid, c_grid, backend)
    if not np.all(np.isfinite(mse)):
        raise ValueError("non-finite CV error; check the training split")
    best_idx = (0, 0)
    for a in range(mse.shape[0]):
        for b in range(mse.shape[1]):
            if mse[a, b] < mse[best_idx]:
                best_idx = (a, b)
    best = BandwidthSpec(float(k_frac_grid[best_idx[0]]), float(c_grid[best_idx[1]]))
    n_test = int(test_mask.sum())
    if n_test:
        t_mse, t_mae = evaluate(s.subset(test_mask), train, best, backend)
    else:
        t_mse = t_mae = math.nan
    names = s.journey_ids
    jt = tuple(names[i] for i in np.unique(train.journey)) if names else ()
    js = tuple(names[i] for i in np.unique(s.journey[test_mask])) if names else ()
    log.info("bandwidth tuned: k_frac=%g c=%g cv_mse=%.4g test_mae=%.4g",
             best.k_frac, best.c, mse[best_idx], t_mae)
    return CvReport(tuple(map(float, k_frac_grid)), tuple(map(float, c_grid)), mse, best,
                    t_mse, t_mae, train.n, n_test, jt, js)
