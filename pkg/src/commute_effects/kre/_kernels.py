"""Adaptive-bandwidth Nadaraya-Watson kernels.

Each kernel has a compiled loop version (``_nb_*``) and a vectorised numpy
version (``_np_*``); the public wrappers pick one through
:func:`commute_effects._accel.resolve_backend`. Both compute, per query, the
k-th nearest-neighbour distance ``d_k``, the bandwidth ``h = c * d_k`` and the
Gaussian-weighted mean of ``y`` with weights ``exp(-(d^2 - d_min^2) / (2 h^2))``
(the largest exponent is factored out so far queries never underflow to 0/0).
When ``h == 0`` the estimate is the mean of ``y`` over zero-distance samples.
Summation order per query is fixed, so results do not depend on threading.
"""

from __future__ import annotations

import numpy as np

from .._accel import njit, prange, resolve_backend

_CHUNK_BYTES = 64 * 2**20
_EXP_CUTOFF = 746.0


def _chunk_rows(n_cols: int, factor: int = 1) -> int:
    return max(1, _CHUNK_BYTES // (8 * max(1, n_cols) * factor))


# --------------------------------------------------------------------------- numba


@njit(cache=True)
def _nb_topk(qa, qb, x0, x1, groups, g_out, buf):
    """Smallest squared distances, ascending, into ``buf``; samples in group ``g_out`` skipped.

    Returns how many entries of ``buf`` are filled (fewer than its length
    when fewer samples qualify). An insertion buffer beats a full partition
    when ``k`` is a small fraction of the samples.
    """
    k = buf.shape[0]
    m = 0
    for j in range(x0.shape[0]):
        if groups[j] == g_out:
            continue
        a = qa - x0[j]
        b = qb - x1[j]
        d = a * a + b * b
        if m < k:
            p = m
            m += 1
        elif d < buf[k - 1]:
            p = k - 1
        else:
            continue
        while p > 0 and buf[p - 1] > d:
            buf[p] = buf[p - 1]
            p -= 1
        buf[p] = d
    return m


@njit(cache=True)
def _nb_weighted_mean(d2, y, h, d2min):
    """Kernel-weighted mean of ``y``; ``inf`` in ``d2`` marks excluded samples."""
    num = 0.0
    den = 0.0
    if h == 0.0:
        for j in range(d2.shape[0]):
            if d2[j] == 0.0:
                num += y[j]
                den += 1.0
        return num / den
    inv = 1.0 / (2.0 * h * h)
    for j in range(d2.shape[0]):
        e = (d2[j] - d2min) * inv
        # exp(-e) is exactly 0.0 beyond the subnormal range: skipping is bitwise neutral
        if e < _EXP_CUTOFF:
            w = np.exp(-e)
            num += w * y[j]
            den += w
    return num / den


@njit(cache=True, parallel=True)
def _nb_knn(xs, q, k):
    x0 = np.ascontiguousarray(xs[:, 0])
    x1 = np.ascontiguousarray(xs[:, 1])
    none = np.zeros(x0.shape[0], dtype=np.int64)
    out = np.empty(q.shape[0])
    for i in prange(q.shape[0]):
        buf = np.empty(k)
        _nb_topk(q[i, 0], q[i, 1], x0, x1, none, -1, buf)
        out[i] = np.sqrt(buf[k - 1])
    return out


@njit(cache=True, parallel=True)
def _nb_predict(xs, y, q, k, c):
    x0 = np.ascontiguousarray(xs[:, 0])
    x1 = np.ascontiguousarray(xs[:, 1])
    none = np.zeros(x0.shape[0], dtype=np.int64)
    out = np.empty(q.shape[0])
    for i in prange(q.shape[0]):
        buf = np.empty(k)
        _nb_topk(q[i, 0], q[i, 1], x0, x1, none, -1, buf)
        a = q[i, 0] - x0
        b = q[i, 1] - x1
        out[i] = _nb_weighted_mean(a * a + b * b, y, c * np.sqrt(buf[k - 1]), buf[0])
    return out


@njit(cache=True, parallel=True)
def _nb_loo_group(xs, y, groups, ks, cs):
    n = xs.shape[0]
    nk = ks.shape[0]
    nc = cs.shape[0]
    x0 = np.ascontiguousarray(xs[:, 0])
    x1 = np.ascontiguousarray(xs[:, 1])
    kmax = max(1, min(ks.max(), n))
    out = np.empty((n, nk, nc))
    for i in prange(n):
        buf = np.empty(kmax)
        g = groups[i]
        m = _nb_topk(x0[i], x1[i], x0, x1, groups, g, buf)
        if m == 0:
            out[i, :, :] = np.nan
            continue
        d2 = np.empty(n)
        for j in range(n):
            if groups[j] == g:
                d2[j] = np.inf
            else:
                a = x0[i] - x0[j]
                b = x1[i] - x1[j]
                d2[j] = a * a + b * b
        for a_k in range(nk):
            kk = min(ks[a_k], m)
            dk = np.sqrt(buf[kk - 1])
            for a_c in range(nc):
                out[i, a_k, a_c] = _nb_weighted_mean(d2, y, cs[a_c] * dk, buf[0])
    return out


# --------------------------------------------------------------------------- numpy


def _np_d2(q: np.ndarray, xs: np.ndarray) -> np.ndarray:
    a = q[:, 0:1] - xs[None, :, 0]
    b = q[:, 1:2] - xs[None, :, 1]
    return a * a + b * b


def _np_weighted_mean(d2: np.ndarray, y: np.ndarray, h: np.ndarray, d2min: np.ndarray) -> np.ndarray:
    """Row-wise estimate; ``d2`` may contain ``inf`` for excluded samples."""
    out = np.empty(d2.shape[0])
    zero = h == 0.0
    if np.any(~zero):
        hz = h[~zero]
        with np.errstate(invalid="ignore", over="ignore"):
            w = np.exp(-(d2[~zero] - d2min[~zero, None]) / (2.0 * hz[:, None] ** 2))
        out[~zero] = (w @ y) / w.sum(axis=1)
    if np.any(zero):
        w0 = (d2[zero] == 0.0).astype(float)
        out[zero] = (w0 @ y) / w0.sum(axis=1)
    return out


def _np_knn(xs, q, k):
    out = np.empty(q.shape[0])
    step = _chunk_rows(xs.shape[0])
    for s in range(0, q.shape[0], step):
        d2 = _np_d2(q[s:s + step], xs)
        out[s:s + step] = np.sqrt(np.partition(d2, k - 1, axis=1)[:, k - 1])
    return out


def _np_predict(xs, y, q, k, c):
    out = np.empty(q.shape[0])
    step = _chunk_rows(xs.shape[0], 3)
    for s in range(0, q.shape[0], step):
        d2 = _np_d2(q[s:s + step], xs)
        part = np.partition(d2, k - 1, axis=1)
        dk = np.sqrt(part[:, k - 1])
        out[s:s + step] = _np_weighted_mean(d2, y, c * dk, part[:, :k].min(axis=1))
    return out


def _np_loo_group(xs, y, groups, ks, cs):
    n = xs.shape[0]
    out = np.empty((n, ks.shape[0], cs.shape[0]))
    step = _chunk_rows(n, 4)
    for s in range(0, n, step):
        d2 = _np_d2(xs[s:s + step], xs)
        d2[groups[s:s + step, None] == groups[None, :]] = np.inf
        m = np.isfinite(d2).sum(axis=1)
        srt = np.sort(d2, axis=1)
        empty = m == 0
        d2min = np.where(empty, 0.0, srt[:, 0])
        rows = np.arange(srt.shape[0])
        for a_k, k in enumerate(ks):
            kk = np.minimum(k, np.maximum(m, 1))
            dk = np.where(empty, 1.0, np.sqrt(srt[rows, kk - 1]))
            for a_c, c in enumerate(cs):
                with np.errstate(invalid="ignore", divide="ignore"):
                    col = _np_weighted_mean(d2, y, c * dk, d2min)
                col[empty] = np.nan
                out[s:s + step, a_k, a_c] = col
    return out


# --------------------------------------------------------------------------- dispatch


def _as_xy(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError("locations must have shape (n, 2)")
    return a


def knn_distance(xs, q, k: int, backend: str | None = None) -> np.ndarray:
    """Distance from each query row to its k-th nearest sample."""
    xs, q = _as_xy(xs), _as_xy(q)
    if not 1 <= k <= xs.shape[0]:
        raise ValueError(f"k must lie in [1, {xs.shape[0]}], got {k}")
    if resolve_backend(backend) == "numba":
        return _nb_knn(xs, q, int(k))
    return _np_knn(xs, q, int(k))


def _convex(est: np.ndarray, y: np.ndarray) -> np.ndarray:
    # a weighted mean lies in [min y, max y]; clipping removes rounding overshoot
    # so constant fields come out exact on both backends
    if y.size:
        np.clip(est, y.min(), y.max(), out=est)
    return est


def nw_predict(xs, y, q, k: int, c: float, backend: str | None = None) -> np.ndarray:
    """Adaptive-bandwidth Nadaraya-Watson estimates at each query row."""
    xs, q = _as_xy(xs), _as_xy(q)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if xs.shape[0] == 0:
        raise ValueError("empty sample set")
    if not 1 <= k <= xs.shape[0]:
        raise ValueError(f"k must lie in [1, {xs.shape[0]}], got {k}")
    if not c > 0:
        raise ValueError("c must be positive")
    if resolve_backend(backend) == "numba":
        return _convex(_nb_predict(xs, y, q, int(k), float(c)), y)
    return _convex(_np_predict(xs, y, q, int(k), float(c)), y)


def loo_group_predict(xs, y, groups, ks, cs, backend: str | None = None) -> np.ndarray:
    """Leave-one-group-out predictions for every (k, c) pair.

    Row ``i`` is predicted from all samples whose group differs from
    ``groups[i]``; ``k`` is clipped to the number of such samples. Returns an
    array of shape ``(n, len(ks), len(cs))``; rows without any usable sample
    are NaN.
    """
    xs = _as_xy(xs)
    y = np.ascontiguousarray(y, dtype=np.float64)
    groups = np.ascontiguousarray(groups, dtype=np.int64)
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    cs = np.ascontiguousarray(cs, dtype=np.float64)
    if np.any(ks < 1) or np.any(cs <= 0):
        raise ValueError("k must be >= 1 and c > 0")
    if resolve_backend(backend) == "numba":
        return _convex(_nb_loo_group(xs, y, groups, ks, cs), y)
    return _convex(_np_loo_group(xs, y, groups, ks, cs), y)
