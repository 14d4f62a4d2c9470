import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from commute_effects._accel import NUMBA_INSTALLED
from commute_effects.ingest import BBox
from commute_effects.kre import (BandwidthSpec, KreSampleSet, OutsideMapError, build_map, evaluate,
                                 nn_distance, nw_estimate, predict, query_map, read_map, tune_bandwidth,
                                 write_map)
from commute_effects.kre._kernels import loo_group_predict, nw_predict
from commute_effects.kre.estimator import split_journeys

BACKENDS = ["numpy"] + (["numba"] if NUMBA_INSTALLED else [])


def oracle_estimate(xy, y, x, k, c):
    """Direct double loop: Gaussian weights with h = c * (k-th smallest distance)."""
    d = sorted(math.dist(x, p) for p in xy)
    h = c * d[k - 1]
    if h == 0.0:
        hits = [yi for p, yi in zip(xy, y) if math.dist(x, p) == 0.0]
        return sum(hits) / len(hits)
    num = den = 0.0
    for p, yi in zip(xy, y):
        w = math.exp(-math.dist(x, p) ** 2 / (2 * h * h))
        num += w * yi
        den += w
    return num / den


def random_set(rng, n=200, groups=20):
    xy = rng.uniform(0, 3000, (n, 2))
    y = np.hypot(*(xy - 1500).T) / 100 + rng.normal(0, 1, n)
    return KreSampleSet.from_arrays(xy, y, np.sort(rng.integers(0, groups, n)))


# ---------------------------------------------------------------- nn_distance


def test_nn_distance_fixtures():
    s = KreSampleSet.from_arrays([[0, 0], [100, 0], [300, 0]], [1, 2, 3])
    assert nn_distance(s, (0, 0), 1) == 0.0
    assert nn_distance(s, (0, 0), 2) == 100.0
    with pytest.raises(ValueError):
        nn_distance(s, (0, 0), 4)


@pytest.mark.parametrize("backend", BACKENDS)
def test_nn_distance_full_sort(rng, backend):
    xy = rng.uniform(0, 1000, (50, 2))
    s = KreSampleSet.from_arrays(xy, np.zeros(50))
    for x in rng.uniform(0, 1000, (10, 2)):
        ref = sorted(math.dist(x, p) for p in xy)[6]
        assert nn_distance(s, x, 7, backend) == pytest.approx(ref, rel=1e-12)


# ---------------------------------------------------------------- nw_estimate


@pytest.mark.parametrize("backend", BACKENDS)
def test_estimate_trivial(backend, rng):
    one = KreSampleSet.from_arrays([[10, 20]], [7.5])
    assert nw_estimate(one, (5000, -300), BandwidthSpec(1.0, 0.5), backend) == 7.5
    const = KreSampleSet.from_arrays(rng.uniform(0, 100, (30, 2)), np.full(30, 25.0))
    got = predict(const, rng.uniform(-50, 150, (20, 2)), BandwidthSpec(0.1, 0.3), backend)
    assert np.allclose(got, 25.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_three_sample_fixture(backend):
    xy = [[0.0, 0.0], [30.0, 40.0], [0.0, 100.0]]
    y = [10.0, 20.0, 40.0]
    x = (0.0, 10.0)
    # distances 10, sqrt(30^2+30^2), 90; k = 1 -> h = 10
    d = np.array([10.0, math.sqrt(1800.0), 90.0])
    w = np.exp(-d**2 / 200.0)
    expect = float(w @ y / w.sum())
    s = KreSampleSet.from_arrays(xy, y)
    assert nw_estimate(s, x, BandwidthSpec(1 / 3, 1.0), backend) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_double_loop_oracle(rng, backend):
    s = random_set(rng, 120)
    for kf, c in [(0.01, 0.25), (0.05, 1.0), (0.2, 2.0)]:
        spec = BandwidthSpec(kf, c)
        q = rng.uniform(-500, 3500, (15, 2))
        got = predict(s, q, spec, backend)
        ref = [oracle_estimate(s.xy, s.y, x, spec.k_for(s.n), c) for x in q]
        assert np.allclose(got, ref, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_zero_bandwidth_uses_colocated_mean(backend):
    s = KreSampleSet.from_arrays([[0, 0], [0, 0], [0, 0], [50, 0]], [1.0, 2.0, 6.0, 100.0])
    assert nw_estimate(s, (0, 0), BandwidthSpec(0.5, 1.0), backend) == 3.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_far_query_does_not_underflow(backend):
    s = KreSampleSet.from_arrays([[0, 0], [10, 0]], [1.0, 3.0])
    v = nw_estimate(s, (1e6, 0), BandwidthSpec(0.5, 0.25), backend)
    assert np.isfinite(v) and 1.0 <= v <= 3.0


def test_exact_fit_limit(rng):
    s = random_set(rng, 60)
    got = predict(s, s.xy, BandwidthSpec(1 / 60, 1e-6))
    assert np.allclose(got, s.y, atol=1e-9)


def test_backend_equivalence(rng):
    if not NUMBA_INSTALLED:
        pytest.skip("numba not installed")
    s = random_set(rng, 400, 30)
    q = rng.uniform(-1000, 4000, (300, 2))
    for k, c in [(1, 0.25), (4, 1 / 3), (40, 2.0)]:
        a = nw_predict(s.xy, s.y, q, k, c, backend="numpy")
        b = nw_predict(s.xy, s.y, q, k, c, backend="numba")
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    ks, cs = np.array([1, 3, 20]), np.array([0.25, 1.0])
    a = loo_group_predict(s.xy, s.y, s.journey, ks, cs, backend="numpy")
    b = loo_group_predict(s.xy, s.y, s.journey, ks, cs, backend="numba")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12, equal_nan=True)


def test_env_flag_selects_numpy(monkeypatch):
    from commute_effects._accel import resolve_backend
    monkeypatch.setenv("COMMUTE_EFFECTS_DISABLE_NUMBA", "1")
    assert resolve_backend(None) == "numpy"
    with pytest.raises(ValueError):
        resolve_backend("cuda")


coords = st.floats(-1e4, 1e4, allow_nan=False)


@given(st.lists(st.tuples(coords, coords, st.floats(0, 100)), min_size=1, max_size=25),
       st.tuples(coords, coords), st.floats(0.01, 1.0), st.floats(0.1, 3.0))
def test_range_property(rows, x, kf, c):
    a = np.array(rows)
    s = KreSampleSet.from_arrays(a[:, :2], a[:, 2])
    v = nw_estimate(s, x, BandwidthSpec(kf, c), "numpy")
    assert a[:, 2].min() - 1e-9 <= v <= a[:, 2].max() + 1e-9


@given(st.lists(st.tuples(coords, coords, st.floats(0, 100)), min_size=2, max_size=25),
       st.tuples(coords, coords), st.tuples(st.integers(-5000, 5000), st.integers(-5000, 5000)))
def test_translation_equivariance(rows, x, shift):
    a = np.array(rows)
    spec = BandwidthSpec(0.3, 0.5)
    s1 = KreSampleSet.from_arrays(a[:, :2], a[:, 2])
    s2 = KreSampleSet.from_arrays(a[:, :2] + shift, a[:, 2])
    v1 = nw_estimate(s1, x, spec, "numpy")
    v2 = nw_estimate(s2, np.add(x, shift), spec, "numpy")
    assert v2 == pytest.approx(v1, rel=1e-6, abs=1e-6)


def test_kernel_scale_invariance(rng):
    # the estimator factors out the largest weight; scaling by any constant is what this does
    s = random_set(rng, 50)
    x = np.array([1200.0, 900.0])
    d2 = np.sum((s.xy - x) ** 2, axis=1)
    h = 0.5 * np.sqrt(np.sort(d2)[4])
    w = np.exp(-d2 / (2 * h * h))
    est = nw_estimate(s, x, BandwidthSpec(5 / 50, 0.5))
    for scale in (1e-30, 1.0, 7.0, 1e30):
        ws = scale * w
        assert float(ws @ s.y / ws.sum()) == pytest.approx(est, rel=1e-10)


# ---------------------------------------------------------------- tuning


def brute_force_cv(train: KreSampleSet, k_fracs, cs):
    out = np.zeros((len(k_fracs), len(cs)))
    for a, kf in enumerate(k_fracs):
        k = BandwidthSpec(kf, 1.0).k_for(train.n)
        for b, c in enumerate(cs):
            errs = []
            for i in range(train.n):
                keep = train.journey != train.journey[i]
                kk = min(k, int(keep.sum()))
                errs.append((oracle_estimate(train.xy[keep], train.y[keep], train.xy[i], kk, c) - train.y[i]) ** 2)
            out[a, b] = np.mean(errs)
    return out


@pytest.mark.parametrize("backend", BACKENDS)
def test_cv_surface_brute_force(rng, backend):
    s = random_set(rng, 160, 20)
    assert np.unique(s.journey).size == 20
    rep = tune_bandwidth(s, (0.02, 0.1), (0.5, 1.0), split_seed=3, backend=backend)
    test_mask = split_journeys(s, 0.15, 3)
    assert np.unique(s.journey[test_mask]).size == 3
    ref = brute_force_cv(s.subset(~test_mask), (0.02, 0.1), (0.5, 1.0))
    assert np.allclose(rep.mse, ref, rtol=1e-10)
    assert rep.mse[rep.k_fracs.index(rep.best.k_frac), rep.cs.index(rep.best.c)] == rep.mse.min()
    mse, mae = evaluate(s.subset(test_mask), s.subset(~test_mask), rep.best, backend)
    assert (rep.test_mse, rep.test_mae) == (mse, mae)


def test_evaluate_formulas(rng):
    s = random_set(rng, 100, 10)
    te = s.subset(s.journey < 3)
    tr = s.subset(s.journey >= 3)
    spec = BandwidthSpec(0.05, 0.5)
    pred = [oracle_estimate(tr.xy, tr.y, x, spec.k_for(tr.n), 0.5) for x in te.xy]
    err = np.array(pred) - te.y
    mse, mae = evaluate(te, tr, spec)
    assert mse == pytest.approx(sum(e * e for e in err) / len(err), rel=1e-10)
    assert mae == pytest.approx(sum(abs(e) for e in err) / len(err), rel=1e-10)


def test_constant_field_selects_first_pair():
    xy = np.array([[0, 0], [10, 0], [20, 0], [0, 10], [10, 10], [20, 10]], float)
    s = KreSampleSet.from_arrays(xy, np.full(6, 4.0), [0, 0, 0, 1, 1, 1])
    rep = tune_bandwidth(s, (0.2, 0.5), (0.25, 1.0), test_frac=0.15)
    assert np.allclose(rep.mse, 0.0, atol=1e-24) and math.isnan(rep.test_mae)
    assert rep.best == BandwidthSpec(0.2, 0.25)


def test_tuning_rejects_single_trajectory():
    s = KreSampleSet.from_arrays([[0, 0], [1, 1]], [1, 2], [0, 0])
    with pytest.raises(ValueError):
        tune_bandwidth(s)


def test_k_rounding():
    assert BandwidthSpec(0.005, 1).k_for(100) == 1     # 0.5 rounds up
    assert BandwidthSpec(0.005, 1).k_for(99) == 1      # floor at 1
    assert BandwidthSpec(0.015, 1).k_for(100) == 2
    assert BandwidthSpec(0.01, 1).k_for(250) == 3


# ---------------------------------------------------------------- maps


def _const_set(v=5.0):
    return KreSampleSet.from_arrays([[100, 100], [900, 900], [500, 200]], [v, v, v])


def test_map_shape_and_constant():
    amap = build_map(_const_set(), BBox(0, 0, 1000, 1000), spacing=100, buffer=0,
                     spec=BandwidthSpec(0.5, 1.0))
    assert (amap.nx, amap.ny, amap.n_nodes) == (11, 11, 121)
    assert np.allclose(amap.values, 5.0, rtol=1e-14, atol=0)
    big = build_map(_const_set(), BBox(0, 0, 1000, 1000), spec=BandwidthSpec(0.5, 1.0))
    assert (big.nx, big.ny) == (31, 31) and big.origin == (-1000.0, -1000.0)


def test_map_values_match_estimator(rng):
    s = random_set(rng, 150)
    spec = BandwidthSpec(0.02, 0.5)
    amap = build_map(s, BBox(0, 0, 3000, 2000), spacing=250, buffer=500, spec=spec)
    nodes = amap.node_coords()
    for idx in rng.choice(len(nodes), 20, replace=False):
        i, j = divmod(int(idx), amap.ny)
        assert amap.values[i, j] == pytest.approx(oracle_estimate(s.xy, s.y, nodes[idx], 3, 0.5), rel=1e-10)


def test_query_on_node_and_tie():
    vals = np.arange(121, dtype=float).reshape(11, 11)
    amap = build_map(_const_set(), BBox(0, 0, 1000, 1000), 100, 0, BandwidthSpec(0.5, 1.0))
    amap.values = vals
    assert query_map(amap, (300, 700)) == vals[3, 7]
    # cell centre: four equidistant nodes, the smallest indices win
    assert amap.nearest_node((350, 750)) == (3, 7)
    assert amap.nearest_node((1000, 1000)) == (10, 10)
    with pytest.raises(OutsideMapError) as exc:
        query_map(amap, (1003, 1004))
    assert exc.value.distance == pytest.approx(5.0)


def test_nearest_node_exhaustive(rng):
    amap = build_map(_const_set(), BBox(0, 0, 1000, 700), 100, 150, BandwidthSpec(0.5, 1.0))
    nodes = amap.node_coords()
    for x in rng.uniform([-150, -150], [1150, 850], (100, 2)):
        d = np.hypot(*(nodes - x).T)
        i, j = amap.nearest_node(x)
        assert d[i * amap.ny + j] == d.min()
        assert d.min() <= 50 * math.sqrt(2) + 1e-9


def test_map_roundtrip(tmp_path, rng):
    s = random_set(rng, 80)
    amap = build_map(s, BBox(0, 0, 3000, 3000), 300, 300, BandwidthSpec(0.05, 1 / 3))
    write_map(amap, tmp_path / "m.csv")
    assert read_map(tmp_path / "m.csv") == amap


def test_map_rejections():
    with pytest.raises(ValueError):
        build_map(_const_set(), BBox(0, 0, 1000, 1000), spacing=0, spec=BandwidthSpec(0.5, 1))
    with pytest.raises(ValueError):
        build_map([], BBox(0, 0, 1000, 1000), spec=BandwidthSpec(0.5, 1))
