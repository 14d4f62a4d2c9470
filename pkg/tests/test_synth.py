import numpy as np
import pytest

from commute_effects.ingest import BBox, StudyWindow, filter_window, project_records
from commute_effects.synth import (CityModel, CohortSpec, PingModel, TransitLine, build_oracle,
                                   generate_cohort, resident_records, simulate_journeys)
from commute_effects.synth.city import lattice_edges
from commute_effects.synth.cohort import FEMALE_SHARE, INCOME_PROBS, _clipped_normal_mean
from commute_effects.trajectory import CampusSite, extract_journeys, filter_journeys


def bellman_ford(n, src, dst, wt, source):
    d = np.full(n, np.inf)
    d[source] = 0.0
    for _ in range(n - 1):
        changed = False
        for a, b, w in zip(src, dst, wt):
            for u, v in ((a, b), (b, a)):
                if d[u] + w < d[v]:
                    d[v] = d[u] + w
                    changed = True
        if not changed:
            break
    return d


@pytest.mark.parametrize("lines", [(), (TransitLine(((0.0, 200.0), (400.0, 200.0)), station_spacing=200.0),)])
def test_small_lattice_matches_bellman_ford(lines):
    city = CityModel(BBox(0, 0, 400, 400), CampusSite("c", 200, 200), transit_lines=lines, boarding_wait=10.0)
    orc = build_oracle(city)
    assert (orc.nx, orc.ny) == (5, 5)
    g = orc.graph.tocoo()
    ref = bellman_ford(orc.nodes.shape[0], g.row, g.col, g.data, orc.campus_node)
    assert np.allclose(orc.time_s, ref, rtol=1e-12, atol=1e-9)


def test_lattice_edges_count():
    s, d, _ = lattice_edges(5, 4)
    # horizontal + vertical + two diagonal families
    assert s.size == 4 * 4 + 5 * 3 + 2 * 4 * 3
    assert len({tuple(sorted(p)) for p in zip(s, d)}) == s.size


def test_walk_only_times_are_octile(small_oracle):
    orc = small_oracle
    c = orc.nodes[orc.campus_node]
    dx = np.abs(orc.lattice_xy() - c) / 100.0
    octile = (np.maximum(*dx.T) + (np.sqrt(2) - 1) * np.minimum(*dx.T)) * 100.0 / 3.0
    assert np.allclose(orc.time_s[: orc.n_lattice], octile, rtol=1e-12)


def test_transit_shortens_times(default_oracle):
    walk = build_oracle(CityModel(default_oracle.city.bbox, default_oracle.city.campus))
    n = default_oracle.n_lattice
    assert np.all(default_oracle.time_s[:n] <= walk.time_s[:n] + 1e-9)
    assert default_oracle.time_s[:n].mean() < 0.7 * walk.time_s[:n].mean()


def test_paths_reach_campus_with_decreasing_time(default_oracle, rng):
    for node in rng.integers(0, default_oracle.n_lattice, 20):
        p = default_oracle.path(int(node))
        assert p[-1] == default_oracle.campus_node
        assert np.all(np.diff(default_oracle.time_s[p]) < 0)


def test_true_minutes_on_nodes(small_oracle):
    xy = small_oracle.lattice_xy()[::7]
    assert np.allclose(small_oracle.true_minutes(xy), small_oracle.lattice_minutes()[::7])


def test_city_validation():
    with pytest.raises(ValueError):
        CityModel(BBox(0, 0, 100, 100), CampusSite("c", 500, 50))
    with pytest.raises(ValueError):
        TransitLine(((0.0, 0.0),))


# ---------------------------------------------------------------- journeys


def test_simulation_deterministic(small_oracle):
    a = simulate_journeys(small_oracle, 30, seed=7)
    b = simulate_journeys(small_oracle, 30, seed=7)
    c = simulate_journeys(small_oracle, 30, seed=8)
    assert a.records == b.records and a.trips == b.trips
    assert a.records != c.records
    assert len(a.trips) == 30
    assert len(simulate_journeys(small_oracle, 0, seed=1)) == 0


def test_simulated_trips_are_recoverable(default_oracle):
    sim = simulate_journeys(default_oracle, 60, seed=3, ping_model=PingModel(bad_fix_prob=0.0))
    win = StudyWindow()
    bbox = default_oracle.city.bbox
    pts = filter_window(project_records(sim.records), win, bbox.expand(2000))
    for t in sim.trips:
        assert win.day_ok(t.arrive_t) and win.arrival_ok(t.arrive_t)
        assert t.arrive_t - t.depart_t == pytest.approx(60 * t.true_minutes, abs=1e-6)
    js, _ = extract_journeys(pts)
    kept = filter_journeys(js, default_oracle.city.campus, win)
    # most trips long enough to carry six pings survive the whole pipeline
    assert len(kept) >= 0.5 * len(sim.trips)
    # the closing stop is the first stationary ping, one dwell after reaching campus
    arrivals = {}
    for t in sim.trips:
        arrivals.setdefault(t.user_id, []).append(t.arrive_t)
    lag = [min(abs(j.arrival_t - a) for a in arrivals[j.user_id]) for j in kept]
    assert np.mean(np.array(lag) <= PingModel().dwell[1] + 1) >= 0.9


def test_device_mix_extremes(small_oracle):
    all_ios = simulate_journeys(small_oracle, 20, device_mix=1.0, seed=2)
    assert {r.device_type for r in all_ios.records} == {"iOS"}
    none_ios = simulate_journeys(small_oracle, 20, device_mix=0.0, seed=2)
    assert {r.device_type for r in none_ios.records} == {"Android"}


# ---------------------------------------------------------------- cohort


def test_cohort_deterministic(default_oracle):
    spec = CohortSpec(n_students=200, rng_seed=4)
    a, b = generate_cohort(spec, default_oracle, 30), generate_cohort(spec, default_oracle, 30)
    assert a.records == b.records
    assert len(a.records) == 230 and len(resident_records(a)) == 200
    assert all(r.commute_hours is None for r in a.records[200:])
    assert a.homes.shape == (200, 2)


def test_cohort_margins(default_oracle):
    c = generate_cohort(CohortSpec(n_students=6000, n_programs=20, rng_seed=1), default_oracle)
    recs = c.records
    female = np.mean([r.gender == "F" for r in recs])
    assert abs(female - FEMALE_SHARE) < 0.03
    inc = np.array([np.mean([r.income == k for r in recs]) for k in ("High", "Middle", "Low", "Grant")])
    assert np.max(np.abs(inc - INCOME_PROBS)) < 0.03
    assert all(0.6 <= r.hs_grade <= 1.0 for r in recs)
    assert all(0.0 <= r.gpa <= 12.0 for r in recs if r.gpa is not None)
    assert {r.program_id for r in recs} == set(range(1, 21))


def test_confounding_moves_homes(default_oracle):
    """Merit students live closer to campus when confounding is on, not when it is off."""
    def gap(kappa):
        c = generate_cohort(CohortSpec(n_students=3000, confounding_strength=kappa, rng_seed=2),
                            default_oracle)
        a = np.array([r.commute_hours for r in c.records])
        merit = np.array([r.hs_grade >= 0.9 for r in c.records])
        return a[~merit].mean() - a[merit].mean()
    assert gap(1.0) > 0.05
    assert abs(gap(0.0)) < 0.05


def test_everybody_passes_with_infinite_intercept(small_oracle):
    c = generate_cohort(CohortSpec(n_students=100, n_programs=5, pass_intercept=float("inf")), small_oracle)
    assert all(r.passed_any and r.gpa is not None for r in c.records)


def test_true_adrf_without_noise_or_clip(small_oracle):
    spec = CohortSpec(n_students=100, n_programs=5, noise_sd=0.0, dose_response=(6.0, -0.5))
    c = generate_cohort(spec, small_oracle)
    a = np.array([0.0, 0.5, 1.0])
    loc = c.covariate_part + c.program_effects[[r.program_id - 1 for r in c.records]]
    assert np.allclose(c.true_adrf(a), [np.clip(spec.dose(x) + loc, 0, 12).mean() for x in a])


def test_clipped_normal_mean_monte_carlo(rng):
    m = np.array([-1.0, 0.5, 6.0, 11.5, 14.0])
    draws = np.clip(m[:, None] + 2.0 * rng.standard_normal((5, 400000)), 0, 12).mean(axis=1)
    assert np.allclose(_clipped_normal_mean(m, 2.0), draws, atol=0.01)


def test_cohort_spec_validation():
    with pytest.raises(ValueError):
        CohortSpec(n_students=3, n_programs=5)
    with pytest.raises(ValueError):
        CohortSpec(noise_sd=-1)
