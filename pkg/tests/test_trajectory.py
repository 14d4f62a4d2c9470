import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from commute_effects.ingest import StudyWindow
from commute_effects.trajectory import (MOVE, STOP, CampusSite, Journey, LabeledSample, StopCriteria,
                                        deduplicate, detect_stops, extract_journeys, filter_journeys,
                                        journey_stats, label_all, label_commute_times, read_samples_csv,
                                        rejection_reason, segment_journeys, write_samples_csv)

from conftest import pt, ts

T0 = ts(2, 8, 0)


def flags_of(*pairs, device="iOS"):
    """Flags for a two-point stream: first at origin, second after (dx m, dt s)."""
    out = []
    for dx, dt in pairs:
        out.append(detect_stops([pt(T0, 0, 0, device), pt(T0 + dt, dx, 0, device)])[1])
    return out


def test_first_point_is_stop():
    assert detect_stops([pt(T0, 0, 0)])[0] == STOP
    assert detect_stops([pt(T0, 0, 0), pt(T0 + 60, 5000, 0)])[0] == STOP


@pytest.mark.parametrize("device", ["iOS", "Android"])
def test_global_rules(device):
    zero, long_gap, slow, fast = flags_of((0, 10), (5000, 3601), (100, 200), (2000, 100), device=device)
    assert zero == STOP and long_gap == STOP and slow == STOP   # 0.5 m/s < 0.7
    assert fast == MOVE


def test_global_gap_boundary():
    # exactly 60 minutes is not a long gap; a fast hop keeps it a move
    assert flags_of((1e6, 3600))[0] == MOVE
    assert flags_of((1e6, 3601))[0] == STOP


def test_android_rule():
    # 0.8 m/s over 10 min: fires for Android (gap < 15 min, v < 1), not for iOS (dx >= 100)
    assert flags_of((480, 600), device="Android")[0] == STOP
    assert flags_of((480, 600), device="iOS")[0] == MOVE
    # same speed but a 16 minute gap escapes the Android rule
    assert flags_of((768, 960), device="Android")[0] == MOVE


def test_ios_rule():
    # 90 m at 0.9 m/s: iOS stop (dx < 100, v < 1); Android gap rule also applies, so use a long gap
    assert flags_of((90, 100), device="iOS")[0] == STOP
    assert flags_of((99.9, 100), device="iOS")[0] == STOP
    assert flags_of((100, 100), device="iOS")[0] == MOVE   # 100 m is not < 100


def test_thresholds_are_configurable():
    strict = StopCriteria(global_max_speed=30.0)
    pts = [pt(T0, 0, 0), pt(T0 + 100, 2000, 0)]
    assert detect_stops(pts, strict)[1] == STOP
    with pytest.raises(ValueError):
        StopCriteria(ios_max_speed=-1)


def test_unsorted_stream_rejected():
    with pytest.raises(ValueError):
        detect_stops([pt(T0 + 10, 0, 0), pt(T0, 100, 0)])


def test_segmentation_fixture():
    pts = [pt(T0 + 60 * i, 1000 * i, 0) for i in range(7)]
    flags = [STOP, MOVE, STOP, MOVE, MOVE, STOP, MOVE]
    js = segment_journeys(pts, flags)
    assert [len(j) for j in js] == [2, 3]
    assert js[0].points == (pts[1], pts[2]) and js[1].points == (pts[3], pts[4], pts[5])


def test_trailing_moves_dropped_and_stops_only():
    pts = [pt(T0 + 60 * i, 0, 0) for i in range(4)]
    assert segment_journeys(pts, [STOP] * 4) == []
    assert segment_journeys(pts, [MOVE] * 4) == []
    with pytest.raises(ValueError):
        segment_journeys(pts, [STOP])


def test_deduplicate_keeps_most_accurate():
    a, b, c = pt(T0, 0, 0, acc=30), pt(T0, 5, 5, acc=10), pt(T0 - 5, 1, 1)
    out, n = deduplicate([a, b, c])
    assert out == [c, b] and n == 1


def test_extract_counts_conserve_points(rng):
    pts = []
    for u in ("a", "b"):
        t = T0
        for _ in range(40):
            t += int(rng.integers(20, 400))
            pts.append(pt(t, rng.uniform(0, 3000), rng.uniform(0, 3000), user=u))
    pts.append(pts[5])   # exact duplicate
    js, counts = extract_journeys(pts)
    assert counts["duplicates"] == 1
    assert sum(len(j) for j in js) + counts["outside_journeys"] + counts["duplicates"] == len(pts)


SITE = CampusSite("c", 0.0, 0.0)
WIN = StudyWindow()


def _journey(end_xy, start=(5000.0, 0.0), n=6, arrive=ts(2, 8, 30), acc=10.0):
    xs = np.linspace(start[0], end_xy[0], n)
    ys = np.linspace(start[1], end_xy[1], n)
    return Journey("u", tuple(pt(arrive - 120 * (n - 1 - i), xs[i], ys[i], acc=acc) for i in range(n)))


def test_destination_radius():
    assert rejection_reason(_journey((250.0, 0.0)), SITE, WIN) is None
    assert rejection_reason(_journey((251.0, 0.0)), SITE, WIN) == "destination"


def test_retention_rules():
    assert rejection_reason(_journey((0, 0), n=5), SITE, WIN) == "min_points"
    assert rejection_reason(_journey((0, 0), acc=1500.0), SITE, WIN) == "accuracy"
    assert rejection_reason(_journey((0, 0), acc=1499.9), SITE, WIN) is None
    assert rejection_reason(_journey((0, 0), start=(100.0, 0.0)), SITE, WIN) == "self_loop"
    assert rejection_reason(_journey((0, 0), arrive=ts(2, 9, 31)), SITE, WIN) == "arrival_window"
    assert rejection_reason(_journey((0, 0), arrive=ts(2, 9, 30)), SITE, WIN) is None
    assert rejection_reason(_journey((0, 0), arrive=ts(2, 7, 30)), SITE, WIN) is None


def test_filter_keeps_order():
    js = [_journey((0, 0), arrive=ts(d, 8, 0)) for d in (2, 3, 4)] + [_journey((400, 0))]
    assert filter_journeys(js, SITE, WIN) == js[:3]


def test_labels():
    j = Journey("u", (pt(T0 - 900, 10, 0), pt(T0 - 450, 5, 0), pt(T0, 0, 0)))
    lab = label_commute_times(j)
    assert [s.y for s in lab] == [15.0, 7.5, 0.0]
    assert lab[0] == LabeledSample(10.0, 0.0, 15.0, j.journey_id, "u", T0 - 900)


def test_journey_validation():
    with pytest.raises(ValueError):
        Journey("u", (pt(T0, 0, 0),))
    with pytest.raises(ValueError):
        Journey("u", (pt(T0, 0, 0), pt(T0, 1, 0)))


def test_journey_stats_fixture():
    j1 = Journey("a", (pt(T0, 0, 0), pt(T0 + 60, 3000, 4000)))        # 5 km
    j2 = Journey("a", (pt(T0, 0, 0), pt(T0 + 60, 0, 1000), pt(T0 + 120, 0, 2000)))
    j3 = Journey("b", (pt(T0, 0, 0), pt(T0 + 60, 0, 3000)))
    s = journey_stats([j1, j2, j3])
    assert (s.n_signals, s.n_trajectories, s.n_users) == (7, 3, 2)
    assert s.signals_per_trajectory == (2.0, 7 / 3, 3.0)
    assert s.km_per_trajectory == pytest.approx((2.0, 10 / 3, 5.0))
    assert s.signals_per_user == (2.0, 3.5, 5.0)
    assert s.trajectories_per_user == (1.0, 1.5, 2.0)
    assert all(math.isnan(v) for v in journey_stats([]).km_per_trajectory)


def test_stats_brute_force(rng):
    js = []
    for k in range(50):
        n = int(rng.integers(2, 12))
        xy = rng.uniform(0, 5000, (n, 2))
        js.append(Journey(f"u{k % 7}", tuple(pt(T0 + 30 * i, *xy[i]) for i in range(n))))
    s = journey_stats(js)
    lengths = [sum(math.dist((a.x1, a.x2), (b.x1, b.x2)) for a, b in zip(j.points, j.points[1:])) / 1000
               for j in js]
    assert s.km_per_trajectory[1] == pytest.approx(np.mean(lengths), rel=1e-12)
    assert s.n_signals == sum(len(j) for j in js)
    assert s.n_users == 7


def test_samples_roundtrip(tmp_path):
    j = _journey((0, 0))
    samples = label_all([j])
    write_samples_csv(tmp_path / "s.csv", samples)
    assert read_samples_csv(tmp_path / "s.csv") == samples


@given(st.lists(st.booleans(), max_size=40))
def test_segmentation_partition(flags):
    pts = [pt(T0 + 10 * i, i, 0) for i in range(len(flags))]
    js = segment_journeys(pts, flags)
    # each journey ends with exactly one stop and contains only moves before it
    for j in js:
        idx = [p.t for p in j.points]
        f = [flags[(t - T0) // 10] for t in idx]
        assert f[-1] == STOP and not any(f[:-1])
    # journeys are disjoint and ordered
    ts_all = [p.t for j in js for p in j.points]
    assert ts_all == sorted(set(ts_all))
    # every move followed eventually by a stop is covered
    last_stop = max((i for i, f in enumerate(flags) if f), default=-1)
    assert sum(len(j) - 1 for j in js) == sum(1 for i, f in enumerate(flags) if not f and i < last_stop)
