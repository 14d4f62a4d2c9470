import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from commute_effects.geodesy import ProjectionError, central_meridian, project_to_utm, utm_to_lonlat

pyproj = pytest.importorskip("pyproj")

# Milan Duomo, zone 32N, from an independent Transverse Mercator implementation (PROJ)
MILAN = (514853.4959404657, 5034536.796248704)


def test_milan_regression_constant():
    x1, x2 = project_to_utm(9.1900, 45.4642, 32, True)
    assert abs(x1 - MILAN[0]) < 1e-3 and abs(x2 - MILAN[1]) < 1e-3


def test_central_meridian_maps_to_false_easting():
    for lat in (-60.0, -10.0, 0.0, 33.3, 45.0, 80.0):
        x1, _ = project_to_utm(central_meridian(32), lat, 32, lat >= 0)
        assert x1 == pytest.approx(500000.0, abs=1e-9)


def test_equator_origin():
    x1, x2 = project_to_utm(3.0, 0.0, 31, True)
    assert x1 == pytest.approx(500000.0, abs=1e-9)
    assert x2 == pytest.approx(0.0, abs=1e-9)


def test_matches_proj_within_a_millimetre(rng):
    lon = rng.uniform(6.0, 12.0, 500)
    lat = rng.uniform(-80.0, 83.9, 500)
    for north in (True, False):
        sel = lat >= 0 if north else lat < 0
        tr = pyproj.Transformer.from_crs("EPSG:4326", f"EPSG:{32632 if north else 32732}", always_xy=True)
        ex, ny = tr.transform(lon[sel], lat[sel])
        x1, x2 = project_to_utm(lon[sel], lat[sel], 32, north)
        assert np.max(np.hypot(x1 - ex, x2 - ny)) < 1e-3


def test_inverse_roundtrip_study_area(rng):
    lon = rng.uniform(6.0, 12.0, 1000)
    lat = rng.uniform(44.0, 47.0, 1000)
    x1, x2 = project_to_utm(lon, lat, 32, True)
    lo, la = utm_to_lonlat(x1, x2, 32, True)
    assert np.max(np.abs(lo - lon)) < 1e-9 and np.max(np.abs(la - lat)) < 1e-9


@given(st.floats(-83.9, 83.9), st.floats(-3.0, 3.0), st.integers(1, 60))
def test_inverse_roundtrip_property(lat, dlon, zone):
    lon = central_meridian(zone) + dlon
    north = lat >= 0
    x1, x2 = project_to_utm(lon, lat, zone, north)
    lo, la = utm_to_lonlat(x1, x2, zone, north)
    assert abs(((lo - lon + 180) % 360) - 180) < 1e-9 and abs(la - lat) < 1e-9


@pytest.mark.parametrize("lon,lat,zone", [(9.0, 84.5, 32), (9.0, -85.0, 32), (9.0, 45.0, 0), (9.0, 45.0, 61)])
def test_out_of_range_rejected(lon, lat, zone):
    with pytest.raises(ProjectionError):
        project_to_utm(lon, lat, zone, True)
