import datetime as dt
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from commute_effects.ingest import BBox, GpsPoint
from commute_effects.synth import CityModel, build_oracle, default_city
from commute_effects.trajectory import CampusSite

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

ROME = dt.timezone(dt.timedelta(hours=1))  # December: CET, no DST


def ts(day: int, hh: int, mm: int, ss: int = 0) -> int:
    """Unix seconds of a December 2019 local (CET) clock time."""
    return int(dt.datetime(2019, 12, day, hh, mm, ss, tzinfo=ROME).timestamp())


def pt(t: int, x1: float, x2: float, device: str = "iOS", acc: float = 10.0, user: str = "u") -> GpsPoint:
    return GpsPoint(user, device, t, float(x1), float(x2), float(acc))


@pytest.fixture(scope="session")
def default_oracle():
    return build_oracle(default_city())


@pytest.fixture(scope="session")
def small_oracle():
    city = CityModel(BBox(0.0, 0.0, 2000.0, 1500.0), CampusSite("c", 1000.0, 700.0))
    return build_oracle(city)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
