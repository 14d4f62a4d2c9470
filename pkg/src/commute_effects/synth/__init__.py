"""Synthetic city, smartphone journeys and student cohorts with known ground truth."""

from .city import (CityModel, DisconnectedError, TransitLine, TravelOracle, build_oracle, default_city,
                   read_oracle_csv, station_points, write_oracle_csv)
from .cohort import Cohort, CohortSpec, generate_cohort, resident_records
from .journeys import PingModel, SimulatedGps, Trip, simulate_journeys, study_days

__all__ = [
    "CityModel", "Cohort", "CohortSpec", "DisconnectedError", "PingModel", "SimulatedGps",
    "TransitLine", "TravelOracle", "Trip", "build_oracle", "default_city", "generate_cohort",
    "read_oracle_csv", "resident_records", "simulate_journeys", "station_points", "study_days",
    "write_oracle_csv",
]
