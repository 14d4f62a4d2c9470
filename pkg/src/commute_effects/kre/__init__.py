"""Kernel regression estimation of commuting-time accessibility maps."""

from .estimator import (
    DEFAULT_CS,
    DEFAULT_K_FRACS,
    BandwidthSpec,
    CvReport,
    KreSampleSet,
    cv_surface,
    evaluate,
    nn_distance,
    nw_estimate,
    predict,
    split_journeys,
    tune_bandwidth,
)
from .grid import AccessibilityMap, OutsideMapError, build_map, query_map, read_map, write_map

__all__ = [
    "AccessibilityMap", "BandwidthSpec", "CvReport", "DEFAULT_CS", "DEFAULT_K_FRACS",
    "KreSampleSet", "OutsideMapError", "build_map", "cv_surface", "evaluate", "nn_distance",
    "nw_estimate", "predict", "query_map", "read_map", "split_journeys", "tune_bandwidth",
    "write_map",
]
