"""Outcome models: weighted polynomial LMM, effect curves, pass/fail GLMM and sample comparison."""

from .compare import (Cell, ComparisonTable, GROUP_NAMES, cohort_compare, compare_mapping,
                      resident_groups, write_compare_csv)
from .effects import (CURVE_HEADER, EffectCurve, adrf, amef, cluster_bootstrap_curve, effect_curve, finite_difference_gap,
                      read_curve_csv, treatment_grid, weighted_quantiles, write_curve_csv)
from .glmm import (FittedGlmm, GLMM_COVARIATES, LaplaceProblem, SeparationError, fit_glmm_binary,
                   glmm_design, logistic_newton)
from .lmm import COVARIATES, DegreeSelection, FittedLmm, LmmSpec, fit_lmm, lmm_design, loo_rmse, select_degree

__all__ = [
    "COVARIATES", "CURVE_HEADER", "Cell", "ComparisonTable", "DegreeSelection", "EffectCurve",
    "FittedGlmm", "FittedLmm", "GLMM_COVARIATES", "GROUP_NAMES", "LaplaceProblem", "LmmSpec",
    "SeparationError", "adrf", "amef", "cluster_bootstrap_curve", "cohort_compare", "compare_mapping", "effect_curve",
    "finite_difference_gap", "fit_glmm_binary", "fit_lmm", "glmm_design", "lmm_design",
    "logistic_newton", "loo_rmse", "read_curve_csv", "resident_groups", "select_degree",
    "treatment_grid", "weighted_quantiles", "write_compare_csv", "write_curve_csv",
]
