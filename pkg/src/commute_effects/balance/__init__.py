"""Propensity models, balancing weights and balance diagnostics."""

from .diagnostics import (BalanceReport, Correlation, balance_report, describe,
                          effective_sample_size, read_weights_csv, weighted_corr, weighted_mean,
                          weighted_sd, write_balance_csv, write_weights_csv)
from .entropy import (EbConvergenceError, EbSolution, MomentSpec, constraint_matrix, eb_weights,
                      entropy_balance, solve_dual)
from .propensity import MODES, GpsModel, WeightVector, fit_gps_model, ipw_weights
from .records import (BASE_COLUMNS, GENDERS, INCOMES, STUDENT_HEADER, TRACKS, StudentRecord,
                      design_matrix, program_codes, program_levels, read_students_csv, treatment,
                      write_students_csv)

__all__ = [
    "BASE_COLUMNS", "BalanceReport", "Correlation", "EbConvergenceError", "EbSolution", "GENDERS",
    "GpsModel", "INCOMES", "MODES", "MomentSpec", "STUDENT_HEADER", "StudentRecord", "TRACKS",
    "WeightVector", "balance_report", "constraint_matrix", "describe", "design_matrix",
    "eb_weights", "effective_sample_size", "entropy_balance", "fit_gps_model", "ipw_weights",
    "program_codes", "program_levels", "read_students_csv", "read_weights_csv", "solve_dual",
    "treatment", "weighted_corr", "weighted_mean", "weighted_sd", "write_balance_csv",
    "write_students_csv", "write_weights_csv",
]
