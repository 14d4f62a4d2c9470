"""Student records, their CSV form and the dummy-coded design matrix."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STUDENT_HEADER = ("student_id", "gender", "admission_age", "income", "hs_grade", "hs_track",
                  "program_id", "commute_hours", "gpa", "passed_any")

GENDERS = ("M", "F")
INCOMES = ("High", "Middle", "Low", "Grant")
TRACKS = ("Scientific", "Humanistic", "Technical", "Other")

_GENDER_ALIASES = {"m": "M", "male": "M", "f": "F", "female": "F"}

BASE_COLUMNS = ("(Intercept)", "gender_F", "admission_age", "income_Middle", "income_Low",
                "income_Grant", "hs_grade", "track_Humanistic", "track_Technical", "track_Other")

# variable -> design columns it expands to (intercept excluded)
VARIABLE_COLUMNS = {
    "AdmissionAge": ("admission_age",),
    "Gender": ("gender_F",),
    "HighSchoolTrack": ("track_Humanistic", "track_Technical", "track_Other"),
    "HighSchoolGrade": ("hs_grade",),
    "FamilyIncome": ("income_Middle", "income_Low", "income_Grant"),
}


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    gender: str
    admission_age: float
    income: str
    hs_grade: float
    hs_track: str
    program_id: int
    commute_hours: float | None
    gpa: float | None
    passed_any: bool

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"{self.student_id}: unknown gender {self.gender!r}")
        if self.income not in INCOMES:
            raise ValueError(f"{self.student_id}: unknown income class {self.income!r}")
        if self.hs_track not in TRACKS:
            raise ValueError(f"{self.student_id}: unknown high-school track {self.hs_track!r}")
        if not 0.6 <= self.hs_grade <= 1.0:
            raise ValueError(f"{self.student_id}: hs_grade {self.hs_grade} outside [0.6, 1]")
        if self.commute_hours is not None and not self.commute_hours >= 0:
            raise ValueError(f"{self.student_id}: negative commute time")
        if (self.gpa is not None) != bool(self.passed_any):
            raise ValueError(f"{self.student_id}: gpa must be present iff passed_any")

    def with_commute(self, hours: float) -> "StudentRecord":
        return replace(self, commute_hours=float(hours))


def _opt_float(s: str) -> float | None:
    s = s.strip()
    return None if s == "" or s.lower() == "na" else float(s)


def read_students_csv(path: str | Path) -> list[StudentRecord]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ())[:len(STUDENT_HEADER)] != STUDENT_HEADER:
            raise ValueError(f"{path}: expected header {','.join(STUDENT_HEADER)}")
        out = []
        for r in reader:
            g = _GENDER_ALIASES.get(r["gender"].strip().lower())
            if g is None:
                raise ValueError(f"{path}: unknown gender {r['gender']!r}")
            out.append(StudentRecord(
                student_id=r["student_id"].strip(), gender=g,
                admission_age=float(r["admission_age"]), income=r["income"].strip(),
                hs_grade=float(r["hs_grade"]), hs_track=r["hs_track"].strip(),
                program_id=int(r["program_id"]), commute_hours=_opt_float(r["commute_hours"]),
                gpa=_opt_float(r["gpa"]), passed_any=r["passed_any"].strip() in ("1", "true", "True"),
            ))
    return out


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_students_csv(path: str | Path, records: Iterable[StudentRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDENT_HEADER)
        for r in records:
            w.writerow([r.student_id, r.gender, _fmt(r.admission_age), r.income, _fmt(r.hs_grade),
                        r.hs_track, r.program_id, _fmt(r.commute_hours), _fmt(r.gpa),
                        int(bool(r.passed_any))])


def program_levels(records: Sequence[StudentRecord]) -> list[int]:
    return sorted({r.program_id for r in records})


def program_codes(records: Sequence[StudentRecord], levels: Sequence[int] | None = None) -> np.ndarray:
    levels = program_levels(records) if levels is None else list(levels)
    index = {p: i for i, p in enumerate(levels)}
    return np.array([index[r.program_id] for r in records], dtype=np.int64)


def design_matrix(records: Sequence[StudentRecord], include_program: str = "none",
                  programs: Sequence[int] | None = None) -> tuple[np.ndarray, list[str]]:
    """Intercept, dummy-coded covariates against their base levels, optional program dummies.

    ``include_program="dummies"`` appends one column per program other than
    the first (smallest id) of ``programs`` (default: those present).
    """
    if not records:
        raise ValueError("design_matrix needs at least one record")
    if include_program not in ("none", "dummies"):
        raise ValueError("include_program must be 'none' or 'dummies'")
    n = len(records)
    X = np.zeros((n, len(BASE_COLUMNS)))
    X[:, 0] = 1.0
    for i, r in enumerate(records):
        X[i, 1] = r.gender == "F"
        X[i, 2] = r.admission_age
        if r.income != "High":
            X[i, 2 + INCOMES.index(r.income)] = 1.0
        X[i, 6] = r.hs_grade
        if r.hs_track != "Scientific":
            X[i, 6 + TRACKS.index(r.hs_track)] = 1.0
    names = list(BASE_COLUMNS)
    if include_program == "dummies":
        levels = program_levels(records) if programs is None else sorted(programs)
        unknown = {r.program_id for r in records} - set(levels)
        if unknown:
            raise ValueError(f"programs {sorted(unknown)} not among declared levels")
        P = np.zeros((n, len(levels) - 1))
        for i, r in enumerate(records):
            k = levels.index(r.program_id)
            if k:
                P[i, k - 1] = 1.0
        X = np.hstack([X, P])
        names += [f"program_{p}" for p in levels[1:]]
    return X, names


def treatment(records: Sequence[StudentRecord]) -> np.ndarray:
    a = np.array([math.nan if r.commute_hours is None else r.commute_hours for r in records])
    if np.any(np.isnan(a)):
        missing = [r.student_id for r in records if r.commute_hours is None][:5]
        raise ValueError(f"commute_hours missing for students {missing}")
    return a
