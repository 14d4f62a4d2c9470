"""Side-by-side descriptive statistics for nested student samples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..balance.records import INCOMES, StudentRecord

GROUP_NAMES = ("population", "passers", "residents", "resident_passers")

_CATEGORICAL = (
    ("Gender", "gender", (("Male", "M"), ("Female", "F"))),
    ("Family income", "income", tuple((lv, lv) for lv in INCOMES)),
    ("High school track", "hs_track", tuple((lv, lv) for lv in ("Humanistic", "Scientific", "Technical", "Other"))),
)
_CONTINUOUS = (
    ("Admission age", "admission_age"),
    ("High school grade", "hs_grade"),
    ("Commuting time", "commute_hours"),
    ("GPA", "gpa"),
)
_ORDER = ("Gender", "Admission age", "Family income", "High school grade", "High school track",
          "Commuting time", "GPA")


@dataclass(frozen=True)
class Cell:
    """One table entry; ``count``/``share`` for categories, ``value`` for summaries."""

    count: int | None = None
    share: float | None = None
    value: float | tuple[float, float] | None = None

    def text(self) -> str:
        if self.count is not None:
            return "" if self.share is None else f"{self.count} ({100 * self.share:.1f}%)"
        if self.value is None:
            return ""
        if isinstance(self.value, tuple):
            return f"[{self.value[0]:g};{self.value[1]:g}]"
        return f"{self.value:.3g}"


@dataclass(frozen=True)
class ComparisonTable:
    groups: tuple[str, ...]
    n: tuple[int, ...]
    rows: tuple[tuple[str, str, tuple[Cell, ...]], ...]

    def row(self, variable: str, statistic: str) -> tuple[Cell, ...]:
        for v, s, cells in self.rows:
            if v == variable and s == statistic:
                return cells
        raise KeyError((variable, statistic))


def _summary(values: list) -> tuple[Cell, Cell, Cell]:
    """Range, mean and sample SD; blank when any value is missing or the group is empty."""
    if not values or any(v is None for v in values):
        return Cell(), Cell(), Cell()
    x = np.asarray(values, float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else math.nan
    return Cell(value=(float(x.min()), float(x.max()))), Cell(value=float(x.mean())), Cell(value=sd)


def cohort_compare(groups: Sequence[Sequence[StudentRecord]],
                   names: Sequence[str] = GROUP_NAMES) -> ComparisonTable:
    """Counts with shares per category and range/mean/SD per numeric variable.

    A variable that is unobserved for some member of a group (commuting time
    outside the residents, GPA for students who passed nothing) is left
    blank for that group, as is every cell of an empty group.
    """
    if len(groups) != len(names):
        raise ValueError("one name per group")
    per_var: dict[str, list[tuple[str, tuple[Cell, ...]]]] = {}
    for title, attr, levels in _CATEGORICAL:
        rows = []
        for label, level in levels:
            cells = []
            for g in groups:
                k = sum(getattr(r, attr) == level for r in g)
                cells.append(Cell(count=k, share=k / len(g) if g else None))
            rows.append((label, tuple(cells)))
        per_var[title] = rows
    for title, attr in _CONTINUOUS:
        stats = [_summary([getattr(r, attr) for r in g]) for g in groups]
        per_var[title] = [(lab, tuple(s[k] for s in stats)) for k, lab in enumerate(("Range", "Mean", "SD"))]
    rows = tuple((v, s, c) for v in _ORDER for s, c in per_var[v])
    return ComparisonTable(tuple(names), tuple(len(g) for g in groups), rows)


def resident_groups(population: Sequence[StudentRecord]) -> list[list[StudentRecord]]:
    """The four nested samples: everyone, passers, residents (commute known), resident passers."""
    pop = list(population)
    res = [r for r in pop if r.commute_hours is not None]
    return [pop, [r for r in pop if r.passed_any], res, [r for r in res if r.passed_any]]


def write_compare_csv(path: str | Path, table: ComparisonTable) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["variable", "statistic", *(f"{g} N={n}" for g, n in zip(table.groups, table.n))])
        for v, s, cells in table.rows:
            wr.writerow([v, s, *(c.text() for c in cells)])


def compare_mapping(table: ComparisonTable) -> Mapping[tuple[str, str], tuple[str, ...]]:
    return {(v, s): tuple(c.text() for c in cells) for v, s, cells in table.rows}


__all__ = ["Cell", "ComparisonTable", "GROUP_NAMES", "cohort_compare", "compare_mapping",
           "resident_groups", "write_compare_csv"]
