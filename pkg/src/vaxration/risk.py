"""High-risk probability table from survey records, and per-person imputation."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .population import RACES, SEXES, Population, ParseError
from .rng import bernoulli, generator

CONDITIONS = (
    "skin_cancer", "other_cancer", "kidney_disease", "copd",
    "obese_bmi30", "coronary_heart_disease", "diabetes",
)
RISK_AGE_BINS = (
    (18, 24), (25, 29), (30, 34), (35, 39), (40, 44), (45, 49), (50, 54),
    (55, 59), (60, 64), (65, 69), (70, 74), (75, 79), (80, 84), (85, None),
)
RISK_SURVEY_COLUMNS = ("age", "sex", "race", "hispanic") + CONDITIONS + ("survey_weight",)


def age_bin(age: int) -> int:
    """Index into RISK_AGE_BINS; minors map to the 18-24 bin."""
    if age < 25:
        return 0
    if age >= 85:
        return len(RISK_AGE_BINS) - 1
    return (age - 25) // 5 + 1


def age_bins(ages: np.ndarray) -> np.ndarray:
    ages = np.asarray(ages, dtype=np.int64)
    return np.clip((ages - 25) // 5 + 1, 0, len(RISK_AGE_BINS) - 1)


@dataclass(frozen=True)
class RiskSurveyRecord:
    age: int | None
    sex: str | None
    race: str | None
    hispanic: bool | None
    conditions: frozenset = field(default_factory=frozenset)
    survey_weight: float = 1.0

    def __post_init__(self):
        if self.age is not None and self.age < 18:
            raise ValueError("risk survey records cover adults (age >= 18) only")
        unknown = set(self.conditions) - set(CONDITIONS)
        if unknown:
            raise ValueError(f"unknown conditions {sorted(unknown)}")
        if not self.survey_weight > 0:
            raise ValueError("survey_weight must be positive")

    @property
    def high_risk(self) -> bool:
        return bool(self.conditions)

    @property
    def known(self) -> bool:
        return (self.age is not None and self.sex in SEXES and self.race in RACES
                and self.hispanic is not None)


CellKey = tuple  # (age_bin, sex, race, hispanic)


@dataclass(frozen=True)
class RiskTable:
    cells: Mapping[CellKey, float]
    bin_marginals: Mapping[int, float]

    def __post_init__(self):
        for key, p in self.cells.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"cell {key} probability {p} outside [0, 1]")

    def lookup(self, age: int, sex: str, race: str, hispanic: bool) -> float:
        b = age_bin(age)
        p = self.cells.get((b, sex, race, bool(hispanic)))
        if p is not None:
            return p
        return self.bin_marginals.get(b, 0.0)


def build_risk_table(records: Iterable[RiskSurveyRecord], use_weights: bool = True) -> RiskTable:
    """Weighted high-risk share per (age bin, sex, race, hispanic) cell."""
    mass = defaultdict(float)
    risky = defaultdict(float)
    bin_mass = defaultdict(float)
    bin_risky = defaultdict(float)
    for rec in records:
        if not rec.known:
            continue
        w = rec.survey_weight if use_weights else 1.0
        key = (age_bin(rec.age), rec.sex, rec.race, bool(rec.hispanic))
        mass[key] += w
        bin_mass[key[0]] += w
        if rec.high_risk:
            risky[key] += w
            bin_risky[key[0]] += w
    cells = {k: risky[k] / m for k, m in mass.items() if m > 0}
    marg = {b: bin_risky[b] / m for b, m in bin_mass.items() if m > 0}
    return RiskTable(cells, marg)


def risk_probabilities(population: Population, table: RiskTable) -> np.ndarray:
    probs = np.empty(len(population), dtype=np.float64)
    cache: dict = {}
    bins = age_bins(population.age)
    for i in range(len(population)):
        key = (int(bins[i]), str(population.sex[i]), str(population.race[i]), bool(population.hispanic[i]))
        p = cache.get(key)
        if p is None:
            p = table.cells.get(key)
            if p is None:
                p = table.bin_marginals.get(key[0], 0.0)
            cache[key] = p
        probs[i] = p
    return probs


def impute_high_risk(population: Population, table: RiskTable, seed: int) -> np.ndarray:
    """Independent weighted coin per person; order independent for a fixed seed."""
    probs = risk_probabilities(population, table)
    return bernoulli(seed, "risk", "high_risk", population.keys, probs)


def read_risk_survey(path) -> list[RiskSurveyRecord]:
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(RISK_SURVEY_COLUMNS):
            raise ParseError(path, 1, f"unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} columns, got {len(row)}")
            d = dict(zip(header, row))
            try:
                conds = frozenset(c for c in CONDITIONS if d[c] == "1")
                out.append(RiskSurveyRecord(
                    age=int(d["age"]) if d["age"] else None,
                    sex=d["sex"] or None,
                    race=d["race"] or None,
                    hispanic=None if d["hispanic"] == "" else d["hispanic"] == "1",
                    conditions=conds,
                    survey_weight=float(d["survey_weight"]),
                ))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return out


def write_risk_survey(records: Iterable[RiskSurveyRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RISK_SURVEY_COLUMNS)
        for r in records:
            w.writerow(
                [r.age if r.age is not None else "", r.sex or "", r.race or "",
                 "" if r.hispanic is None else int(r.hispanic)]
                + [int(c in r.conditions) for c in CONDITIONS]
                + [repr(float(r.survey_weight))]
            )


# Illustrative prevalence for synthetic surveys: rises with age, higher for
# Black and Indigenous respondents.
_BASE_PREVALENCE = (0.22, 0.27, 0.31, 0.35, 0.39, 0.43, 0.48, 0.53, 0.57, 0.61, 0.64, 0.66, 0.67, 0.66)
_RACE_FACTOR = {"white": 1.0, "black": 1.25, "indigenous": 1.3, "asian": 0.7,
                "pacific_islander": 1.2, "other": 1.05, "multiracial": 1.1}


def generate_risk_survey(seed: int, n: int = 50_000) -> list[RiskSurveyRecord]:
    """Synthetic adult survey with plausible age/race gradients in prevalence."""
    rng = generator(seed, "risk_survey")
    ages = rng.integers(18, 91, size=n)
    sexes = np.where(rng.random(n) < 0.51, "female", "male")
    races = rng.choice(np.array(RACES), size=n, p=[0.72, 0.12, 0.015, 0.05, 0.005, 0.05, 0.04])
    hisp = rng.random(n) < 0.15
    weights = rng.integers(50, 300, size=n).astype(float)
    u = rng.random(n)
    pick = rng.integers(0, len(CONDITIONS), size=n)
    out = []
    for i in range(n):
        p = min(0.95, _BASE_PREVALENCE[age_bin(int(ages[i]))] * _RACE_FACTOR[str(races[i])]
                * (1.1 if hisp[i] else 1.0))
        conds = frozenset({CONDITIONS[pick[i]]}) if u[i] < p else frozenset()
        out.append(RiskSurveyRecord(int(ages[i]), str(sexes[i]), str(races[i]), bool(hisp[i]),
                                    conds, float(weights[i])))
    return out


__all__ = [
    "CONDITIONS", "RISK_AGE_BINS", "RiskSurveyRecord", "RiskTable", "age_bin",
    "build_risk_table", "impute_high_risk", "read_risk_survey", "write_risk_survey",
    "generate_risk_survey", "risk_probabilities",
]
