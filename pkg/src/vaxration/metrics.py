"""Benchmarks and comparison statistics over allocation results."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .allocation import AllocationResult
from .population import ParseError

DEATH_RACES = ("indigenous", "asian", "black", "latino", "white", "pacific_islander")
RACE_DEATH_COLUMNS = ("race", "population_share", "death_rate", "age_adjusted_death_rate")
STATE_OUTCOME_COLUMNS = ("state", "cases", "deaths")
FAIR_SHARE_COLUMNS = ("state", "benchmark", "supply", "index")
BENCHMARKS = ("population", "cases", "deaths")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class RaceDeathTable:
    population_share: Mapping[str, float]
    death_rate: Mapping[str, float]
    age_adjusted_death_rate: Mapping[str, float]

    def __post_init__(self):
        for name in ("population_share", "death_rate", "age_adjusted_death_rate"):
            col = getattr(self, name)
            missing = set(DEATH_RACES) - set(col)
            if missing:
                raise MetricsError(f"{name} missing race classes {sorted(missing)}")
            extra = set(col) - set(DEATH_RACES)
            if extra:
                raise MetricsError(f"{name} has unknown race classes {sorted(extra)}")
            if any(not (v >= 0 and math.isfinite(v)) for v in col.values()):
                raise MetricsError(f"{name} values must be finite and non-negative")

    def rates(self, age_adjusted: bool = False) -> Mapping[str, float]:
        return self.age_adjusted_death_rate if age_adjusted else self.death_rate


def death_share_estimate(table: RaceDeathTable, races: Iterable[str], age_adjusted: bool = False) -> float:
    """Share of deaths among ``races``: sum(pop * rate) over races / over all six."""
    races = set(races)
    unknown = races - set(DEATH_RACES)
    if unknown:
        raise MetricsError(f"unknown race classes {sorted(unknown)}")
    rates = table.rates(age_adjusted)
    den = math.fsum(table.population_share[r] * rates[r] for r in DEATH_RACES)
    if den == 0:
        raise MetricsError("death-share denominator is zero")
    return math.fsum(table.population_share[r] * rates[r] for r in DEATH_RACES if r in races) / den


def read_race_deaths(path) -> RaceDeathTable:
    path = Path(path)
    pop, rate, adj = {}, {}, {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != RACE_DEATH_COLUMNS:
            raise ParseError(path, 1, f"unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RACE_DEATH_COLUMNS):
                raise ParseError(path, lineno, f"expected {len(RACE_DEATH_COLUMNS)} columns, got {len(row)}")
            try:
                pop[row[0]], rate[row[0]], adj[row[0]] = float(row[1]), float(row[2]), float(row[3])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return RaceDeathTable(pop, rate, adj)


# --- share curves -------------------------------------------------------------

def group_share_curve(results: Sequence[AllocationResult], statistic) -> list:
    """Per-supply share of an indicator (name or cell mask), or ``"mean_age"``.

    Entries are None where nothing has been allocated yet.
    """
    out = []
    for res in results:
        if isinstance(statistic, str) and statistic == "mean_age":
            out.append(res.mean_age)
        else:
            out.append(res.share(statistic))
    return out


# --- states -------------------------------------------------------------------

@dataclass(frozen=True)
class StateOutcomeTable:
    cases: Mapping[str, float]
    deaths: Mapping[str, float]

    def __post_init__(self):
        if set(self.cases) != set(self.deaths):
            raise MetricsError("cases and deaths must cover the same states")
        for col in (self.cases, self.deaths):
            if any(not (v >= 0 and math.isfinite(v)) for v in col.values()):
                raise MetricsError("outcome counts must be finite and non-negative")

    @property
    def states(self) -> tuple[str, ...]:
        return tuple(sorted(self.cases))


def read_state_outcomes(path) -> StateOutcomeTable:
    path = Path(path)
    cases, deaths = {}, {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != STATE_OUTCOME_COLUMNS:
            raise ParseError(path, 1, f"unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 columns, got {len(row)}")
            if row[0] in cases:
                raise ParseError(path, lineno, f"duplicate state {row[0]}")
            try:
                cases[row[0]], deaths[row[0]] = float(row[1]), float(row[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return StateOutcomeTable(cases, deaths)


def write_state_outcomes(table: StateOutcomeTable, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATE_OUTCOME_COLUMNS)
        for s in table.states:
            w.writerow((s, repr(float(table.cases[s])), repr(float(table.deaths[s]))))


@dataclass(frozen=True)
class FairShareIndex:
    state: str
    benchmark: str
    supply: float
    index: float  # inf when the state has vaccines but no benchmark share; nan when both are 0

    @property
    def flagged(self) -> bool:
        return not math.isfinite(self.index)


def _shares(values: Mapping[str, float]) -> dict[str, float]:
    total = math.fsum(values.values())
    if total <= 0:
        raise MetricsError("benchmark total is zero")
    return {k: v / total for k, v in values.items()}


def state_fair_share_index(result: AllocationResult, outcomes: StateOutcomeTable | None,
                           benchmark: str = "population") -> list[FairShareIndex]:
    """(state share of vaccines) / (state share of the benchmark), one entry per state."""
    if benchmark not in BENCHMARKS:
        raise MetricsError(f"unknown benchmark {benchmark!r}")
    strata = result.strata
    alloc = result.cell_allocated
    states = np.unique(strata.state)
    vacc = {str(s): math.fsum(alloc[strata.state == s]) for s in states}
    if benchmark == "population":
        bench = {str(s): math.fsum(strata.mass[strata.state == s]) for s in states}
    else:
        if outcomes is None:
            raise MetricsError(f"benchmark {benchmark!r} needs a state outcome table")
        bench = dict(outcomes.cases if benchmark == "cases" else outcomes.deaths)
    for s in set(bench) - set(vacc):
        vacc[s] = 0.0
    for s in set(vacc) - set(bench):
        bench[s] = 0.0
    v_share = _shares(vacc)
    b_share = _shares(bench)
    out = []
    for s in sorted(v_share):
        v, b = v_share[s], b_share[s]
        if b > 0:
            idx = v / b
        else:
            idx = math.inf if v > 0 else math.nan
        out.append(FairShareIndex(s, benchmark, result.supply, idx))
    return out


def write_fair_share(rows: Sequence[FairShareIndex], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FAIR_SHARE_COLUMNS)
        for r in rows:
            w.writerow((r.state, r.benchmark, repr(float(r.supply)), repr(float(r.index))))


__all__ = [
    "RaceDeathTable", "StateOutcomeTable", "FairShareIndex", "MetricsError", "DEATH_RACES",
    "death_share_estimate", "read_race_deaths", "group_share_curve", "state_fair_share_index",
    "read_state_outcomes", "write_state_outcomes", "write_fair_share",
]
