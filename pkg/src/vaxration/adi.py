"""Family-level Area Deprivation Index: components, raw score, national deciles."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .population import Population

COMPONENTS = (
    "education_lt9", "high_school", "white_collar", "median_family_income", "income_disparity",
    "home_value", "gross_rent", "mortgage", "ownership", "unemployment", "poverty",
    "below_150_poverty", "single_parent", "no_vehicle", "no_telephone", "incomplete_plumbing",
    "crowding",
)
PERCENT_COMPONENTS = frozenset({
    "education_lt9", "high_school", "white_collar", "ownership", "unemployment", "poverty",
    "below_150_poverty", "single_parent", "no_vehicle", "no_telephone", "incomplete_plumbing",
    "crowding",
})
# SOC major groups counted as white-collar: MGR, BUS/FIN, CMM, ENG, SCI, CMS,
# LGL, EDU, ENT, MED, SAL, OFF.
WHITE_COLLAR_SOC_MAJOR = ("11", "13", "15", "17", "19", "21", "23", "25", "27", "29", "41", "43")
HIGH_ADI_DECILE = 8


class AdiError(ValueError):
    pass


@dataclass(frozen=True)
class AdiCoefficients:
    components: tuple  # ((name, coefficient), ...)

    def __post_init__(self):
        names = [n for n, _ in self.components]
        if len(names) != 17:
            raise AdiError(f"expected 17 components, got {len(names)}")
        if len(set(names)) != len(names):
            raise AdiError("component names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.components)

    @property
    def vector(self) -> np.ndarray:
        return np.array([c for _, c in self.components], dtype=np.float64)

    def __getitem__(self, name: str) -> float:
        for n, c in self.components:
            if n == name:
                return c
        raise KeyError(name)

    @classmethod
    def load(cls, path=None) -> "AdiCoefficients":
        if path is None:
            text = resources.files("vaxration.data").joinpath("adi_coefficients.json").read_text()
        else:
            text = Path(path).read_text()
        data = json.loads(text)
        return cls(tuple((str(n), float(c)) for n, c in data["components"]))


def default_coefficients() -> AdiCoefficients:
    return AdiCoefficients.load()


@dataclass(frozen=True)
class PovertyThresholds:
    under_65: float
    age_65_and_over: float

    def for_age(self, age) -> np.ndarray:
        return np.where(np.asarray(age) >= 65, self.age_65_and_over, self.under_65)

    @classmethod
    def load(cls, path=None) -> "PovertyThresholds":
        if path is None:
            text = resources.files("vaxration.data").joinpath("poverty_thresholds.json").read_text()
        else:
            text = Path(path).read_text()
        one = json.loads(text)["one_person"]
        return cls(float(one["under_65"]), float(one["65_and_over"]))


@dataclass(frozen=True)
class FamilyAdiComponents:
    family_id: str
    values: tuple  # 17 floats, nan where missing

    @property
    def missing(self) -> tuple[bool, ...]:
        return tuple(math.isnan(v) for v in self.values)

    def __getitem__(self, name: str) -> float:
        return self.values[COMPONENTS.index(name)]

    @classmethod
    def from_mapping(cls, family_id: str, values: dict) -> "FamilyAdiComponents":
        unknown = set(values) - set(COMPONENTS)
        if unknown:
            raise AdiError(f"unknown components {sorted(unknown)}")
        row = tuple(float(values[c]) if values.get(c) is not None else math.nan for c in COMPONENTS)
        for name, v in zip(COMPONENTS, row):
            if name in PERCENT_COMPONENTS and not math.isnan(v) and not 0 <= v <= 100:
                raise AdiError(f"{name}={v} outside [0, 100]")
        return cls(family_id, row)


class FamilyComponentTable:
    """Component matrix for all non-group-quarters families.

    ``person_family`` maps each person to a row (``-1`` for group quarters).
    """

    def __init__(self, family_ids: np.ndarray, values: np.ndarray, person_family: np.ndarray):
        self.family_ids = family_ids
        self.values = values
        self.person_family = person_family

    def __len__(self) -> int:
        return len(self.family_ids)

    def __iter__(self) -> Iterator[FamilyAdiComponents]:
        for fid, row in zip(self.family_ids, self.values):
            yield FamilyAdiComponents(str(fid), tuple(float(v) for v in row))

    def component(self, name: str) -> np.ndarray:
        return self.values[:, COMPONENTS.index(name)]

    def by_id(self, family_id: str) -> FamilyAdiComponents:
        i = int(np.flatnonzero(self.family_ids == family_id)[0])
        return FamilyAdiComponents(family_id, tuple(float(v) for v in self.values[i]))


def _family_mean(flag: np.ndarray, eligible: np.ndarray, fam: np.ndarray, n_fam: int) -> np.ndarray:
    """Percent of eligible members with ``flag`` per family; nan when none eligible."""
    den = np.bincount(fam[eligible], minlength=n_fam).astype(np.float64)
    num = np.bincount(fam[eligible & flag], minlength=n_fam).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, 100.0 * num / np.maximum(den, 1), np.nan)


def _family_first(values: np.ndarray, fam: np.ndarray, n_fam: int) -> np.ndarray:
    """Value of the first member of each family (``fam < 0`` rows ignored)."""
    out = np.full(n_fam, np.nan)
    rows = np.flatnonzero(fam >= 0)
    fams, first = np.unique(fam[rows], return_index=True)
    out[fams] = values[rows[first]]
    return out


def derive_family_components(
    population: Population,
    thresholds: PovertyThresholds | None = None,
    income_disparity: str = "zero",
) -> FamilyComponentTable:
    """Per-family values of the 17 deprivation components.

    A household with a family income is one family; anyone else in a
    household, or not linked to one, is a family of one.  Group-quarters
    persons get no family.  Percent components are 0-100, dollars as given.
    """
    if income_disparity not in ("zero", "log_ratio"):
        raise AdiError(f"unknown income_disparity mode {income_disparity!r}")
    thresholds = thresholds or PovertyThresholds.load()
    pop = population
    n = len(pop)
    in_hh = (pop.household_index >= 0) & ~pop.group_quarters
    fam_income_p = pop.household_column("family_income")
    is_family = in_hh & ~np.isnan(fam_income_p)
    fam_key = np.where(is_family, np.char.add("H:", pop.household_id), np.char.add("P:", pop.person_id))
    member = ~pop.group_quarters
    person_family = np.full(n, -1, dtype=np.int64)
    family_ids, inv = np.unique(fam_key[member], return_inverse=True)
    person_family[member] = inv
    n_fam = len(family_ids)
    fam = person_family
    values = np.full((n_fam, len(COMPONENTS)), np.nan)
    col = {name: i for i, name in enumerate(COMPONENTS)}
    if n_fam == 0:
        return FamilyComponentTable(family_ids, values, person_family)

    def put(name, arr):
        values[:, col[name]] = arr

    age = pop.age
    adult25 = member & (age >= 25) & (pop.education != "")
    put("education_lt9", _family_mean(pop.education == "lt9", adult25, fam, n_fam))
    put("high_school", _family_mean(pop.education == "hs_plus", adult25, fam, n_fam))

    employed16 = member & (age >= 16) & (pop.employment == "employed")
    soc_major = np.array([c[:2] for c in pop.occupation_code.tolist()], dtype="<U2") if n else np.array([], "<U2")
    white = np.isin(soc_major, WHITE_COLLAR_SOC_MAJOR)
    put("white_collar", _family_mean(white, employed16, fam, n_fam))

    income = np.where(is_family, fam_income_p, pop.personal_income)
    put("median_family_income", _family_first(income, fam, n_fam))

    if income_disparity == "zero":
        put("income_disparity", np.zeros(n_fam))
    else:
        has_inc = member & ~np.isnan(pop.personal_income)
        low = np.bincount(fam[has_inc & (pop.personal_income < 10_000)], minlength=n_fam)
        high = np.bincount(fam[has_inc & (pop.personal_income >= 50_000)], minlength=n_fam)
        with np.errstate(divide="ignore", invalid="ignore"):
            put("income_disparity", np.where((low > 0) & (high > 0), np.log(100.0 * low / np.maximum(high, 1)), np.nan))

    owner = pop.household_column("owner_occupied", missing=False).astype(bool)

    def hh_value(name):
        return _family_first(np.where(in_hh, pop.household_column(name), np.nan), fam, n_fam)

    def hh_flag(flag):
        return _family_first(np.where(in_hh, 100.0 * flag, np.nan), fam, n_fam)

    put("home_value", hh_value("property_value"))
    put("gross_rent", hh_value("gross_rent"))
    put("mortgage", hh_value("first_mortgage"))
    put("ownership", hh_flag(owner))

    labor = member & (age >= 16) & np.isin(pop.employment, ("employed", "unemployed"))
    put("unemployment", _family_mean(pop.employment == "unemployed", labor, fam, n_fam))

    ratio = pop.household_column("poverty_ratio")
    solo_threshold = thresholds.for_age(age)
    pov = np.where(is_family, np.where(np.isnan(ratio), np.nan, 100.0 * (ratio < 100)),
                   np.where(np.isnan(pop.personal_income), np.nan, 100.0 * (pop.personal_income < solo_threshold)))
    pov150 = np.where(is_family, np.where(np.isnan(ratio), np.nan, 100.0 * (ratio < 150)),
                      np.where(np.isnan(pop.personal_income), np.nan,
                               100.0 * (pop.personal_income < 1.5 * solo_threshold)))
    put("poverty", _family_first(pov, fam, n_fam))
    put("below_150_poverty", _family_first(pov150, fam, n_fam))

    put("single_parent", hh_flag(pop.household_column("single_parent_with_children", missing=False).astype(bool)))
    put("no_vehicle", hh_flag(~pop.household_column("vehicle_available", missing=True).astype(bool)))
    put("no_telephone", hh_flag(~pop.household_column("telephone_or_data", missing=True).astype(bool)))
    put("incomplete_plumbing", hh_flag(~pop.household_column("complete_plumbing", missing=True).astype(bool)))
    persons = pop.household_column("persons_count")
    rooms = pop.household_column("rooms_count")
    put("crowding", hh_flag(persons > rooms))
    return FamilyComponentTable(family_ids, values, person_family)


def compute_raw_adi(components: FamilyAdiComponents, coeffs: AdiCoefficients) -> float:
    """Coefficient-weighted sum; missing components count as 0."""
    if tuple(coeffs.names) != COMPONENTS:
        by_name = dict(coeffs.components)
        weights = [by_name[c] for c in COMPONENTS]
    else:
        weights = [c for _, c in coeffs.components]
    return math.fsum(v * w for v, w in zip(components.values, weights) if not math.isnan(v))


def raw_scores(table: FamilyComponentTable, coeffs: AdiCoefficients) -> np.ndarray:
    by_name = dict(coeffs.components)
    w = np.array([by_name[c] for c in COMPONENTS])
    return np.nan_to_num(table.values, nan=0.0) @ w


@dataclass(frozen=True)
class AdiAssignment:
    family_id: str | None
    raw_score: float | None
    decile: int | None
    high_adi: bool


class AdiAssignments:
    """Per-person raw score, decile (0 = none) and high-ADI flag."""

    def __init__(self, person_id, family_id, raw_score, decile):
        self.person_id = person_id
        self.family_id = family_id
        self.raw_score = raw_score
        self.decile = decile
        self.high_adi = flag_high_adi(decile)

    def __len__(self) -> int:
        return len(self.person_id)

    def __getitem__(self, i: int) -> AdiAssignment:
        d = int(self.decile[i])
        score = float(self.raw_score[i])
        return AdiAssignment(
            family_id=str(self.family_id[i]) or None,
            raw_score=None if math.isnan(score) else score,
            decile=d or None,
            high_adi=bool(self.high_adi[i]),
        )

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("family_id", "person_id", "raw_score", "decile", "high_adi"))
            for i in range(len(self)):
                score = self.raw_score[i]
                w.writerow((self.family_id[i], self.person_id[i], "" if math.isnan(score) else repr(float(score)),
                            int(self.decile[i]) or "", int(self.high_adi[i])))


def assign_national_deciles(population: Population, person_scores: np.ndarray,
                            family_ids: np.ndarray | None = None) -> AdiAssignments:
    """Weighted person-level deciles of the raw score over non-group-quarters persons.

    Persons are ordered by (score, family, person id); decile = 1 + floor(10 *
    mass strictly before the person / total), so a person straddling a cut
    lands wholly in the lower decile.
    """
    pop = population
    scores = np.asarray(person_scores, dtype=np.float64)
    fam = np.asarray(family_ids) if family_ids is not None else np.full(len(pop), "", dtype="<U1")
    member = ~pop.group_quarters
    if np.any(member & np.isnan(scores)):
        raise AdiError("raw score missing for a non-group-quarters person")
    idx = np.flatnonzero(member)
    total = math.fsum(pop.weight[idx])
    if not total > 0:
        raise AdiError("no non-group-quarters population mass to rank")
    order = idx[np.lexsort((pop.person_id[idx], fam[idx], scores[idx]))]
    before = np.cumsum(pop.weight[order]) - pop.weight[order]
    dec = np.minimum(np.floor(10.0 * before / total).astype(np.int64) + 1, 10)
    decile = np.zeros(len(pop), dtype=np.int64)
    decile[order] = dec
    return AdiAssignments(pop.person_id, fam, np.where(member, scores, np.nan), decile)


def flag_high_adi(decile) -> np.ndarray | bool:
    """True for deciles 8-10; absent deciles (0 or None) are never high."""
    if decile is None:
        return False
    if np.isscalar(decile):
        return bool(decile >= HIGH_ADI_DECILE)
    d = np.asarray(decile)
    return (d >= HIGH_ADI_DECILE) & (d <= 10)


def compute_adi(population: Population, coeffs: AdiCoefficients | None = None,
                thresholds: PovertyThresholds | None = None, income_disparity: str = "zero") -> AdiAssignments:
    """Components, raw scores and deciles in one pass."""
    coeffs = coeffs or default_coefficients()
    table = derive_family_components(population, thresholds, income_disparity)
    fam_scores = raw_scores(table, coeffs)
    pf = table.person_family
    person_scores = np.where(pf >= 0, fam_scores[np.maximum(pf, 0)] if len(fam_scores) else np.nan, np.nan)
    fam_ids = np.where(pf >= 0, table.family_ids[np.maximum(pf, 0)] if len(table) else "", "")
    return assign_national_deciles(population, person_scores, fam_ids)


__all__ = [
    "COMPONENTS", "AdiAssignment", "AdiAssignments", "AdiCoefficients", "AdiError",
    "FamilyAdiComponents", "FamilyComponentTable", "PovertyThresholds",
    "assign_national_deciles", "compute_adi", "compute_raw_adi", "default_coefficients",
    "derive_family_components", "flag_high_adi", "raw_scores",
]
