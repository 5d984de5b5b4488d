"""Weighted person/household microdata: schema, CSV ingestion and export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

RACES = ("white", "black", "indigenous", "asian", "pacific_islander", "other", "multiracial")
SEXES = ("female", "male")
MILITARY_STATUSES = ("active_duty", "reserve", "veteran", "none")
EDUCATION_LEVELS = ("lt9", "some_hs", "hs_plus")
EMPLOYMENT_STATUSES = ("employed", "unemployed", "not_in_labor_force", "armed_forces")

PERSON_COLUMNS = (
    "person_id", "household_id", "weight", "age", "sex", "race", "hispanic",
    "industry_code", "occupation_code", "military_status", "gave_birth_past_year",
    "group_quarters", "state",
)
# Optional trailing columns feeding the person-level ADI components.
PERSON_EXTRA_COLUMNS = ("education", "employment", "personal_income")
HOUSEHOLD_COLUMNS = (
    "household_id", "family_income", "property_value", "gross_rent", "first_mortgage",
    "owner_occupied", "vehicle_available", "telephone_or_data", "complete_plumbing",
    "persons_count", "rooms_count", "single_parent_with_children", "poverty_ratio",
)


class PopulationError(ValueError):
    """Base class for population schema problems."""


class ParseError(PopulationError):
    def __init__(self, path, row: int, message: str):
        super().__init__(f"{path}: row {row}: {message}")
        self.row = row


class LinkError(PopulationError):
    def __init__(self, offenders: Sequence[str]):
        shown = ", ".join(sorted(offenders)[:20])
        super().__init__(f"{len(offenders)} person(s) reference unknown households: {shown}")
        self.offenders = tuple(sorted(offenders))


class ValidationError(PopulationError):
    pass


@dataclass(frozen=True)
class PersonRecord:
    person_id: str
    household_id: str | None
    weight: float
    age: int
    sex: str
    race: str
    hispanic: bool
    industry_code: str | None = None
    occupation_code: str | None = None
    military_status: str | None = None
    gave_birth_past_year: bool = False
    group_quarters: bool = False
    state: str = "XX"
    education: str | None = None
    employment: str | None = None
    personal_income: float | None = None


@dataclass(frozen=True)
class HouseholdRecord:
    household_id: str
    family_income: float | None = None
    property_value: float | None = None
    gross_rent: float | None = None
    first_mortgage: float | None = None
    owner_occupied: bool = False
    vehicle_available: bool = True
    telephone_or_data: bool = True
    complete_plumbing: bool = True
    persons_count: int = 1
    rooms_count: int = 1
    single_parent_with_children: bool = False
    poverty_ratio: float | None = None


def _validate_person(p: PersonRecord, where: str = "") -> None:
    if not (p.weight > 0) or not math.isfinite(p.weight):
        raise ValidationError(f"{where}person {p.person_id!r}: weight must be positive, got {p.weight}")
    if p.age < 0:
        raise ValidationError(f"{where}person {p.person_id!r}: negative age")
    if p.sex not in SEXES:
        raise ValidationError(f"{where}person {p.person_id!r}: unknown sex {p.sex!r}")
    if p.race not in RACES:
        raise ValidationError(f"{where}person {p.person_id!r}: unknown race {p.race!r}")
    if p.military_status is not None and p.military_status not in MILITARY_STATUSES:
        raise ValidationError(f"{where}person {p.person_id!r}: unknown military status {p.military_status!r}")
    if p.education is not None and p.education not in EDUCATION_LEVELS:
        raise ValidationError(f"{where}person {p.person_id!r}: unknown education {p.education!r}")
    if p.employment is not None and p.employment not in EMPLOYMENT_STATUSES:
        raise ValidationError(f"{where}person {p.person_id!r}: unknown employment {p.employment!r}")
    if p.group_quarters and p.household_id:
        raise ValidationError(f"{where}person {p.person_id!r}: group-quarters person linked to a household")


def _validate_household(h: HouseholdRecord, where: str = "") -> None:
    if h.persons_count < 1 or h.rooms_count < 0:
        raise ValidationError(f"{where}household {h.household_id!r}: bad persons/rooms count")
    if h.owner_occupied and h.gross_rent is not None:
        raise ValidationError(f"{where}household {h.household_id!r}: owner with gross rent")
    if not h.owner_occupied and (h.property_value is not None or h.first_mortgage is not None):
        raise ValidationError(f"{where}household {h.household_id!r}: renter with property value or mortgage")


def _str_array(values) -> np.ndarray:
    arr = np.array(list(values), dtype=str)
    return arr if arr.size else np.array([], dtype="<U1")


def _opt_float_array(values) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in values], dtype=np.float64)


class Population:
    """Immutable columnar person table with an optional household table.

    Columns are read-only numpy arrays.  Missing optional strings are stored
    as ``""`` and missing reals as ``nan``.
    """

    def __init__(self, persons: Sequence[PersonRecord], households: Sequence[HouseholdRecord] | None = None,
                 validate: bool = True):
        if validate:
            for p in persons:
                _validate_person(p)
            for h in households or ():
                _validate_household(h)
        ids = [p.person_id for p in persons]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate person_id values")
        self.households = tuple(households) if households is not None else None
        if self.households is not None:
            hh_ids = [h.household_id for h in self.households]
            if len(set(hh_ids)) != len(hh_ids):
                raise ValidationError("duplicate household_id values")
            index = {hid: i for i, hid in enumerate(hh_ids)}
            offenders = [p.person_id for p in persons if p.household_id and p.household_id not in index]
            if offenders:
                raise LinkError(offenders)
            hh_index = [index[p.household_id] if p.household_id else -1 for p in persons]
        else:
            hh_index = [-1] * len(persons)

        self.person_id = _str_array(ids)
        self.household_id = _str_array(p.household_id or "" for p in persons)
        self.weight = np.array([float(p.weight) for p in persons], dtype=np.float64)
        self.age = np.array([int(p.age) for p in persons], dtype=np.int64)
        self.sex = _str_array(p.sex for p in persons)
        self.race = _str_array(p.race for p in persons)
        self.hispanic = np.array([bool(p.hispanic) for p in persons], dtype=bool)
        self.industry_code = _str_array(p.industry_code or "" for p in persons)
        self.occupation_code = _str_array(p.occupation_code or "" for p in persons)
        self.military_status = _str_array(p.military_status or "" for p in persons)
        self.gave_birth_past_year = np.array([bool(p.gave_birth_past_year) for p in persons], dtype=bool)
        self.group_quarters = np.array([bool(p.group_quarters) for p in persons], dtype=bool)
        self.state = _str_array(p.state for p in persons)
        self.education = _str_array(p.education or "" for p in persons)
        self.employment = _str_array(p.employment or "" for p in persons)
        self.personal_income = _opt_float_array(p.personal_income for p in persons)
        self.household_index = np.array(hh_index, dtype=np.int64)
        for name in self.column_names():
            getattr(self, name).setflags(write=False)
        self.household_index.setflags(write=False)
        self._keys = None

    @staticmethod
    def column_names() -> tuple[str, ...]:
        return PERSON_COLUMNS + PERSON_EXTRA_COLUMNS

    def __len__(self) -> int:
        return len(self.person_id)

    def __repr__(self) -> str:
        hh = "no households" if self.households is None else f"{len(self.households)} households"
        return f"Population({len(self)} records, weighted_total={self.weighted_total():.6g}, {hh})"

    @property
    def keys(self) -> np.ndarray:
        """uint64 hash of each person_id, used to key random streams."""
        if self._keys is None:
            from .rng import person_keys
            self._keys = person_keys(self.person_id)
            self._keys.setflags(write=False)
        return self._keys

    def record(self, i: int) -> PersonRecord:
        def opt(s):
            return str(s) if s != "" else None

        inc = self.personal_income[i]
        return PersonRecord(
            person_id=str(self.person_id[i]), household_id=opt(self.household_id[i]),
            weight=float(self.weight[i]), age=int(self.age[i]), sex=str(self.sex[i]),
            race=str(self.race[i]), hispanic=bool(self.hispanic[i]),
            industry_code=opt(self.industry_code[i]), occupation_code=opt(self.occupation_code[i]),
            military_status=opt(self.military_status[i]),
            gave_birth_past_year=bool(self.gave_birth_past_year[i]),
            group_quarters=bool(self.group_quarters[i]), state=str(self.state[i]),
            education=opt(self.education[i]), employment=opt(self.employment[i]),
            personal_income=None if np.isnan(inc) else float(inc),
        )

    def records(self) -> Iterator[PersonRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def subset(self, indices) -> "Population":
        idx = np.asarray(indices)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return Population([self.record(int(i)) for i in idx], self.households, validate=False)

    def household_column(self, name: str, missing=np.nan) -> np.ndarray:
        """Household attribute aligned to persons (``missing`` where unlinked)."""
        if self.households is None:
            dtype = np.float64 if isinstance(missing, float) else type(missing)
            return np.full(len(self), missing, dtype=dtype)
        raw = [getattr(h, name) for h in self.households]
        if isinstance(missing, float):
            col = np.array([np.nan if v is None else float(v) for v in raw] + [missing], dtype=np.float64)
        else:
            col = np.array(raw + [missing])
        return col[np.where(self.household_index >= 0, self.household_index, len(raw))]

    def weighted_total(self, predicate=None) -> float:
        return weighted_total(self, predicate)


Predicate = Union[None, np.ndarray, Callable[[Population], np.ndarray]]


def weighted_total(population: Population, predicate: Predicate = None) -> float:
    """Sum of person weights, optionally restricted by a mask or mask-producing callable."""
    if predicate is None:
        return math.fsum(population.weight)
    mask = predicate(population) if callable(predicate) else predicate
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != population.weight.shape:
        raise ValueError("predicate mask has wrong length")
    return math.fsum(population.weight[mask])


# --- CSV -------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    if text == "1":
        return True
    if text == "0":
        return False
    raise ValueError(f"expected 0/1, got {text!r}")


def _parse_opt_float(text: str) -> float | None:
    return None if text == "" else float(text)


def _parse_opt_str(text: str) -> str | None:
    return None if text == "" else text


def _fmt_real(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    x = float(x)
    if x.is_integer() and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


def _fmt_bool(b: bool) -> str:
    return "1" if b else "0"


def _read_rows(path, expected: tuple[str, ...], optional: tuple[str, ...] = ()):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        allowed = (list(expected), list(expected + optional))
        if header not in allowed:
            raise ParseError(path, 1, f"unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} columns, got {len(row)}")
            yield lineno, dict(zip(header, row))


def read_households(path) -> list[HouseholdRecord]:
    out = []
    for lineno, row in _read_rows(path, HOUSEHOLD_COLUMNS):
        try:
            h = HouseholdRecord(
                household_id=row["household_id"],
                family_income=_parse_opt_float(row["family_income"]),
                property_value=_parse_opt_float(row["property_value"]),
                gross_rent=_parse_opt_float(row["gross_rent"]),
                first_mortgage=_parse_opt_float(row["first_mortgage"]),
                owner_occupied=_parse_bool(row["owner_occupied"]),
                vehicle_available=_parse_bool(row["vehicle_available"]),
                telephone_or_data=_parse_bool(row["telephone_or_data"]),
                complete_plumbing=_parse_bool(row["complete_plumbing"]),
                persons_count=int(row["persons_count"]),
                rooms_count=int(row["rooms_count"]),
                single_parent_with_children=_parse_bool(row["single_parent_with_children"]),
                poverty_ratio=_parse_opt_float(row["poverty_ratio"]),
            )
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        _validate_household(h, where=f"{path}: row {lineno}: ")
        out.append(h)
    return out


def read_persons(path) -> list[PersonRecord]:
    out = []
    for lineno, row in _read_rows(path, PERSON_COLUMNS, PERSON_EXTRA_COLUMNS):
        try:
            p = PersonRecord(
                person_id=row["person_id"],
                household_id=_parse_opt_str(row["household_id"]),
                weight=float(row["weight"]),
                age=int(row["age"]),
                sex=row["sex"],
                race=row["race"],
                hispanic=_parse_bool(row["hispanic"]),
                industry_code=_parse_opt_str(row["industry_code"]),
                occupation_code=_parse_opt_str(row["occupation_code"]),
                military_status=_parse_opt_str(row["military_status"]),
                gave_birth_past_year=_parse_bool(row["gave_birth_past_year"]),
                group_quarters=_parse_bool(row["group_quarters"]),
                state=row["state"],
                education=_parse_opt_str(row.get("education", "")),
                employment=_parse_opt_str(row.get("employment", "")),
                personal_income=_parse_opt_float(row.get("personal_income", "")),
            )
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        _validate_person(p, where=f"{path}: row {lineno}: ")
        out.append(p)
    return out


def ingest_population(person_csv_path, household_csv_path=None) -> Population:
    """Load person (and optionally household) CSVs into a validated Population."""
    households = read_households(household_csv_path) if household_csv_path is not None else None
    return Population(read_persons(person_csv_path), households, validate=False)


def write_population(population: Population, person_csv_path, household_csv_path=None) -> None:
    extended = bool(
        np.any(population.education != "") or np.any(population.employment != "")
        or np.any(~np.isnan(population.personal_income))
    )
    header = PERSON_COLUMNS + (PERSON_EXTRA_COLUMNS if extended else ())
    with Path(person_csv_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in population.records():
            row = [
                p.person_id, p.household_id or "", _fmt_real(p.weight), str(p.age), p.sex, p.race,
                _fmt_bool(p.hispanic), p.industry_code or "", p.occupation_code or "",
                p.military_status or "", _fmt_bool(p.gave_birth_past_year),
                _fmt_bool(p.group_quarters), p.state,
            ]
            if extended:
                row += [p.education or "", p.employment or "", _fmt_real(p.personal_income)]
            w.writerow(row)
    if household_csv_path is not None:
        write_households(population.households or (), household_csv_path)


def write_households(households: Iterable[HouseholdRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HOUSEHOLD_COLUMNS)
        for h in households:
            w.writerow([
                h.household_id, _fmt_real(h.family_income), _fmt_real(h.property_value),
                _fmt_real(h.gross_rent), _fmt_real(h.first_mortgage), _fmt_bool(h.owner_occupied),
                _fmt_bool(h.vehicle_available), _fmt_bool(h.telephone_or_data),
                _fmt_bool(h.complete_plumbing), str(h.persons_count), str(h.rooms_count),
                _fmt_bool(h.single_parent_with_children), _fmt_real(h.poverty_ratio),
            ])


def record_fields(cls) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))
