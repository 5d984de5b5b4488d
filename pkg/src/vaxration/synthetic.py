"""Seeded synthetic populations calibrated to configurable weighted marginals.

The defaults approximate the published national shares the allocation study
relies on (15.5% Black or Indigenous, ~2.5% in group quarters, group
supersets large enough for the CDC size estimates).  Every discrete draw
comes from a named Philox substream so the output is bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .population import RACES, SEXES, HouseholdRecord, PersonRecord, Population
from .rng import generator

AGE_BINS = ((0, 0), (1, 2), (3, 18), (19, 24), (25, 44), (45, 64), (65, 74), (75, 84), (85, 99))
US_POPULATION = 325_000_000

_DEFAULT_AGE = (0.012, 0.024, 0.22, 0.085, 0.265, 0.25, 0.09, 0.04, 0.014)
_YOUNG_AGE = (0.015, 0.030, 0.27, 0.095, 0.28, 0.215, 0.06, 0.027, 0.008)

# Superset sizes (persons nationally) for the industry and occupation codes
# used by the shipped tier schedule.  Remaining employed persons fall into
# the placeholder "other" codes.
_INDUSTRY_SIZES = {
    "622M": 6_500_000, "6211": 2_800_000, "6214": 1_200_000, "6216": 1_500_000,
    "6231": 1_900_000, "623M": 1_600_000, "6212": 900_000, "62131": 350_000, "62132": 150_000,
    "6213ZM": 700_000, "621M": 600_000, "6222": 300_000,
    "3254": 450_000, "928P": 500_000,
    "928110P1": 400_000, "928110P2": 250_000, "928110P3": 250_000, "928110P4": 150_000,
    "928110P5": 40_000, "928110P6": 40_000, "928110P7": 32_000,
    "6241": 1_000_000, "6242": 400_000, "6243": 300_000, "6244": 1_400_000,
    "211": 500_000, "2211P": 700_000, "2212P": 200_000, "22132": 100_000, "2213M": 150_000,
    "221MP": 100_000, "22S": 100_000, "517311": 700_000, "517Z": 600_000, "522M": 900_000,
    "92113": 200_000, "92119": 700_000, "9211MP": 400_000, "923": 600_000, "92M1": 200_000,
    "92M2": 200_000, "92MP": 1_500_000,
    "5221M": 300_000, "5241": 1_300_000, "5242": 900_000, "52M1": 2_000_000, "52M2": 1_100_000,
    "111": 1_000_000, "112": 500_000, "115": 300_000,
    "481": 700_000, "482": 200_000, "483": 100_000, "484": 1_800_000, "4853": 300_000,
    "485M": 400_000, "486": 50_000, "488": 700_000, "491": 700_000, "492": 700_000, "493": 900_000,
    "3252": 150_000, "3253": 50_000, "3255": 100_000, "3256": 150_000, "325M": 400_000,
}
_OCCUPATION_SIZES = {
    "291051": 330_000, "292052": 450_000,
    "292042": 250_000, "292043": 100_000, "533011": 50_000, "331011": 50_000, "331012": 120_000,
    "331021": 70_000, "333050": 800_000, "333012": 450_000, "332011": 350_000,
    "394031": 35_000, "3940XX": 40_000,
}
_OTHER_INDUSTRY = "OTHER"
_OTHER_WHITE_COLLAR = "119999"
_OTHER_BLUE_COLLAR = "519999"
_US_EMPLOYED = 155_000_000

_STATES = {
    "CA": 0.12, "TX": 0.088, "FL": 0.065, "NY": 0.059, "PA": 0.039, "IL": 0.038, "OH": 0.036,
    "GA": 0.032, "NC": 0.032, "MI": 0.030, "NJ": 0.027, "VA": 0.026, "WA": 0.023, "AZ": 0.022,
    "MA": 0.021, "TN": 0.021, "IN": 0.020, "MO": 0.019, "MD": 0.019, "WI": 0.018, "CO": 0.017,
    "MN": 0.017, "SC": 0.016, "AL": 0.015, "LA": 0.014, "KY": 0.014, "OR": 0.013, "OK": 0.012,
    "CT": 0.011, "UT": 0.010, "IA": 0.0096, "NV": 0.0094, "AR": 0.0092, "MS": 0.009, "KS": 0.0089,
    "NM": 0.0064, "NE": 0.0059, "ID": 0.0055, "WV": 0.0054, "HI": 0.0043, "NH": 0.0042,
    "ME": 0.0041, "MT": 0.0033, "RI": 0.0032, "DE": 0.0030, "SD": 0.0027, "ND": 0.0023,
    "AK": 0.0022, "DC": 0.0021, "VT": 0.0019, "WY": 0.0017,
}


def _normalized(d: dict) -> dict:
    total = sum(d.values())
    return {k: v / total for k, v in d.items()}


class ConfigError(ValueError):
    pass


@dataclass
class EconomicDistributions:
    """Per-race household economics; dollar amounts already in constant dollars."""

    median_family_income: dict = field(default_factory=lambda: {
        "white": 78_000, "black": 44_000, "indigenous": 43_000, "asian": 92_000,
        "pacific_islander": 62_000, "other": 50_000, "multiracial": 62_000})
    hispanic_income_factor: float = 0.8
    income_sigma: float = 0.85
    owner_rate: dict = field(default_factory=lambda: {
        "white": 0.72, "black": 0.42, "indigenous": 0.52, "asian": 0.60,
        "pacific_islander": 0.45, "other": 0.45, "multiracial": 0.55})
    median_property_value: float = 230_000
    median_gross_rent: float = 1_100
    median_mortgage: float = 1_450
    mortgage_rate: float = 0.62
    no_vehicle_rate: dict = field(default_factory=lambda: {
        "white": 0.06, "black": 0.19, "indigenous": 0.10, "asian": 0.12,
        "pacific_islander": 0.09, "other": 0.10, "multiracial": 0.09})
    no_telephone_rate: float = 0.02
    incomplete_plumbing_rate: float = 0.005
    single_parent_rate: dict = field(default_factory=lambda: {
        "white": 0.07, "black": 0.22, "indigenous": 0.17, "asian": 0.05,
        "pacific_islander": 0.12, "other": 0.12, "multiracial": 0.12})
    lt9_education_rate: float = 0.05
    some_hs_rate: float = 0.07
    unemployment_rate: dict = field(default_factory=lambda: {
        "white": 0.04, "black": 0.08, "indigenous": 0.08, "asian": 0.035,
        "pacific_islander": 0.06, "other": 0.06, "multiracial": 0.06})


@dataclass
class SyntheticConfig:
    seed: int = 0
    population_size: int = 1_000_000
    record_weight: int = 10
    household_size_distribution: dict = field(default_factory=lambda: {
        1: 0.28, 2: 0.34, 3: 0.15, 4: 0.13, 5: 0.06, 6: 0.03, 7: 0.01})
    race: dict = field(default_factory=lambda: {
        "white": 0.70, "black": 0.147, "indigenous": 0.008, "asian": 0.056,
        "pacific_islander": 0.002, "other": 0.05, "multiracial": 0.037})
    hispanic_by_race: dict = field(default_factory=lambda: {
        "white": 0.17, "black": 0.03, "indigenous": 0.25, "asian": 0.02,
        "pacific_islander": 0.10, "other": 0.90, "multiracial": 0.25})
    female: float = 0.508
    age_bins: list = field(default_factory=lambda: [list(b) for b in AGE_BINS])
    age_distribution: dict = field(default_factory=lambda: {
        "default": list(_DEFAULT_AGE), "black": list(_YOUNG_AGE), "indigenous": list(_YOUNG_AGE)})
    state: dict = field(default_factory=lambda: _normalized(_STATES))
    industry_share: dict = field(default_factory=lambda: {
        k: v / _US_EMPLOYED for k, v in _INDUSTRY_SIZES.items()})
    occupation_share: dict = field(default_factory=lambda: {
        k: v / _US_EMPLOYED for k, v in _OCCUPATION_SIZES.items()})
    white_collar_share: float = 0.55
    active_duty_given_military_code: float = 0.85
    group_quarters: float = 0.025
    gave_birth_rate: float = 0.06
    employment_age: list = field(default_factory=lambda: [19, 64])
    employed_rate: float = 0.70
    armed_forces_rate: float = 0.0
    economics: EconomicDistributions = field(default_factory=EconomicDistributions)

    def validate(self) -> None:
        if self.population_size < 0 or self.record_weight <= 0:
            raise ConfigError("population_size must be >= 0 and record_weight > 0")

        def partition(name, d):
            vals = list(d.values())
            if any(v < 0 or v > 1 for v in vals):
                raise ConfigError(f"{name}: proportions must lie in [0, 1]")
            if abs(math.fsum(vals) - 1.0) > 1e-9:
                raise ConfigError(f"{name}: proportions sum to {math.fsum(vals)!r}, not 1")

        partition("race", self.race)
        if set(self.race) - set(RACES):
            raise ConfigError(f"race: unknown classes {sorted(set(self.race) - set(RACES))}")
        partition("household_size_distribution", self.household_size_distribution)
        partition("state", self.state)
        for key, dist in self.age_distribution.items():
            if len(dist) != len(self.age_bins):
                raise ConfigError(f"age_distribution[{key}] length does not match age_bins")
            partition(f"age_distribution[{key}]", dict(enumerate(dist)))
        for name in ("female", "group_quarters", "gave_birth_rate", "white_collar_share",
                     "active_duty_given_military_code", "employed_rate", "armed_forces_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name, d in (("hispanic_by_race", self.hispanic_by_race),):
            if any(not 0 <= v <= 1 for v in d.values()):
                raise ConfigError(f"{name}: proportions must lie in [0, 1]")
        for name, d in (("industry_share", self.industry_share), ("occupation_share", self.occupation_share)):
            if any(v < 0 for v in d.values()) or math.fsum(d.values()) > 1 + 1e-9:
                raise ConfigError(f"{name}: shares must be non-negative and sum to at most 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["household_size_distribution"] = {str(k): v for k, v in self.household_size_distribution.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        d = dict(d)
        econ = EconomicDistributions(**d.pop("economics", {}))
        if "household_size_distribution" in d:
            d["household_size_distribution"] = {int(k): v for k, v in d["household_size_distribution"].items()}
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(economics=econ, **d)

    @classmethod
    def load(cls, path) -> "SyntheticConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _choice(rng, labels, probs, size):
    probs = np.asarray(probs, dtype=np.float64)
    idx = rng.choice(len(labels), size=size, p=probs / probs.sum())
    return np.asarray(labels, dtype=object)[idx]


def _lognormal(rng, median, sigma, size):
    return np.round(np.exp(np.log(median) + sigma * rng.standard_normal(size)), 0)


def generate_synthetic(config: SyntheticConfig) -> Population:
    """Build a reproducible weighted population from ``config``."""
    config.validate()
    n_records = math.ceil(config.population_size / config.record_weight) if config.population_size else 0
    if n_records == 0:
        return Population([], [])
    seed = config.seed
    econ = config.economics

    # Split records into group-quarters singletons and household members.
    rng = generator(seed, "synthetic", "structure")
    n_gq = int(rng.binomial(n_records, config.group_quarters))
    sizes_labels = sorted(config.household_size_distribution)
    sizes_p = [config.household_size_distribution[k] for k in sizes_labels]
    hh_sizes = []
    remaining = n_records - n_gq
    while remaining > 0:
        batch = rng.choice(sizes_labels, size=max(16, remaining // 2), p=sizes_p)
        for s in batch:
            s = int(min(s, remaining))
            hh_sizes.append(s)
            remaining -= s
            if remaining == 0:
                break
    hh_sizes = np.array(hh_sizes, dtype=np.int64)
    n_hh = len(hh_sizes)
    # Household units: group-quarters persons are their own unit without a household record.
    unit_sizes = np.concatenate([hh_sizes, np.ones(n_gq, dtype=np.int64)])
    unit_is_gq = np.concatenate([np.zeros(n_hh, bool), np.ones(n_gq, bool)])
    n_units = len(unit_sizes)
    lo = max(1, math.ceil(0.5 * config.record_weight))
    hi = max(lo, math.floor(1.5 * config.record_weight))
    unit_weight = rng.integers(lo, hi + 1, size=n_units).astype(np.float64)

    rng = generator(seed, "synthetic", "demographics")
    race_labels = list(config.race)
    unit_race = _choice(rng, race_labels, [config.race[r] for r in race_labels], n_units)
    hisp_p = np.array([config.hispanic_by_race.get(r, 0.0) for r in unit_race])
    unit_hisp = rng.random(n_units) < hisp_p
    state_labels = list(config.state)
    unit_state = _choice(rng, state_labels, [config.state[s] for s in state_labels], n_units)

    unit_of = np.repeat(np.arange(n_units), unit_sizes)
    n = len(unit_of)
    race = unit_race[unit_of]
    hisp = unit_hisp[unit_of]
    state = unit_state[unit_of]
    gq = unit_is_gq[unit_of]
    weight = unit_weight[unit_of]
    weight *= config.population_size / math.fsum(weight)

    sex = np.where(rng.random(n) < config.female, "female", "male")
    bins = np.array(config.age_bins, dtype=np.int64)
    age_bin = np.empty(n, dtype=np.int64)
    default = config.age_distribution["default"]
    for r in race_labels:
        sel = np.flatnonzero(race == r)
        dist = np.asarray(config.age_distribution.get(r, default), dtype=np.float64)
        age_bin[sel] = rng.choice(len(dist), size=len(sel), p=dist / dist.sum())
    age = bins[age_bin, 0] + np.floor(rng.random(n) * (bins[age_bin, 1] - bins[age_bin, 0] + 1)).astype(np.int64)

    rng = generator(seed, "synthetic", "work")
    emp_lo, emp_hi = config.employment_age
    working_age = (age >= emp_lo) & (age <= emp_hi)
    unemp_p = np.array([econ.unemployment_rate.get(r, 0.05) for r in race])
    u = rng.random(n)
    employed = working_age & (u < config.employed_rate)
    unemployed = working_age & ~employed & (u < config.employed_rate + unemp_p)
    older = (age > emp_hi)
    employed |= older & (u < 0.18)
    employment = np.full(n, "", dtype=object)
    employment[age >= 16] = "not_in_labor_force"
    employment[unemployed] = "unemployed"
    employment[employed] = "employed"

    ind_codes = list(config.industry_share)
    ind_p = [config.industry_share[c] for c in ind_codes]
    industry = _choice(rng, ind_codes + [_OTHER_INDUSTRY], ind_p + [max(0.0, 1 - math.fsum(ind_p))], n)
    industry = np.where(employed, industry, "")
    occ_codes = list(config.occupation_share)
    occ_p = [config.occupation_share[c] for c in occ_codes]
    rest = max(0.0, 1 - math.fsum(occ_p))
    occupation = _choice(
        rng, occ_codes + [_OTHER_WHITE_COLLAR, _OTHER_BLUE_COLLAR],
        occ_p + [rest * config.white_collar_share, rest * (1 - config.white_collar_share)], n)
    occupation = np.where(employed, occupation, "")
    military_code = np.char.startswith(industry.astype(str), "928110P")
    active = military_code & (rng.random(n) < config.active_duty_given_military_code)
    military = np.where(age >= 17, "none", "")
    military = np.where(active, "active_duty", military)
    employment = np.where(active, "armed_forces", employment)
    fertile = (sex == "female") & (age >= 15) & (age <= 44)
    gave_birth = fertile & (rng.random(n) < config.gave_birth_rate)

    education = np.full(n, "", dtype=object)
    adult = age >= 25
    eu = rng.random(n)
    lt9_p = np.where(hisp, 3 * econ.lt9_education_rate, econ.lt9_education_rate)
    education[adult] = "hs_plus"
    education[adult & (eu < lt9_p + econ.some_hs_rate)] = "some_hs"
    education[adult & (eu < lt9_p)] = "lt9"
    income_factor = np.where(hisp, econ.hispanic_income_factor, 1.0)
    med_fam = np.array([econ.median_family_income.get(r, 55_000) for r in race]) * income_factor
    personal_income = np.where(age >= 16, _lognormal(rng, 0.5 * med_fam, econ.income_sigma, n), np.nan)

    # Household economics, keyed to the head's race.
    rng = generator(seed, "synthetic", "economics")
    h_race = unit_race[:n_hh]
    h_hisp = unit_hisp[:n_hh]
    h_factor = np.where(h_hisp, econ.hispanic_income_factor, 1.0)
    h_med = np.array([econ.median_family_income.get(r, 55_000) for r in h_race]) * h_factor
    fam_income = _lognormal(rng, h_med, econ.income_sigma, n_hh)
    has_family = hh_sizes >= 2
    owner = rng.random(n_hh) < np.array([econ.owner_rate.get(r, 0.6) for r in h_race])
    prop = _lognormal(rng, econ.median_property_value, 0.7, n_hh)
    rent = _lognormal(rng, econ.median_gross_rent, 0.45, n_hh)
    mort = _lognormal(rng, econ.median_mortgage, 0.45, n_hh)
    has_mort = rng.random(n_hh) < econ.mortgage_rate
    no_vehicle = rng.random(n_hh) < np.array([econ.no_vehicle_rate.get(r, 0.08) for r in h_race])
    no_phone = rng.random(n_hh) < econ.no_telephone_rate
    bad_plumb = rng.random(n_hh) < econ.incomplete_plumbing_rate
    rooms = np.maximum(1, hh_sizes + rng.integers(-2, 4, size=n_hh))
    single_parent = (hh_sizes >= 2) & (rng.random(n_hh) < np.array([econ.single_parent_rate.get(r, 0.1) for r in h_race]))
    threshold = 13_064 + 4_500 * (hh_sizes - 1)

    households = []
    for h in range(n_hh):
        fam = bool(has_family[h])
        households.append(HouseholdRecord(
            household_id=f"H{h:08d}",
            family_income=float(fam_income[h]) if fam else None,
            property_value=float(prop[h]) if owner[h] else None,
            gross_rent=None if owner[h] else float(rent[h]),
            first_mortgage=float(mort[h]) if owner[h] and has_mort[h] else None,
            owner_occupied=bool(owner[h]),
            vehicle_available=not bool(no_vehicle[h]),
            telephone_or_data=not bool(no_phone[h]),
            complete_plumbing=not bool(bad_plumb[h]),
            persons_count=int(hh_sizes[h]),
            rooms_count=int(rooms[h]),
            single_parent_with_children=bool(single_parent[h]),
            poverty_ratio=round(100.0 * float(fam_income[h]) / float(threshold[h]), 1) if fam else None,
        ))

    persons = []
    for i in range(n):
        u_i = int(unit_of[i])
        inc = personal_income[i]
        persons.append(PersonRecord(
            person_id=f"P{i:09d}",
            household_id=None if gq[i] else f"H{u_i:08d}",
            weight=float(weight[i]),
            age=int(age[i]),
            sex=str(sex[i]),
            race=str(race[i]),
            hispanic=bool(hisp[i]),
            industry_code=str(industry[i]) or None,
            occupation_code=str(occupation[i]) or None,
            military_status=str(military[i]) or None,
            gave_birth_past_year=bool(gave_birth[i]),
            group_quarters=bool(gq[i]),
            state=str(state[i]),
            education=education[i] or None,
            employment=employment[i] or None,
            personal_income=None if np.isnan(inc) else float(inc),
        ))
    return Population(persons, households, validate=False)


def calibrated_config(seed: int = 0, population_size: int = 1_000_000, record_weight: int = 10) -> SyntheticConfig:
    """Defaults above, at the requested scale."""
    return SyntheticConfig(seed=seed, population_size=population_size, record_weight=record_weight)


__all__ = [
    "AGE_BINS", "ConfigError", "EconomicDistributions", "SyntheticConfig", "US_POPULATION",
    "generate_synthetic", "calibrated_config", "SEXES",
]
