"""CDC group schedule, supersetting, demographic cohorts and highest-tier resolution.

Stages run in a fixed order (occupational groups, infant split, pregnancy
cohort, demographic groups, resolution) and each draws from its own keyed
random substream, so switching one stage off leaves the others' draws
unchanged.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .population import Population, PersonRecord
from .rng import bernoulli

PREGNANCY_DAYS = 268
YEAR_DAYS = 365
PREGNANCY_PROBABILITY = PREGNANCY_DAYS / YEAR_DAYS
PREGNANCY_SUFFIX = "~pregnant"

RANKS = tuple((1, s) for s in range(1, 8)) + ((2, None), (3, None), (4, None), (5, None))
RANK_INDEX = {r: i for i, r in enumerate(RANKS)}
MODES = ("probabilistic", "take_all", "demographic")
DERIVED_FIELDS = ("high_risk", "infant_class", "household_contact", "pregnant")
OPS = ("in", "not_in", "eq", "between", "prefix")


class ScheduleError(ValueError):
    pass


class ClassificationError(RuntimeError):
    pass


def rank_label(rank: int) -> str:
    tier, sub = RANKS[rank]
    return f"{tier}.{sub}" if sub is not None else str(tier)


def rank_of(tier: int, subtier: int | None) -> int:
    return RANK_INDEX[(tier, subtier if tier == 1 else None)]


# --- predicates --------------------------------------------------------------

def _predicate_fields(pred) -> set[str]:
    if pred is None:
        return set()
    if "any" in pred:
        return set().union(*(_predicate_fields(p) for p in pred["any"]))
    if "all" in pred:
        return set().union(*(_predicate_fields(p) for p in pred["all"]))
    if "not" in pred:
        return _predicate_fields(pred["not"])
    if pred.get("op") not in OPS:
        raise ScheduleError(f"unknown predicate operator {pred.get('op')!r}")
    return {pred["field"]}


def evaluate(pred, columns: dict, n: int) -> np.ndarray:
    """Vectorised evaluation of a declarative predicate over named columns."""
    if pred is None:
        return np.ones(n, dtype=bool)
    if "any" in pred:
        out = np.zeros(n, dtype=bool)
        for p in pred["any"]:
            out |= evaluate(p, columns, n)
        return out
    if "all" in pred:
        out = np.ones(n, dtype=bool)
        for p in pred["all"]:
            out &= evaluate(p, columns, n)
        return out
    if "not" in pred:
        return ~evaluate(pred["not"], columns, n)
    col = columns[pred["field"]]
    op, vals = pred["op"], pred["values"]
    if op == "in":
        return np.isin(col, vals)
    if op == "not_in":
        return ~np.isin(col, vals)
    if op == "eq":
        return col == vals[0]
    if op == "between":
        lo, hi = vals
        out = np.ones(n, dtype=bool)
        if lo is not None:
            out &= col >= lo
        if hi is not None:
            out &= col <= hi
        return out
    if op == "prefix":
        out = np.zeros(n, dtype=bool)
        for v in vals:
            out |= np.char.startswith(col.astype(str), v)
        return out
    raise ScheduleError(f"unknown predicate operator {op!r}")


# --- schedule -----------------------------------------------------------------

@dataclass(frozen=True)
class GroupDefinition:
    group_id: str
    tier: int
    subtier: int | None
    superset: dict | None
    assignment_mode: str = "probabilistic"
    external_size: float | None = None
    exclusion_groups: tuple = ()
    frontline_split: float | None = None
    frontline_subtiers: tuple = ()  # ((predicate or None, subtier), ...)
    cohort: str = "base"
    name: str = ""

    def __post_init__(self):
        if self.tier not in (1, 2, 3, 4, 5):
            raise ScheduleError(f"{self.group_id}: tier must be 1..5")
        if (self.subtier is not None) != (self.tier == 1):
            raise ScheduleError(f"{self.group_id}: subtier present iff tier 1")
        if self.subtier is not None and not 1 <= self.subtier <= 7:
            raise ScheduleError(f"{self.group_id}: subtier must be 1..7")
        if self.assignment_mode not in MODES:
            raise ScheduleError(f"{self.group_id}: unknown assignment mode {self.assignment_mode!r}")
        if self.assignment_mode == "probabilistic" and not (self.external_size and self.external_size > 0):
            raise ScheduleError(f"{self.group_id}: probabilistic groups need external_size > 0")
        if self.frontline_split is not None and not 0 <= self.frontline_split <= 1:
            raise ScheduleError(f"{self.group_id}: frontline_split must lie in [0, 1]")
        if self.cohort not in ("base", "pregnancy"):
            raise ScheduleError(f"{self.group_id}: cohort must be 'base' or 'pregnancy'")

    @property
    def rank(self) -> int:
        return rank_of(self.tier, self.subtier)

    @property
    def best_rank(self) -> int:
        ranks = [self.rank] + [rank_of(1, s) for _, s in self.frontline_subtiers]
        return min(ranks)

    @classmethod
    def from_dict(cls, d: dict) -> "GroupDefinition":
        known = {"group_id", "name", "tier", "subtier", "external_size", "superset", "exclusion_groups",
                 "assignment_mode", "frontline_split", "frontline_subtiers", "cohort"}
        unknown = set(d) - known
        if unknown:
            raise ScheduleError(f"group {d.get('group_id')}: unknown keys {sorted(unknown)}")
        return cls(
            group_id=d["group_id"], name=d.get("name", ""), tier=int(d["tier"]),
            subtier=d.get("subtier"), external_size=d.get("external_size"),
            superset=d.get("superset"), exclusion_groups=tuple(d.get("exclusion_groups", ())),
            assignment_mode=d.get("assignment_mode", "probabilistic"),
            frontline_split=d.get("frontline_split"),
            frontline_subtiers=tuple((f.get("when"), int(f["subtier"])) for f in d.get("frontline_subtiers", ())),
            cohort=d.get("cohort", "base"),
        )


@dataclass(frozen=True)
class TierSchedule:
    groups: tuple
    reference_population: float = 325_000_000
    name: str = ""

    def __post_init__(self):
        ids = [g.group_id for g in self.groups]
        if len(set(ids)) != len(ids):
            raise ScheduleError("duplicate group ids")
        seen: set[str] = set()
        for g in self.groups:
            missing = set(g.exclusion_groups) - seen
            if missing:
                raise ScheduleError(f"{g.group_id}: exclusions must name earlier groups, not {sorted(missing)}")
            seen.add(g.group_id)

    def validate_fields(self, known: Sequence[str]) -> None:
        known = set(known) | set(DERIVED_FIELDS)
        for g in self.groups:
            fields_used = _predicate_fields(g.superset)
            for pred, _ in g.frontline_subtiers:
                fields_used |= _predicate_fields(pred)
            bad = fields_used - known
            if bad:
                raise ScheduleError(f"{g.group_id}: predicate references unknown field(s) {sorted(bad)}")

    def __getitem__(self, group_id: str) -> GroupDefinition:
        for g in self.groups:
            if g.group_id == group_id:
                return g
        raise KeyError(group_id)

    @property
    def group_ids(self) -> tuple[str, ...]:
        return tuple(g.group_id for g in self.groups)

    @classmethod
    def from_dict(cls, d: dict) -> "TierSchedule":
        sched = cls(tuple(GroupDefinition.from_dict(g) for g in d["groups"]),
                    float(d.get("reference_population", 325_000_000)), d.get("name", ""))
        sched.validate_fields(Population.column_names())
        return sched

    @classmethod
    def load(cls, path=None) -> "TierSchedule":
        if path is None:
            text = resources.files("vaxration.data").joinpath("cdc_2018_schedule.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))


def default_schedule() -> TierSchedule:
    return TierSchedule.load()


# --- supersetting -------------------------------------------------------------

class SupersetProbability(NamedTuple):
    probability: float
    diagnostic: str | None  # None, "take_all" or "empty_superset"


def superset_probability(external_size: float, superset_mass: float) -> SupersetProbability:
    """Membership probability N / mass(S), capped at 1 (take-all when undercounted)."""
    if superset_mass < 0:
        raise ValueError("superset mass must be non-negative")
    if superset_mass == 0:
        return SupersetProbability(0.0, "empty_superset")
    if superset_mass <= external_size:
        return SupersetProbability(1.0, "take_all")
    return SupersetProbability(external_size / superset_mass, None)


@dataclass
class GroupDiagnostic:
    group_id: str
    superset_mass: float
    target_size: float | None
    probability: float
    diagnostic: str | None
    realized_mass: float
    variance: float  # sum of w^2 p (1 - p) over the superset


@dataclass
class MembershipDraft:
    """Group membership before resolution (rows align with ``population``)."""

    population: Population
    group_ids: tuple
    member: np.ndarray  # (n, G) bool
    rank: np.ndarray  # (n, G) int, rank index of the membership, -1 when not a member
    diagnostics: dict = field(default_factory=dict)
    superset: dict = field(default_factory=dict)  # group_id -> bool mask after exclusions

    def members(self, group_id: str) -> np.ndarray:
        return self.member[:, self.group_ids.index(group_id)]


def _columns(population: Population, context: dict | None) -> dict:
    cols = {name: getattr(population, name) for name in Population.column_names()}
    n = len(population)
    cols.setdefault("high_risk", np.zeros(n, dtype=bool))
    cols.setdefault("infant_class", np.full(n, "", dtype="<U4"))
    cols.setdefault("household_contact", np.zeros(n, dtype=bool))
    cols.setdefault("pregnant", np.zeros(n, dtype=bool))
    if context:
        for k, v in context.items():
            cols[k] = np.asarray(v)
    return cols


def assign_group_membership(
    population: Population,
    schedule: TierSchedule,
    seed: int,
    context: dict | None = None,
    scale: float = 1.0,
    modes: Sequence[str] = MODES,
    draft: MembershipDraft | None = None,
) -> MembershipDraft:
    """Label every person with each group they qualify for.

    Groups are processed in schedule order.  ``context`` supplies derived
    columns (``high_risk``, ``infant_class``, ``household_contact``,
    ``pregnant``).  External sizes are multiplied by ``scale``.  Passing a
    previous ``draft`` continues it (used to add demographic groups after
    the cohorts exist).
    """
    schedule.validate_fields(Population.column_names())
    n = len(population)
    ids = schedule.group_ids
    if draft is None:
        draft = MembershipDraft(population, ids, np.zeros((n, len(ids)), dtype=bool),
                                np.full((n, len(ids)), -1, dtype=np.int64))
    cols = _columns(population, context)
    pregnancy_rows = cols["pregnant"].astype(bool)
    keys = population.keys
    w = population.weight
    for j, g in enumerate(schedule.groups):
        if g.assignment_mode not in modes:
            continue
        in_cohort = pregnancy_rows if g.cohort == "pregnancy" else ~pregnancy_rows
        sup = evaluate(g.superset, cols, n) & in_cohort
        for ex in g.exclusion_groups:
            sup &= ~draft.member[:, ids.index(ex)]
        mass = math.fsum(w[sup])
        if g.assignment_mode == "demographic":
            joined = sup
            prob, diag, target = 1.0, None, None
        elif g.assignment_mode == "take_all":
            joined = sup
            prob, diag, target = (1.0, "take_all") if mass > 0 else (0.0, "empty_superset")
            target = None if g.external_size is None else g.external_size * scale
        else:
            target = g.external_size * scale
            prob, diag = superset_probability(target, mass)
            joined = sup & bernoulli(seed, "groups", g.group_id, keys, prob) if prob < 1 else sup.copy()
        draft.member[:, j] = joined
        ranks = np.where(joined, g.rank, -1)
        if g.frontline_split is not None and g.frontline_subtiers:
            front = joined & bernoulli(seed, "frontline", g.group_id, keys, g.frontline_split)
            assigned = np.zeros(n, dtype=bool)
            for pred, sub in g.frontline_subtiers:
                sel = front & ~assigned & evaluate(pred, cols, n)
                ranks = np.where(sel, rank_of(1, sub), ranks)
                assigned |= sel
        draft.rank[:, j] = ranks
        draft.superset[g.group_id] = sup
        var = math.fsum(w[sup] ** 2 * prob * (1 - prob))
        draft.diagnostics[g.group_id] = GroupDiagnostic(
            g.group_id, mass, target, prob, diag, math.fsum(w[joined]), var)
    return draft


# --- demographic cohorts ------------------------------------------------------

def split_infants(population: Population, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Infant month class per person and household-contact flags.

    Each age-0 person is independently ``"0-5"`` or ``"6-11"`` with
    probability 1/2.  A person is a household contact when they share a
    household with a 0-5 month infant; the infant itself counts, which also
    covers infants living outside households.
    """
    n = len(population)
    age0 = population.age == 0
    young = age0 & bernoulli(seed, "infants", "0-5", population.keys, 0.5)
    infant_class = np.full(n, "", dtype="<U4")
    infant_class[young] = "0-5"
    infant_class[age0 & ~young] = "6-11"
    hh = population.household_id
    with_infant = np.unique(hh[young & (hh != "")])
    contact = young | ((hh != "") & np.isin(hh, with_infant))
    return infant_class, contact


def synthesize_pregnancy_cohort(
    population: Population,
    draft: MembershipDraft,
    seed: int,
) -> tuple[Population, np.ndarray, np.ndarray]:
    """Duplicate selected recent mothers as a pregnant cohort.

    Eligible: gave birth in the past year and not already in a group ranked
    above tier 1 subtier 6.  Each eligible person is selected with
    probability 268/365.  Returns the augmented population, the pregnant
    mask over it, and for each row the index of its source row.
    """
    cutoff = rank_of(1, 6)
    best = np.where(draft.rank >= 0, draft.rank, len(RANKS)).min(axis=1) if draft.rank.size else np.full(len(population), len(RANKS))
    eligible = population.gave_birth_past_year & (best >= cutoff)
    chosen = np.flatnonzero(eligible & bernoulli(seed, "pregnancy", "cohort", population.keys, PREGNANCY_PROBABILITY))
    records = list(population.records())
    dups = []
    for i in chosen:
        r = records[i]
        dups.append(PersonRecord(**{**r.__dict__, "person_id": r.person_id + PREGNANCY_SUFFIX}))
    augmented = Population(records + dups, population.households, validate=False)
    pregnant = np.zeros(len(augmented), dtype=bool)
    pregnant[len(records):] = True
    source = np.concatenate([np.arange(len(records)), chosen]).astype(np.int64)
    return augmented, pregnant, source


# --- resolution ---------------------------------------------------------------

@dataclass(frozen=True)
class TierAssignment:
    person_id: str
    member_groups: frozenset
    highest: tuple  # (tier, subtier or None)
    pregnant_duplicate: bool


class TierAssignments:
    """Resolved highest rank per row of an augmented population."""

    def __init__(self, population: Population, draft: MembershipDraft, highest_rank: np.ndarray,
                 pregnant: np.ndarray):
        self.population = population
        self.draft = draft
        self.highest_rank = highest_rank
        self.pregnant = pregnant

    def __len__(self) -> int:
        return len(self.highest_rank)

    def __getitem__(self, i: int) -> TierAssignment:
        groups = frozenset(g for g, m in zip(self.draft.group_ids, self.draft.member[i]) if m)
        return TierAssignment(str(self.population.person_id[i]), groups, RANKS[int(self.highest_rank[i])],
                              bool(self.pregnant[i]))

    @property
    def tier(self) -> np.ndarray:
        return np.array([t for t, _ in RANKS])[self.highest_rank]


def resolve_highest_tier(draft: MembershipDraft, pregnant: np.ndarray | None = None) -> TierAssignments:
    """Lexicographically smallest (tier, subtier) over each person's memberships."""
    n = len(draft.population)
    masked = np.where(draft.rank >= 0, draft.rank, len(RANKS))
    best = masked.min(axis=1) if masked.shape[1] else np.full(n, len(RANKS))
    orphans = np.flatnonzero(best >= len(RANKS))
    if len(orphans):
        ids = ", ".join(str(draft.population.person_id[i]) for i in orphans[:10])
        raise ClassificationError(f"{len(orphans)} person(s) qualify for no group: {ids}")
    preg = np.zeros(n, dtype=bool) if pregnant is None else np.asarray(pregnant, dtype=bool)
    return TierAssignments(draft.population, draft, best.astype(np.int64), preg)


@dataclass
class TierLabels:
    """Everything the tiering stages produce for one population."""

    population: Population  # augmented with the pregnancy cohort
    assignments: TierAssignments
    source_index: np.ndarray  # original row of each augmented row
    high_risk: np.ndarray
    infant_class: np.ndarray
    household_contact: np.ndarray
    pregnant: np.ndarray
    scale: float

    @property
    def diagnostics(self) -> dict:
        return self.assignments.draft.diagnostics


def label_population(
    population: Population,
    schedule: TierSchedule,
    seed: int,
    high_risk: np.ndarray,
    scale: float = 1.0,
    pregnancy: bool = True,
) -> TierLabels:
    """Occupational groups, infants, pregnancy cohort, demographics, resolution."""
    infant_class, contact = split_infants(population, seed)
    base_ctx = {"high_risk": high_risk, "infant_class": infant_class, "household_contact": contact}
    occ_modes = ("probabilistic", "take_all")
    draft = assign_group_membership(population, schedule, seed, base_ctx, scale, modes=occ_modes)
    if pregnancy:
        augmented, pregnant, source = synthesize_pregnancy_cohort(population, draft, seed)
    else:
        augmented, pregnant, source = population, np.zeros(len(population), bool), np.arange(len(population))
    k = len(augmented) - len(population)
    extend = lambda a, fill: np.concatenate([a, np.full(k, fill, dtype=a.dtype)])  # noqa: E731
    full = MembershipDraft(
        augmented, draft.group_ids,
        np.vstack([draft.member, np.zeros((k, draft.member.shape[1]), bool)]),
        np.vstack([draft.rank, np.full((k, draft.rank.shape[1]), -1, np.int64)]),
        dict(draft.diagnostics), {g: extend(m, False) for g, m in draft.superset.items()},
    )
    ctx = {
        "high_risk": extend(np.asarray(high_risk, bool), False),
        "infant_class": extend(infant_class, ""),
        "household_contact": extend(contact, False),
        "pregnant": pregnant,
    }
    full = assign_group_membership(augmented, schedule, seed, ctx, scale, modes=("demographic",), draft=full)
    assignments = resolve_highest_tier(full, pregnant)
    return TierLabels(augmented, assignments, source, ctx["high_risk"], ctx["infant_class"],
                      ctx["household_contact"], pregnant, scale)


# --- census -------------------------------------------------------------------

@dataclass(frozen=True)
class CensusRow:
    tier: int
    subtier: int | None
    weighted_mass: float
    share_black_indigenous: float
    share_high_adi: float
    mean_age: float
    share_female: float


def tier_census(population: Population, highest_rank: np.ndarray, high_adi: np.ndarray | None = None) -> list[CensusRow]:
    """Weighted mass and demographics per (tier, subtier), highest rank only."""
    w = population.weight
    bi = np.isin(population.race, ("black", "indigenous"))
    fem = population.sex == "female"
    hi = np.zeros(len(w), bool) if high_adi is None else np.asarray(high_adi, bool)
    rows = []
    for r, (tier, sub) in enumerate(RANKS):
        sel = highest_rank == r
        mass = math.fsum(w[sel])
        if mass > 0:
            share = lambda m: math.fsum(w[sel & m]) / mass  # noqa: E731
            mean_age = math.fsum(w[sel] * population.age[sel]) / mass
            rows.append(CensusRow(tier, sub, mass, share(bi), share(hi), mean_age, share(fem)))
        else:
            rows.append(CensusRow(tier, sub, 0.0, 0.0, 0.0, 0.0, 0.0))
    return rows


def write_census(rows: Sequence[CensusRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("tier", "subtier", "weighted_mass", "share_black_indigenous", "share_high_adi",
                    "mean_age", "share_female"))
        for r in rows:
            w.writerow((r.tier, "" if r.subtier is None else r.subtier, repr(r.weighted_mass),
                        repr(r.share_black_indigenous), repr(r.share_high_adi), repr(r.mean_age),
                        repr(r.share_female)))


__all__ = [
    "GroupDefinition", "TierSchedule", "TierAssignment", "TierAssignments", "TierLabels",
    "MembershipDraft", "RANKS", "PREGNANCY_PROBABILITY", "ScheduleError", "ClassificationError",
    "SupersetProbability", "superset_probability", "assign_group_membership", "split_infants",
    "synthesize_pregnancy_cohort", "resolve_highest_tier", "label_population", "tier_census",
    "write_census", "default_schedule", "evaluate", "rank_label", "rank_of", "CensusRow",
]
