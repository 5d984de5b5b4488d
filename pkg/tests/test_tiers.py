import math

import numpy as np
import pytest

from conftest import person
from vaxration.population import HouseholdRecord, Population
from vaxration.tiers import (
    PREGNANCY_PROBABILITY, RANKS, ClassificationError, ScheduleError, TierSchedule, assign_group_membership,
    default_schedule, label_population, rank_of, resolve_highest_tier, split_infants, superset_probability,
    synthesize_pregnancy_cohort, tier_census, write_census,
)


@pytest.mark.parametrize("target, mass, expected", [
    (100, 400, (0.25, None)),
    (500, 400, (1.0, "take_all")),
    (400, 400, (1.0, "take_all")),
    (5, 0, (0.0, "empty_superset")),
])
def test_superset_probability(target, mass, expected):
    assert tuple(superset_probability(target, mass)) == expected


def test_default_schedule_shape():
    s = default_schedule()
    assert len(s.groups) == 29
    assert {g.tier for g in s.groups} == {1, 2, 3, 4, 5}
    assert s["ns_national_guard"].tier == 2
    assert s["ci_other_government"].exclusion_groups == ("ci_critical_government",)


def group(gid, tier=2, subtier=None, **kw):
    d = {"group_id": gid, "tier": tier, "subtier": subtier, "external_size": 10,
         "superset": {"field": "industry_code", "op": "eq", "values": ["X"]}}
    d.update(kw)
    return d


@pytest.mark.parametrize("groups", [
    [group("a", superset={"field": "shoe_size", "op": "eq", "values": [1]})],
    [group("a", superset={"field": "age", "op": "near", "values": [1]})],
    [group("a", exclusion_groups=["b"]), group("b")],
    [group("a"), group("a")],
    [group("a", tier=1, subtier=None)],
    [group("a", tier=2, subtier=3)],
    [group("a", tier=6)],
    [group("a", external_size=None)],
    [group("a", colour="red")],
])
def test_bad_schedules(groups):
    with pytest.raises(ScheduleError):
        TierSchedule.from_dict({"groups": groups})


def workers(n, code="X", weight=1.0, **kw):
    return [person(f"w{i}", weight, industry_code=code, **kw) for i in range(n)]


def test_probabilistic_membership_rate():
    pop = Population(workers(20_000))
    sched = TierSchedule.from_dict({"groups": [group("a", external_size=5_000)]})
    draft = assign_group_membership(pop, sched, seed=1)
    d = draft.diagnostics["a"]
    assert d.probability == 0.25 and d.superset_mass == 20_000
    assert abs(d.realized_mass - 5_000) <= 3 * math.sqrt(d.variance)


def test_take_all_when_undercounted():
    pop = Population(workers(50))
    sched = TierSchedule.from_dict({"groups": [group("a", external_size=80)]})
    draft = assign_group_membership(pop, sched, seed=1)
    assert draft.diagnostics["a"].diagnostic == "take_all"
    assert draft.members("a").all()


def test_scale_multiplies_external_size():
    pop = Population(workers(1000))
    sched = TierSchedule.from_dict({"groups": [group("a", external_size=1000)]})
    assert assign_group_membership(pop, sched, 1, scale=0.1).diagnostics["a"].probability == pytest.approx(0.1)


def test_exclusions_applied_before_probability():
    pop = Population(workers(100))
    sched = TierSchedule.from_dict({"groups": [
        group("first", tier=1, subtier=2, external_size=1000),
        group("second", external_size=1000, exclusion_groups=["first"]),
    ]})
    draft = assign_group_membership(pop, sched, 1)
    assert draft.diagnostics["second"].superset_mass == 0
    assert draft.diagnostics["second"].diagnostic == "empty_superset"
    assert not draft.members("second").any()


def test_frontline_split():
    pop = Population(workers(10_000))
    sched = TierSchedule.from_dict({"groups": [group(
        "hc", tier=1, subtier=7, external_size=1e9, frontline_split=0.5,
        frontline_subtiers=[{"when": None, "subtier": 1}])]})
    draft = assign_group_membership(pop, sched, 4)
    ranks = draft.rank[:, 0]
    front = (ranks == rank_of(1, 1)).mean()
    assert set(np.unique(ranks)) == {rank_of(1, 1), rank_of(1, 7)}
    assert abs(front - 0.5) < 4 * math.sqrt(0.25 / 10_000)


def test_frontline_conditional_subtiers():
    pop = Population(workers(2000, occupation_code="A") + [
        person(f"v{i}", industry_code="X", occupation_code="B") for i in range(2000)])
    sched = TierSchedule.from_dict({"groups": [group(
        "em", tier=1, subtier=7, external_size=1e9, frontline_split=1.0,
        frontline_subtiers=[{"when": {"field": "occupation_code", "op": "eq", "values": ["A"]}, "subtier": 3},
                            {"when": None, "subtier": 5}])]})
    ranks = assign_group_membership(pop, sched, 4).rank[:, 0]
    assert (ranks[:2000] == rank_of(1, 3)).all() and (ranks[2000:] == rank_of(1, 5)).all()


def test_infant_split_and_contacts():
    hh = [HouseholdRecord(f"H{i}", persons_count=3, rooms_count=3) for i in range(400)]
    persons = []
    for i in range(400):
        persons += [person(f"i{i}", age=0, household_id=f"H{i}"), person(f"m{i}", household_id=f"H{i}")]
    persons.append(person("gq_infant", age=0, group_quarters=True))
    pop = Population(persons, hh)
    cls, contact = split_infants(pop, 9)
    infants = pop.age == 0
    assert set(cls[infants]) <= {"0-5", "6-11"} and (cls[~infants] == "").all()
    young = cls == "0-5"
    assert abs(young[infants].mean() - 0.5) < 4 * math.sqrt(0.25 / infants.sum())
    for i in range(400):
        assert contact[2 * i + 1] == young[2 * i]  # the adult is a contact iff the infant is 0-5 months
    assert contact[young].all()


def _mothers(n, **kw):
    return [person(f"m{i}", age=28, gave_birth_past_year=True, **kw) for i in range(n)]


def test_pregnancy_cohort():
    pop = Population(_mothers(5000))
    sched = default_schedule()
    draft = assign_group_membership(pop, sched, 2, modes=("probabilistic", "take_all"))
    aug, pregnant, source = synthesize_pregnancy_cohort(pop, draft, 2)
    k = pregnant.sum()
    assert len(aug) == len(pop) + k
    assert abs(k / 5000 - PREGNANCY_PROBABILITY) < 4 * math.sqrt(PREGNANCY_PROBABILITY * 0.27 / 5000)
    dup = np.flatnonzero(pregnant)
    assert all(str(aug.person_id[i]).endswith("~pregnant") for i in dup)
    assert np.array_equal(aug.age[dup], pop.age[source[dup]])


def test_pregnancy_skips_higher_tiers():
    pop = Population(_mothers(300, industry_code="X"))
    sched = TierSchedule.from_dict({"groups": [group("top", tier=1, subtier=2, external_size=1e9)]})
    draft = assign_group_membership(pop, sched, 1)
    _, pregnant, _ = synthesize_pregnancy_cohort(pop, draft, 1)
    assert not pregnant.any()


def test_resolution_and_orphans():
    pop = Population(workers(3))
    sched = TierSchedule.from_dict({"groups": [
        group("t3", tier=3, external_size=1e9), group("t13", tier=1, subtier=3, external_size=1e9),
        group("t2", tier=2, external_size=1e9)]})
    res = resolve_highest_tier(assign_group_membership(pop, sched, 1))
    assert res[0].highest == (1, 3)
    assert res[0].member_groups == {"t3", "t13", "t2"}
    with pytest.raises(ClassificationError):
        resolve_highest_tier(assign_group_membership(Population([person("z")]), sched, 1))


def test_stage_streams_independent():
    pop = Population(workers(3000) + _mothers(500))
    sched = TierSchedule.from_dict({"groups": [group("a", external_size=1000)]})
    one = assign_group_membership(pop, sched, 5).members("a")
    sub = pop.subset(np.arange(3000))
    two = assign_group_membership(sub, TierSchedule.from_dict({"groups": [group("a", external_size=1000 * 3000 / 3000)]}),
                                  5).members("a")
    # same person, same stream, same probability -> same draw regardless of who else exists
    p1 = assign_group_membership(pop, sched, 5).diagnostics["a"].probability
    p2 = assign_group_membership(sub, sched, 5).diagnostics["a"].probability
    assert p1 == p2
    assert np.array_equal(one[:3000], two)


@pytest.fixture(scope="module")
def labelled():
    from vaxration.risk import build_risk_table, generate_risk_survey, impute_high_risk
    from vaxration.synthetic import SyntheticConfig, generate_synthetic
    pop = generate_synthetic(SyntheticConfig(seed=3, population_size=300_000))
    hr = impute_high_risk(pop, build_risk_table(generate_risk_survey(3, 5000)), 3)
    return pop, label_population(pop, default_schedule(), 3, hr, scale=pop.weighted_total() / 325e6)


def test_everyone_resolved(labelled):
    pop, lab = labelled
    ranks = lab.assignments.highest_rank
    assert len(ranks) == len(lab.population) and (ranks >= 0).all() and (ranks < len(RANKS)).all()
    assert lab.population.weighted_total() > pop.weighted_total()


def test_pregnancy_toggle_leaves_other_draws(labelled):
    pop, lab = labelled
    off = label_population(pop, default_schedule(), 3, lab.high_risk[: len(pop)], lab.scale, pregnancy=False)
    n = len(pop)
    assert np.array_equal(off.assignments.draft.member, lab.assignments.draft.member[:n])


def test_census_partitions_mass(labelled, tmp_path):
    _, lab = labelled
    rows = tier_census(lab.population, lab.assignments.highest_rank)
    assert len(rows) == len(RANKS)
    assert math.fsum(r.weighted_mass for r in rows) == pytest.approx(lab.population.weighted_total(), rel=1e-12)
    write_census(rows, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "tier,subtier,weighted_mass,share_black_indigenous,share_high_adi,mean_age,share_female"
    assert lines[8].startswith("2,,")
