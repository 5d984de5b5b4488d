import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_strata
from oracles import death_share
from vaxration.allocation import CDC, ReservePolicy, allocate_priority, allocate_with_reserve, sweep_supply
from vaxration.metrics import (
    DEATH_RACES, MetricsError, RaceDeathTable, StateOutcomeTable, death_share_estimate, group_share_curve,
    read_race_deaths, read_state_outcomes, state_fair_share_index, write_fair_share, write_state_outcomes,
)
from vaxration.population import ParseError
from vaxration.tiers import rank_of


def table(pop, rate, adj=None):
    return RaceDeathTable(pop, rate, adj or rate)


def _two_race(pa, pb, ra, rb):
    pop = dict.fromkeys(DEATH_RACES, 0.0) | {"black": pa, "white": pb}
    rate = dict.fromkeys(DEATH_RACES, 0.0) | {"black": ra, "white": rb}
    return table(pop, rate)


def test_toy_two_races():
    assert death_share_estimate(_two_race(0.5, 0.5, 2.4, 1.0), {"black"}) == pytest.approx(1.2 / 1.7, abs=1e-15)
    assert round(death_share_estimate(_two_race(0.5, 0.5, 2.4, 1.0), {"black"}), 4) == 0.7059


shares = st.lists(st.floats(0.001, 1), min_size=6, max_size=6)


@settings(max_examples=60, deadline=None)
@given(pop=shares, rate=shares, c=st.floats(0.01, 100), races=st.sets(st.sampled_from(DEATH_RACES)))
def test_estimator_properties(pop, rate, c, races):
    p = dict(zip(DEATH_RACES, pop))
    r = dict(zip(DEATH_RACES, rate))
    t = table(p, r)
    assert death_share_estimate(t, DEATH_RACES) == 1.0
    assert death_share_estimate(t, races) == pytest.approx(death_share(p, r, races), rel=1e-12, abs=1e-15)
    scaled = table(p, {k: v * c for k, v in r.items()})
    assert death_share_estimate(scaled, races) == pytest.approx(death_share_estimate(t, races), rel=1e-12, abs=1e-15)
    uniform = table(p, dict.fromkeys(DEATH_RACES, 3.0))
    assert death_share_estimate(uniform, races) == pytest.approx(sum(p[k] for k in races) / sum(pop), rel=1e-12,
                                                                 abs=1e-15)


def test_estimator_errors():
    zero = dict.fromkeys(DEATH_RACES, 0.0)
    with pytest.raises(MetricsError):
        death_share_estimate(table(zero, zero), {"black"})
    with pytest.raises(MetricsError):
        death_share_estimate(_two_race(1, 1, 1, 1), {"martian"})
    with pytest.raises(MetricsError):
        RaceDeathTable({"black": 1.0}, {"black": 1.0}, {"black": 1.0})
    with pytest.raises(MetricsError):
        table(dict.fromkeys(DEATH_RACES, 1.0), dict.fromkeys(DEATH_RACES, -1.0))


def test_race_death_csv(tmp_path):
    f = tmp_path / "deaths.csv"
    f.write_text("race,population_share,death_rate,age_adjusted_death_rate\n"
                 + "".join(f"{r},0.1,{i + 1},{2 * i + 1}\n" for i, r in enumerate(DEATH_RACES)))
    t = read_race_deaths(f)
    assert t.death_rate["asian"] == 2.0 and t.age_adjusted_death_rate["black"] == 5.0
    f.write_text("race,share\n")
    with pytest.raises(ParseError):
        read_race_deaths(f)


def _mixed_strata():
    return make_strata(
        rank=[rank_of(1, 1), rank_of(2, None), rank_of(2, None), rank_of(3, None), rank_of(4, None)],
        mass=[5.0, 12.0, 8.0, 20.0, 15.0], eligible=[False, True, False, True, False],
        race=["black", "white", "indigenous", "white", "asian"], sex=["female", "male", "female", "male", "female"],
        age=[70, 30, 12, 55, 40], state=["MA", "LA", "MA", "LA", "TX"])


def test_share_curve_matches_cell_fold():
    s = _mixed_strata()
    grid = np.linspace(0, s.total, 17)
    results = sweep_supply(s, ReservePolicy(0.3, "high_adi"), grid)
    bi = np.isin(s.race, ["black", "indigenous"])
    curve = group_share_curve(results, "black_indigenous")
    masked = group_share_curve(results, bi)
    ages = group_share_curve(results, "mean_age")
    assert curve[0] is None and ages[0] is None
    for res, c, m, a in zip(results[1:], curve[1:], masked[1:], ages[1:]):
        cells = res.cell_allocated
        assert c == pytest.approx(cells[bi].sum() / cells.sum(), rel=1e-12)
        assert m == pytest.approx(c, rel=1e-12)
        assert a == pytest.approx((cells * s.age).sum() / cells.sum(), rel=1e-12)
        assert 0 <= c <= 1
    full = results[-1]
    assert group_share_curve([full], "female")[0] == pytest.approx(s.mass[s.sex == "female"].sum() / s.total, abs=1e-12)
    assert ages[-1] == pytest.approx((s.mass * s.age).sum() / s.total, abs=1e-12)


def test_fair_share_proportional_is_one():
    s = _mixed_strata()
    rows = state_fair_share_index(allocate_priority(s, s.total), None)
    assert [r.state for r in rows] == ["LA", "MA", "TX"]
    assert all(r.index == pytest.approx(1.0, abs=1e-12) for r in rows)


def _two_state(vacc_share, bench_share, benchmark):
    s = make_strata([rank_of(2, None), rank_of(2, None)], [vacc_share, 1 - vacc_share], state=["A", "B"])
    res = allocate_priority(s, s.total)
    out = StateOutcomeTable({"A": bench_share, "B": 1 - bench_share}, {"A": bench_share, "B": 1 - bench_share})
    return {r.state: r for r in state_fair_share_index(res, out, benchmark)}


def test_fair_share_examples():
    assert _two_state(0.0204, 0.02, "cases")["A"].index == pytest.approx(1.02, abs=1e-12)
    assert _two_state(0.01, 0.017, "deaths")["A"].index == pytest.approx(0.01 / 0.017, abs=1e-12)
    assert round(_two_state(0.01, 0.017, "deaths")["A"].index, 3) == 0.588


def test_fair_share_population_weighted_mean():
    s = _mixed_strata()
    res = allocate_with_reserve(s, 30, ReservePolicy(0.4, "high_adi"))
    rows = state_fair_share_index(res, None)
    pop = {st_: s.mass[s.state == st_].sum() / s.total for st_ in ("LA", "MA", "TX")}
    assert math.fsum(r.index * pop[r.state] for r in rows) == pytest.approx(1.0, abs=1e-12)


def test_fair_share_zero_benchmark():
    s = make_strata([rank_of(2, None)] * 3, [1.0, 1.0, 1.0], state=["A", "B", "C"])
    out = StateOutcomeTable({"A": 5.0, "B": 0.0, "C": 0.0}, {"A": 1.0, "B": 0.0, "C": 0.0})
    res = allocate_priority(s, 2.0)
    rows = {r.state: r for r in state_fair_share_index(res, out, "cases")}
    assert rows["B"].index == math.inf and rows["B"].flagged
    assert rows["C"].index == math.inf
    assert not rows["A"].flagged
    # a state in the outcomes table that has no cells gets share 0
    out2 = StateOutcomeTable({"A": 1.0, "B": 1.0, "C": 1.0, "D": 0.0}, {"A": 1.0, "B": 1.0, "C": 1.0, "D": 0.0})
    rows = {r.state: r for r in state_fair_share_index(allocate_priority(s, 3.0), out2, "deaths")}
    assert math.isnan(rows["D"].index)
    with pytest.raises(MetricsError):
        state_fair_share_index(res, None, "cases")
    with pytest.raises(MetricsError):
        state_fair_share_index(res, out, "vibes")


def test_outcome_csv_roundtrip(tmp_path):
    t = StateOutcomeTable({"MA": 10.0, "LA": 20.5}, {"MA": 1.0, "LA": 2.0})
    write_state_outcomes(t, tmp_path / "o.csv")
    assert read_state_outcomes(tmp_path / "o.csv") == t
    (tmp_path / "bad.csv").write_text("state,cases,deaths\nMA,1,1\nMA,2,2\n")
    with pytest.raises(ParseError):
        read_state_outcomes(tmp_path / "bad.csv")
    with pytest.raises(MetricsError):
        StateOutcomeTable({"MA": -1.0}, {"MA": 0.0})


def test_fair_share_csv(tmp_path):
    s = _mixed_strata()
    write_fair_share(state_fair_share_index(allocate_with_reserve(s, 10, CDC), None), tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "state,benchmark,supply,index" and len(lines) == 4
    assert lines[1].startswith("LA,population,10.0,")
