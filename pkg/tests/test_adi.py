import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import person
from vaxration.adi import (
    COMPONENTS, AdiCoefficients, AdiError, FamilyAdiComponents, assign_national_deciles, compute_adi,
    compute_raw_adi, default_coefficients, derive_family_components, flag_high_adi,
)
from vaxration.population import HouseholdRecord, Population

# Singh (2003) factor score coefficients, transcribed independently of the package data file.
SINGH = {
    "education_lt9": 0.0849, "high_school": -0.0970, "white_collar": -0.0874,
    "median_family_income": -0.0977, "income_disparity": 0.0936, "home_value": -0.0688,
    "gross_rent": -0.0781, "mortgage": -0.0770, "ownership": -0.0615, "unemployment": 0.0806,
    "poverty": 0.0977, "below_150_poverty": 0.1037, "single_parent": 0.0719, "no_vehicle": 0.0694,
    "no_telephone": 0.0877, "incomplete_plumbing": 0.0510, "crowding": 0.0556,
}


def test_coefficients_match_reference():
    coeffs = default_coefficients()
    assert dict(coeffs.components) == SINGH
    assert coeffs.names == COMPONENTS


def test_single_component_example():
    comp = FamilyAdiComponents.from_mapping("f", {"unemployment": 100})
    assert compute_raw_adi(comp, default_coefficients()) == 100 * 0.0806
    assert compute_raw_adi(comp, default_coefficients()) == pytest.approx(8.06, abs=1e-12)


def test_missing_components_count_as_zero():
    comp = FamilyAdiComponents.from_mapping("f", {"poverty": 100, "crowding": None})
    assert compute_raw_adi(comp, default_coefficients()) == pytest.approx(9.77, abs=1e-12)


def test_percent_range_checked():
    with pytest.raises(AdiError):
        FamilyAdiComponents.from_mapping("f", {"poverty": 120})
    with pytest.raises(AdiError):
        FamilyAdiComponents.from_mapping("f", {"bogus": 1})


def test_coefficient_count_checked():
    with pytest.raises(AdiError):
        AdiCoefficients((("a", 1.0),))


component_values = st.lists(st.floats(min_value=0, max_value=100), min_size=17, max_size=17)


@settings(max_examples=60, deadline=None)
@given(component_values, component_values, st.floats(min_value=-5, max_value=5))
def test_raw_score_linear(x, y, a):
    coeffs = default_coefficients()

    def score(v):
        return compute_raw_adi(FamilyAdiComponents("f", tuple(v)), coeffs)

    assert score([a * v for v in x]) == pytest.approx(a * score(x), rel=1e-9, abs=1e-9)
    assert score([u + v for u, v in zip(x, y)]) == pytest.approx(score(x) + score(y), rel=1e-9, abs=1e-9)


def test_deciles_unit_weights():
    pop = Population([person(str(i)) for i in range(10)])
    res = assign_national_deciles(pop, np.arange(10.0))
    assert res.decile.tolist() == list(range(1, 11))
    assert res.high_adi.tolist() == [False] * 7 + [True] * 3


def test_straddling_person_takes_lower_decile():
    # cumulative mass before each person: 0, 3, 6 of 10 -> deciles 1, 4, 7
    pop = Population([person("a", 3), person("b", 3), person("c", 4)])
    assert assign_national_deciles(pop, np.array([1.0, 2.0, 3.0])).decile.tolist() == [1, 4, 7]


def test_group_quarters_have_no_decile():
    pop = Population([person("a"), person("g", group_quarters=True), person("b")])
    res = assign_national_deciles(pop, np.array([1.0, np.nan, 2.0]))
    assert res.decile[1] == 0 and not res.high_adi[1]
    assert res[1].decile is None and res[1].raw_score is None


def test_all_group_quarters_is_error():
    with pytest.raises(AdiError):
        assign_national_deciles(Population([person("g", group_quarters=True)]), np.array([np.nan]))


def test_flag_high_adi():
    assert flag_high_adi(8) and flag_high_adi(10) and not flag_high_adi(7)
    assert not flag_high_adi(None)
    assert flag_high_adi(np.array([0, 7, 8])).tolist() == [False, False, True]


def test_family_components_by_hand():
    households = [
        HouseholdRecord("H1", family_income=30_000, gross_rent=800, persons_count=4, rooms_count=2,
                        vehicle_available=False, poverty_ratio=120.0, single_parent_with_children=True),
        HouseholdRecord("H2", owner_occupied=True, property_value=250_000, persons_count=1, rooms_count=4),
    ]
    persons = [
        person("a", age=40, household_id="H1", education="lt9", employment="unemployed"),
        person("b", age=30, household_id="H1", education="hs_plus", employment="employed",
               occupation_code="291141"),
        person("c", age=10, household_id="H1"),
        person("d", age=50, household_id="H2", employment="employed", occupation_code="472061",
               personal_income=9_000.0),
        person("g", age=80, group_quarters=True),
    ]
    table = derive_family_components(Population(persons, households))
    assert len(table) == 2
    assert table.person_family.tolist()[-1] == -1
    f1 = table.by_id("H:H1")
    assert f1["education_lt9"] == 50 and f1["high_school"] == 50
    assert f1["white_collar"] == 100  # one employed member, healthcare practitioner
    assert f1["unemployment"] == 50
    assert f1["median_family_income"] == 30_000
    assert f1["poverty"] == 0 and f1["below_150_poverty"] == 100
    assert f1["crowding"] == 100 and f1["no_vehicle"] == 100 and f1["single_parent"] == 100
    assert f1["ownership"] == 0 and f1["gross_rent"] == 800 and math.isnan(f1["home_value"])
    f2 = table.by_id("P:d")  # no family income: a family of one
    assert f2["white_collar"] == 0
    assert f2["median_family_income"] == 9_000
    assert f2["poverty"] == 100  # 9,000 below the one-person threshold
    assert f2["ownership"] == 100 and f2["crowding"] == 0 and f2["no_vehicle"] == 0
    assert f2["income_disparity"] == 0


def test_compute_adi_end_to_end(tiny_population):
    res = compute_adi(tiny_population)
    assert res.decile[5] == 0  # group quarters
    assert (res.decile[:5] >= 1).all()


def test_write_csv(tmp_path, tiny_population):
    res = compute_adi(tiny_population)
    res.write_csv(tmp_path / "adi.csv")
    lines = (tmp_path / "adi.csv").read_text().splitlines()
    assert lines[0] == "family_id,person_id,raw_score,decile,high_adi"
    assert len(lines) == len(tiny_population) + 1
