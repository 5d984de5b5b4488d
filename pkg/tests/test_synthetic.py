import math

import numpy as np
import pytest

from vaxration.population import ingest_population, write_population
from vaxration.synthetic import ConfigError, SyntheticConfig, generate_synthetic


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(SyntheticConfig(seed=11, population_size=200_000))


def test_same_seed_same_bytes(tmp_path):
    cfg = SyntheticConfig(seed=42, population_size=20_000)
    for name in ("a", "b"):
        write_population(generate_synthetic(cfg), tmp_path / f"{name}p.csv", tmp_path / f"{name}h.csv")
    assert (tmp_path / "ap.csv").read_bytes() == (tmp_path / "bp.csv").read_bytes()
    assert (tmp_path / "ah.csv").read_bytes() == (tmp_path / "bh.csv").read_bytes()


def test_different_seed_differs():
    a = generate_synthetic(SyntheticConfig(seed=1, population_size=5_000))
    b = generate_synthetic(SyntheticConfig(seed=2, population_size=5_000))
    assert not np.array_equal(a.age, b.age)


def test_size_zero():
    pop = generate_synthetic(SyntheticConfig(population_size=0))
    assert len(pop) == 0 and pop.weighted_total() == 0


def test_total_weight_is_population_size(small):
    assert small.weighted_total() == pytest.approx(200_000, rel=1e-12)
    assert (small.weight > 0).all()


def test_group_quarters_unlinked(small):
    gq = small.group_quarters
    assert gq.any()
    assert (small.household_id[gq] == "").all()
    assert (small.household_id[~gq] != "").all()


def test_households_share_race_and_state(small):
    for col in (small.race, small.state, small.weight):
        hh = small.household_id
        for h in np.unique(hh[hh != ""])[:200]:
            assert len(np.unique(col[hh == h])) == 1


def _share(pop, mask):
    return pop.weighted_total(mask) / pop.weighted_total()


@pytest.mark.parametrize("name, mask_fn, target", [
    ("female", lambda p: p.sex == "female", 0.508),
    ("group_quarters", lambda p: p.group_quarters, 0.025),
    ("black", lambda p: p.race == "black", 0.147),
])
def test_marginals(small, name, mask_fn, target):
    # household clustering inflates the variance; use the record count over mean household size
    n_eff = len(small) / 2.5
    tol = max(0.01, 3 * math.sqrt(target * (1 - target) / n_eff))
    assert abs(_share(small, mask_fn(small)) - target) <= tol


@pytest.mark.parametrize("field, value", [
    ("race", {"white": 0.5, "black": 0.4}),
    ("female", 1.5),
    ("household_size_distribution", {1: 0.5, 2: 0.6}),
])
def test_infeasible_config(field, value):
    cfg = SyntheticConfig(**{field: value})
    with pytest.raises(ConfigError):
        generate_synthetic(cfg)


def test_unknown_config_key():
    with pytest.raises(ConfigError):
        SyntheticConfig.from_dict({"sead": 1})


def test_config_round_trip():
    cfg = SyntheticConfig(seed=9, population_size=123)
    assert SyntheticConfig.from_dict(cfg.to_dict()) == cfg


def test_reingest_preserves_marginals(tmp_path, small):
    write_population(small, tmp_path / "p.csv", tmp_path / "h.csv")
    again = ingest_population(tmp_path / "p.csv", tmp_path / "h.csv")
    assert again.weighted_total() == pytest.approx(small.weighted_total(), rel=1e-12)
    assert _share(again, again.race == "black") == pytest.approx(_share(small, small.race == "black"), rel=1e-12)
