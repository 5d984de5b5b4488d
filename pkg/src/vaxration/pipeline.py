"""Run configuration and the end-to-end procedure behind ``vaxration run``.

Order of stages: population (generate or ingest), high-risk imputation,
ADI, tier labelling, allocation sweeps per policy, metrics.  Every random
draw goes through a named substream of the run seed; the names are listed
in the manifest.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adi import AdiAssignments, AdiCoefficients, PovertyThresholds, compute_adi
from .allocation import (
    CDC, REFERENCE_POPULATION, AllocationResult, ReservePolicy, Strata, parse_grid, sweep_supply, write_curve,
)
from .metrics import (
    RaceDeathTable, death_share_estimate, read_race_deaths, read_state_outcomes, state_fair_share_index,
    write_fair_share,
)
from .population import Population, ingest_population, write_population
from .risk import build_risk_table, generate_risk_survey, impute_high_risk, read_risk_survey
from .synthetic import ConfigError, SyntheticConfig, generate_synthetic
from .tiers import TierLabels, TierSchedule, label_population, tier_census, write_census

SUBSTREAMS = (
    "synthetic/*", "risk_survey", "risk/high_risk", "groups/<group_id>", "frontline/<group_id>",
    "infants/0-5", "pregnancy/cohort",
)
DEFAULT_POLICIES = ("r=0", "r=0.2,eligibility=high_adi", "r=0.4,eligibility=high_adi")
DEFAULT_FAIR_SHARE_SUPPLIES = (20_000_000, 50_000_000)


class StageError(RuntimeError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


class InvariantError(RuntimeError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunConfig:
    seed: int = 0
    synthetic: dict | None = None
    inputs: dict | None = None  # {"persons": path, "households": path?, "manifest": path?}
    schedule: str | None = None
    adi_coefficients: str | None = None
    poverty_thresholds: str | None = None
    risk_survey: str | None = None
    race_deaths: str | None = None
    state_outcomes: str | None = None
    policies: list = field(default_factory=lambda: list(DEFAULT_POLICIES))
    supply_grid: str = "default"
    fair_share_supplies: list = field(default_factory=lambda: list(DEFAULT_FAIR_SHARE_SUPPLIES))
    income_disparity: str = "zero"
    pregnancy_cohort: bool = True
    base_dir: str = "."

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if (self.synthetic is None) == (self.inputs is None):
            raise ConfigError("exactly one of 'synthetic' and 'inputs' must be given")
        if self.inputs is not None and "persons" not in self.inputs:
            raise ConfigError("inputs need a 'persons' path")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            ReservePolicy.parse(p)
        if self.income_disparity not in ("zero", "log_ratio"):
            raise ConfigError("income_disparity must be 'zero' or 'log_ratio'")
        if any(not s >= 0 for s in self.fair_share_supplies):
            raise ConfigError("fair-share supplies must be non-negative")

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "RunConfig":
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown run config keys {sorted(unknown)}")
        return cls(base_dir=str(base_dir), **d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__ if k != "base_dir"}

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))

    def synthetic_config(self) -> SyntheticConfig:
        d = dict(self.synthetic or {})
        d["seed"] = self.seed
        cfg = SyntheticConfig.from_dict(d)
        cfg.validate()
        return cfg

    def reserve_policies(self) -> list[ReservePolicy]:
        return [ReservePolicy.parse(p) for p in self.policies]


@dataclass
class PipelineResult:
    config: RunConfig
    population: Population
    high_risk: np.ndarray
    adi: AdiAssignments
    labels: TierLabels
    strata: Strata
    curves: dict  # policy label -> list[AllocationResult]
    race_deaths: RaceDeathTable | None

    @property
    def high_adi(self) -> np.ndarray:
        """High-ADI flag per row of the augmented (tiered) population."""
        return self.adi.high_adi[self.labels.source_index]


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (StageError, InvariantError):
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise StageError(name, exc) from exc


def load_population(config: RunConfig) -> Population:
    if config.synthetic is not None:
        return generate_synthetic(config.synthetic_config())
    inputs = config.inputs
    persons = config.resolve(inputs["persons"])
    households = config.resolve(inputs.get("households"))
    if inputs.get("manifest"):
        verify_input_manifest(config.resolve(inputs["manifest"]), persons, households)
    return ingest_population(persons, households)


def verify_input_manifest(manifest_path, persons, households) -> None:
    manifest = json.loads(Path(manifest_path).read_text())
    files = manifest.get("files", {})
    for path in (persons, households):
        if path is None:
            continue
        expected = files.get(Path(path).name)
        if expected is None:
            raise ConfigError(f"{manifest_path}: no entry for {Path(path).name}")
        if sha256_file(path) != expected:
            raise ConfigError(f"{path} does not match the hash recorded in {manifest_path}")


def run_pipeline(config: RunConfig) -> PipelineResult:
    seed = config.seed
    population = _stage("population", load_population, config)
    if len(population) == 0:
        raise StageError("population", ConfigError("population is empty"))

    def risk():
        survey = (read_risk_survey(config.resolve(config.risk_survey)) if config.risk_survey
                  else generate_risk_survey(seed))
        return impute_high_risk(population, build_risk_table(survey), seed)

    high_risk = _stage("risk", risk)

    def adi():
        coeffs = AdiCoefficients.load(config.resolve(config.adi_coefficients))
        thresholds = PovertyThresholds.load(config.resolve(config.poverty_thresholds))
        return compute_adi(population, coeffs, thresholds, config.income_disparity)

    adi_result = _stage("adi", adi)

    def tiers():
        schedule = TierSchedule.load(config.resolve(config.schedule))
        scale = population.weighted_total() / schedule.reference_population
        return label_population(population, schedule, seed, high_risk, scale, config.pregnancy_cohort)

    labels = _stage("tiers", tiers)
    high_adi = adi_result.high_adi[labels.source_index]
    strata = _stage("strata", Strata.from_population, labels.population, labels.assignments.highest_rank, high_adi)

    def allocate():
        grid = parse_grid(config.supply_grid, strata.total)
        out = {}
        for policy in config.reserve_policies():
            results = sweep_supply(strata, policy, grid)
            check_conservation(results)
            if policy.label in out:
                raise ConfigError(f"duplicate policy label {policy.label!r}")
            out[policy.label] = results
        return out

    curves = _stage("allocation", allocate)
    deaths = _stage("metrics", read_race_deaths, config.resolve(config.race_deaths)) if config.race_deaths else None
    return PipelineResult(config, population, high_risk, adi_result, labels, strata, curves, deaths)


def check_conservation(results, rel: float = 1e-9) -> None:
    for res in results:
        total = res.strata.total
        want = min(res.supply, total)
        got = res.total_allocated
        if abs(got - want) > rel * max(want, 1.0):
            raise InvariantError(f"allocated {got!r} != {want!r} at supply {res.supply!r}")


# --- outputs ------------------------------------------------------------------

def fair_share_rows(result: PipelineResult, supplies=None):
    cfg = result.config
    scale = result.strata.total / REFERENCE_POPULATION
    supplies = cfg.fair_share_supplies if supplies is None else supplies
    outcomes = read_state_outcomes(cfg.resolve(cfg.state_outcomes)) if cfg.state_outcomes else None
    benchmarks = ("population", "cases", "deaths") if outcomes else ("population",)
    baseline = cfg.reserve_policies()[0]
    rows = []
    for s in supplies:
        supply = min(s * scale, result.strata.total)
        res = sweep_supply(result.strata, baseline, [supply])[0]
        for b in benchmarks:
            rows.extend(state_fair_share_index(res, outcomes, b))
    return rows


def benchmark_rows(result: PipelineResult) -> list[tuple[str, float]]:
    pop = result.labels.population
    w = pop.weight
    total = math.fsum(w)
    bi = np.isin(pop.race, ("black", "indigenous"))
    rows = [
        ("population_share_black_indigenous", math.fsum(w[bi]) / total),
        ("population_share_black_indigenous_hispanic", math.fsum(w[bi | pop.hispanic]) / total),
        ("population_share_multiracial", math.fsum(w[pop.race == "multiracial"]) / total),
        ("population_share_high_adi", math.fsum(w[result.high_adi]) / total),
        ("population_share_female", math.fsum(w[pop.sex == "female"]) / total),
        ("population_mean_age", math.fsum(w * pop.age) / total),
        ("tier1_mass", result.strata.tier1_mass),
        ("total_mass", result.strata.total),
    ]
    if result.race_deaths is not None:
        rows.append(("death_share_black_indigenous",
                     death_share_estimate(result.race_deaths, ("black", "indigenous"))))
        rows.append(("age_adjusted_death_share_black_indigenous",
                     death_share_estimate(result.race_deaths, ("black", "indigenous"), age_adjusted=True)))
        rows.append(("death_share_black_indigenous_latino",
                     death_share_estimate(result.race_deaths, ("black", "indigenous", "latino"))))
        rows.append(("age_adjusted_death_share_black_indigenous_latino",
                     death_share_estimate(result.race_deaths, ("black", "indigenous", "latino"), age_adjusted=True)))
    return rows


def write_benchmarks(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("benchmark", "value"))
        for name, value in rows:
            w.writerow((name, repr(float(value))))


def write_group_diagnostics(labels: TierLabels, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("group_id", "superset_mass", "target_size", "probability", "diagnostic",
                    "realized_mass", "std"))
        for d in labels.diagnostics.values():
            w.writerow((d.group_id, repr(d.superset_mass), "" if d.target_size is None else repr(d.target_size),
                        repr(d.probability), d.diagnostic or "", repr(d.realized_mass), repr(math.sqrt(d.variance))))


def curve_filename(label: str) -> str:
    safe = "".join(c if c.isalnum() or c in "._-" else "_" for c in label)
    return f"allocation_curve_{safe}.csv"


def write_bundle(result: PipelineResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, fn, *args):
        _stage(f"write {name}", fn, *args, out / name)
        written.append(name)

    for label, results in result.curves.items():
        emit(curve_filename(label), write_curve, results)
    census = tier_census(result.labels.population, result.labels.assignments.highest_rank, result.high_adi)
    emit("tier_census.csv", write_census, census)
    emit("adi_assignments.csv", result.adi.write_csv)
    emit("group_diagnostics.csv", write_group_diagnostics, result.labels)
    emit("fair_share.csv", write_fair_share, _stage("metrics", fair_share_rows, result))
    emit("benchmarks.csv", write_benchmarks, _stage("metrics", benchmark_rows, result))
    manifest = {
        "tool": "vaxration",
        "version": __version__,
        "seed": result.config.seed,
        "config_hash": result.config.hash,
        "config": result.config.to_dict(),
        "substreams": list(SUBSTREAMS),
        "policies": list(result.curves),
        "files": {name: sha256_file(out / name) for name in written},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def generate_bundle(config: SyntheticConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.validate()
    population = generate_synthetic(config)
    write_population(population, out / "persons.csv", out / "households.csv")
    cfg = config.to_dict()
    manifest = {
        "tool": "vaxration",
        "version": __version__,
        "seed": config.seed,
        "config_hash": sha256_text(canonical_json(cfg)),
        "config": cfg,
        "files": {name: sha256_file(out / name) for name in ("persons.csv", "households.csv")},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
