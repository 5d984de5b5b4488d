"""Expected (fluid) vaccine allocation under CDC priority and reserve policies.

Within a priority rank, units are rationed uniformly at random, so the
expected allocation to a cell is proportional to its mass.  The same holds
inside each (rank, eligibility) class once a reserve is in play, which
means every quantity below can be computed from an 11 x 2 table of masses.

Reserve processing at supply S, once tier 1 is covered (T1 = tier-1 mass):

    U = T1 + (1 - r)(S - T1)   units go through plain priority over everyone
    R = r (S - T1)              units go to still-unserved eligibles, in rank order
    L                           reserve units left once eligibles run out fall back
                                to plain priority over the remaining population

All cumulative quantities are min/max compositions of linear functions of
S, so right-derivatives are carried alongside values (forward mode).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .population import Population
from .tiers import RANKS, rank_label

N_RANKS = len(RANKS)
TIER1_RANKS = sum(1 for t, _ in RANKS if t == 1)
ELIGIBILITIES = ("high_adi", "black_or_indigenous", "none")
BLACK_INDIGENOUS = ("black", "indigenous")
REFERENCE_POPULATION = 325_000_000

CURVE_COLUMNS = (
    "supply", "policy", "tier_reached", "share_black_indigenous", "share_black_indigenous_hispanic",
    "share_high_adi", "share_female", "mean_age", "marginal_share_high_adi",
)


class AllocationError(ValueError):
    pass


# --- inputs -------------------------------------------------------------------

@dataclass(frozen=True)
class ReservePolicy:
    reserve_fraction: float = 0.0
    eligibility: str = "none"
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.reserve_fraction <= 1.0:
            raise AllocationError("reserve_fraction must lie in [0, 1]")
        if self.eligibility not in ELIGIBILITIES:
            raise AllocationError(f"unknown eligibility {self.eligibility!r}")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.is_plain:
            return "cdc"
        return f"{self.eligibility}_r{self.reserve_fraction:g}"

    @property
    def is_plain(self) -> bool:
        return self.reserve_fraction == 0.0 or self.eligibility == "none"

    @classmethod
    def parse(cls, text: str) -> "ReservePolicy":
        """Parse ``r=0.2,eligibility=high_adi[,name=...]``."""
        fields = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, sep, value = part.partition("=")
            if not sep:
                raise AllocationError(f"bad policy clause {part!r}")
            fields[key.strip()] = value.strip()
        unknown = set(fields) - {"r", "eligibility", "name"}
        if unknown:
            raise AllocationError(f"unknown policy keys {sorted(unknown)}")
        try:
            r = float(fields.get("r", 0.0))
        except ValueError:
            raise AllocationError(f"bad reserve fraction {fields['r']!r}") from None
        return cls(r, fields.get("eligibility", "high_adi" if r > 0 else "none"), fields.get("name", ""))


CDC = ReservePolicy()


@dataclass(frozen=True, eq=False)
class Strata:
    """Cells of weighted mass keyed by rank and reporting attributes."""

    rank: np.ndarray
    mass: np.ndarray
    high_adi: np.ndarray
    race: np.ndarray
    hispanic: np.ndarray
    sex: np.ndarray
    age: np.ndarray
    state: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.mass)
        for name in ("rank", "high_adi", "race", "hispanic", "sex", "age", "state"):
            if len(getattr(self, name)) != n:
                raise AllocationError(f"strata column {name} has the wrong length")
        if n and (not np.all(np.isfinite(self.mass)) or self.mass.min() < 0):
            raise AllocationError("cell masses must be finite and non-negative")
        if n and (self.rank.min() < 0 or self.rank.max() >= N_RANKS):
            raise AllocationError("cell rank out of range")

    def __len__(self) -> int:
        return len(self.mass)

    @classmethod
    def from_population(cls, population: Population, highest_rank, high_adi, aggregate: bool = True) -> "Strata":
        rank = np.asarray(highest_rank, dtype=np.int64)
        hi = np.asarray(high_adi, dtype=bool)
        if len(rank) != len(population) or len(hi) != len(population):
            raise AllocationError("rank and high-ADI arrays must align with the population")
        cols = dict(rank=rank, high_adi=hi, race=population.race, hispanic=population.hispanic,
                    sex=population.sex, age=population.age, state=population.state)
        if not aggregate:
            return cls(mass=np.asarray(population.weight, dtype=np.float64), **cols)
        keys = np.rec.fromarrays(list(cols.values()), names=list(cols))
        uniq, inverse = np.unique(keys, return_inverse=True)
        mass = np.bincount(inverse.ravel(), weights=population.weight, minlength=len(uniq))
        return cls(mass=mass, **{k: np.asarray(uniq[k]) for k in cols})

    @property
    def total(self) -> float:
        if "total" not in self._cache:
            self._cache["total"] = math.fsum(self.mass)
        return self._cache["total"]

    @property
    def tier1_mass(self) -> float:
        if "tier1" not in self._cache:
            self._cache["tier1"] = math.fsum(self.mass[self.rank < TIER1_RANKS])
        return self._cache["tier1"]

    def eligible(self, eligibility: str) -> np.ndarray:
        key = ("eligible", eligibility)
        if key not in self._cache:
            self._cache[key] = self._eligible(eligibility)
        return self._cache[key]

    def _eligible(self, eligibility: str) -> np.ndarray:
        if eligibility == "high_adi":
            return self.high_adi.astype(bool)
        if eligibility == "black_or_indigenous":
            return np.isin(self.race, BLACK_INDIGENOUS)
        if eligibility == "none":
            return np.zeros(len(self), dtype=bool)
        raise AllocationError(f"unknown eligibility {eligibility!r}")

    def indicators(self) -> dict[str, np.ndarray]:
        hit = self._cache.get("indicators")
        if hit is not None:
            return hit
        bi = np.isin(self.race, BLACK_INDIGENOUS)
        hit = self._cache["indicators"] = {
            "black_indigenous": bi,
            "black_indigenous_hispanic": bi | self.hispanic.astype(bool),
            "high_adi": self.high_adi.astype(bool),
            "female": self.sex == "female",
            "multiracial": self.race == "multiracial",
        }
        return hit

    def class_table(self, eligibility: str, weights: np.ndarray | None = None) -> np.ndarray:
        """(ranks x 2) sum of ``weights`` (default: mass); column 1 holds eligibles."""
        w = self.mass if weights is None else weights
        e = self.eligible(eligibility).astype(np.int64)
        out = np.zeros((N_RANKS, 2))
        np.add.at(out, (self.rank, e), w)
        return out

    def _tables(self, eligibility: str) -> dict:
        hit = self._cache.get(eligibility)
        if hit is None:
            hit = {"mass": self.class_table(eligibility)}
            for name, mask in self.indicators().items():
                hit[name] = self.class_table(eligibility, self.mass * mask)
            hit["age_mass"] = self.class_table(eligibility, self.mass * self.age)
            self._cache[eligibility] = hit
        return hit


# --- kernel -------------------------------------------------------------------

def _fill(U, dU, B, M):
    """Per-rank filled fraction for U units through plain priority, with slopes."""
    prev = B - M
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        phi = np.where(M > 0, np.clip((U[:, None] - prev) / M, 0.0, 1.0), 1.0)
        active = (U[:, None] >= prev) & (U[:, None] < B) & (M > 0)
        dphi = np.where(active, dU[:, None] / np.where(M > 0, M, 1.0), 0.0)
    return phi, dphi


def _min(a, da, b):
    """min(a, b) for constant b, with right-derivative (ties take the smaller slope)."""
    return np.minimum(a, b), np.where(a < b, da, np.minimum(da, 0.0))


def _fractions(table: np.ndarray, r: float, supply: np.ndarray):
    """Allocated fraction of each (rank, class) and its right-derivative in supply.

    ``table`` is the (ranks x 2) mass table.  Returns arrays of shape
    (len(supply), ranks, 2).
    """
    S = np.asarray(supply, dtype=np.float64)
    if S.ndim != 1:
        raise AllocationError("supply must be one-dimensional")
    if np.any(S < 0) or not np.all(np.isfinite(S)):
        raise AllocationError("supply must be finite and non-negative")
    n_el, el = table[:, 0], table[:, 1]
    M = n_el + el
    B = np.cumsum(M)
    T1 = B[TIER1_RANKS - 1]
    after = S >= T1
    U = np.where(after, T1 + (1.0 - r) * (S - T1), S)
    dU = np.where(after, 1.0 - r, 1.0)
    R = np.where(after, r * (S - T1), 0.0)
    dR = np.where(after, r, 0.0)

    phi, dphi = _fill(U, dU, B, M)
    UE, dUE = np.cumsum(phi * el, axis=1), np.cumsum(dphi * el, axis=1)
    UN, dUN = np.cumsum(phi * n_el, axis=1), np.cumsum(dphi * n_el, axis=1)
    E, N = np.cumsum(el), np.cumsum(n_el)

    CE, dCE = _min(UE + R[:, None], dUE + dR[:, None], E)

    x = R - E[-1] + UE[:, -1]
    dx = dR + dUE[:, -1]
    L = np.maximum(x, 0.0)
    dL = np.where(x > 0, dx, np.where(x == 0, np.maximum(dx, 0.0), 0.0))
    CN, dCN = _min(UN + L[:, None], dUN + dL[:, None], N)

    def per_rank(C):
        return np.diff(C, axis=1, prepend=0.0)

    alloc = np.stack([per_rank(CN), per_rank(CE)], axis=2)
    dalloc = np.stack([per_rank(dCN), per_rank(dCE)], axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(table > 0, alloc / np.where(table > 0, table, 1.0), 0.0)
        df = np.where(table > 0, dalloc / np.where(table > 0, table, 1.0), 0.0)
    # lowest-priority rank receiving anything, for reporting
    got = (alloc > 0).any(axis=2)
    reached = np.where(got.any(axis=1), N_RANKS - 1 - np.argmax(got[:, ::-1], axis=1), 0)
    return np.clip(f, 0.0, 1.0), df, reached


# --- results ------------------------------------------------------------------

@dataclass(eq=False)
class AllocationResult:
    """Expected allocation at one supply level.

    ``fractions[k, e]`` is the expected allocated fraction of every cell in
    rank ``k`` and eligibility class ``e``; ``slopes`` holds its
    right-derivative with respect to supply.
    """

    supply: float
    policy: ReservePolicy
    strata: Strata
    fractions: np.ndarray
    slopes: np.ndarray
    reached_rank: int

    def _cell_index(self):
        return self.strata.rank, self.strata.eligible(self.policy.eligibility).astype(np.int64)

    @property
    def cell_allocated(self) -> np.ndarray:
        return self.strata.mass * self.fractions[self._cell_index()]

    @property
    def cell_marginal(self) -> np.ndarray:
        return self.strata.mass * self.slopes[self._cell_index()]

    def _fold(self, name: str, table=None) -> float:
        t = self.strata._tables(self.policy.eligibility)[name] if table is None else table
        return math.fsum((self.fractions * t).ravel())

    def _dfold(self, name: str, table=None) -> float:
        t = self.strata._tables(self.policy.eligibility)[name] if table is None else table
        return math.fsum((self.slopes * t).ravel())

    @property
    def total_allocated(self) -> float:
        return self._fold("mass")

    def allocated(self, mask=None) -> float:
        if mask is None:
            return self.total_allocated
        return self._fold("", self.strata.class_table(self.policy.eligibility, self.strata.mass * mask))

    def share(self, attribute) -> float | None:
        """Allocated share of an indicator (name or cell mask); None at zero allocation."""
        total = self.total_allocated
        if total <= 0:
            return None
        if isinstance(attribute, str):
            return self._fold(attribute) / total
        return self.allocated(np.asarray(attribute, bool)) / total

    def marginal(self, attribute) -> float:
        if attribute is None:
            return self._dfold("mass")
        if isinstance(attribute, str):
            return self._dfold(attribute)
        t = self.strata.class_table(self.policy.eligibility, self.strata.mass * np.asarray(attribute, bool))
        return self._dfold("", t)

    @property
    def mean_age(self) -> float | None:
        total = self.total_allocated
        return None if total <= 0 else self._fold("age_mass") / total

    @property
    def shares(self) -> dict:
        return {name: self.share(name) for name in self.strata.indicators()}

    @property
    def tier_reached(self) -> str:
        return rank_label(self.reached_rank)


def _results(strata: Strata, supplies, policy: ReservePolicy) -> list[AllocationResult]:
    supplies = np.atleast_1d(np.asarray(supplies, dtype=np.float64))
    if np.any(supplies < 0):
        raise AllocationError("supply must be non-negative")
    r = 0.0 if policy.is_plain else policy.reserve_fraction
    table = strata._tables(policy.eligibility)["mass"]
    f, df, reached = _fractions(table, r, supplies)
    return [AllocationResult(float(s), policy, strata, f[i], df[i], int(reached[i]))
            for i, s in enumerate(supplies)]


def allocate_priority(strata: Strata, supply: float) -> AllocationResult:
    """Fill ranks in order; a partially filled rank splits proportionally to cell mass."""
    return _results(strata, [supply], CDC)[0]


def allocate_with_reserve(strata: Strata, supply: float, policy: ReservePolicy) -> AllocationResult:
    return _results(strata, [supply], policy)[0]


def marginal_share(strata: Strata, supply: float, policy: ReservePolicy, predicate=None) -> float:
    """Right-derivative of allocated mass in ``predicate`` (cell mask or indicator name)."""
    if supply > strata.total:
        raise AllocationError(f"supply {supply} exceeds total mass {strata.total}")
    return allocate_with_reserve(strata, supply, policy).marginal(predicate)


def exhaustion_supply(strata: Strata, policy: ReservePolicy) -> float:
    """Smallest supply at which every eligible person is fully allocated."""
    table = strata.class_table(policy.eligibility)
    el = table[:, 1]
    if not el.sum() > 0:
        raise AllocationError("policy has no eligible mass")
    M = table.sum(axis=1)
    B = np.cumsum(M)
    last = int(np.flatnonzero(el > 0).max())
    r = 0.0 if policy.is_plain else policy.reserve_fraction
    if last < TIER1_RANKS or r == 0.0:
        return float(B[last])
    T1 = float(B[TIER1_RANKS - 1])
    E_tot = float(el.sum())
    E_before = float(el[:TIER1_RANKS].sum())
    if r == 1.0:
        return T1 + (E_tot - E_before)
    # g(U) = eligible reached by priority up to U + r/(1-r)(U - T1) - E_tot, increasing in U
    k_gain = r / (1.0 - r)
    for k in range(TIER1_RANKS, N_RANKS):
        lo = float(B[k] - M[k])
        g_lo = E_before + k_gain * (lo - T1) - E_tot
        if g_lo >= 0:
            U = lo
            break
        slope = (el[k] / M[k] if M[k] > 0 else 0.0) + k_gain
        if g_lo + slope * M[k] >= 0:
            U = lo + (-g_lo) / slope
            break
        E_before += float(el[k])
    else:  # pragma: no cover - g reaches zero by the last eligible rank
        U = float(B[-1])
    return T1 + (U - T1) / (1.0 - r)


# --- sweeps -------------------------------------------------------------------

def default_grid(total: float, reference_population: float = REFERENCE_POPULATION) -> np.ndarray:
    """10k-unit steps to 100k, then 100k-unit steps, scaled to ``total``."""
    if total <= 0:
        return np.zeros(1)
    scale = total / reference_population
    fine = np.arange(0, 100_000, 10_000) * scale
    coarse = np.arange(100_000, reference_population, 100_000) * scale
    grid = np.concatenate([fine, coarse])
    grid = grid[grid < total]
    return np.append(grid, total)


def parse_grid(spec: str, total: float) -> np.ndarray:
    """``default``, ``points:N`` (N evenly spaced from 0 to total), ``step:X`` or ``a,b,c``."""
    spec = spec.strip()
    try:
        if spec in ("", "default"):
            return default_grid(total)
        if spec.startswith("points:"):
            n = int(spec.split(":", 1)[1])
            if n < 1:
                raise AllocationError("points must be >= 1")
            return np.linspace(0.0, total, n) if n > 1 else np.array([total])
        if spec.startswith("step:"):
            step = float(spec.split(":", 1)[1])
            if not step > 0:
                raise AllocationError("step must be positive")
            grid = np.arange(0.0, total, step)
            return np.append(grid, total)
        return np.array([float(x) for x in spec.split(",")])
    except ValueError as exc:
        if isinstance(exc, AllocationError):
            raise
        raise AllocationError(f"bad supply grid {spec!r}") from None


def sweep_supply(strata: Strata, policy: ReservePolicy, grid: Sequence[float] | None = None) -> list[AllocationResult]:
    grid = default_grid(strata.total) if grid is None else np.asarray(grid, dtype=np.float64)
    if len(grid) > 1 and np.any(np.diff(grid) <= 0):
        raise AllocationError("supply grid must be strictly increasing")
    return _results(strata, grid, policy)


# --- curve output -------------------------------------------------------------

def _num(x) -> str:
    return "" if x is None else repr(float(x))


def curve_rows(results: Sequence[AllocationResult]) -> list[tuple]:
    rows = []
    for res in results:
        s = res.shares
        rows.append((
            _num(res.supply), res.policy.label, res.tier_reached,
            _num(s["black_indigenous"]), _num(s["black_indigenous_hispanic"]), _num(s["high_adi"]),
            _num(s["female"]), _num(res.mean_age),
            _num(res.marginal("high_adi") if res.supply < res.strata.total else 0.0),
        ))
    return rows


def write_curve(results: Sequence[AllocationResult], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        w.writerows(curve_rows(results))


def read_curve(path) -> list[dict]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise AllocationError(f"{path}: unexpected allocation curve header")
        return list(reader)


__all__ = [
    "ReservePolicy", "Strata", "AllocationResult", "AllocationError", "CDC", "CURVE_COLUMNS",
    "allocate_priority", "allocate_with_reserve", "marginal_share", "exhaustion_supply",
    "sweep_supply", "default_grid", "parse_grid", "write_curve", "read_curve", "curve_rows",
]
