"""Monte Carlo estimators, goodness-of-fit reports and brute-force oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from typing import Callable, Hashable, Mapping

import numpy as np
from scipy.stats import chi2

from .core import (
    Animal,
    AnimalRoster,
    PairList,
    PairTypeMatrix,
    PopulationCounts,
    PreferenceMatrix,
    enumerate_states,
    enumerate_tables,
    pattern_from_pairlist,
)
from .engine import (
    FiringProcessSpec,
    FiringSchedule,
    SimulationRecord,
    run_sem,
    run_sem_alternative,
    simulate_pairlists,
    simulate_patterns,
)
from .errors import EmptySample, TooLargeForOracle
from .exact import PmfOverTables
from .rng import derive_seed

ORACLE_MAX_N = 8
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class ModelInputs:
    """Everything a simulation needs besides the seed."""

    pop: PopulationCounts
    prefs: PreferenceMatrix
    spec: FiringProcessSpec
    roster: AnimalRoster | None = None
    order: str = "females_first"


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    runs: int
    seed: int

    def z(self, target: float) -> float:
        """Standardized distance of ``target`` from the estimate."""
        if self.std_error == 0:
            return 0.0 if target == self.mean else math.inf
        return (self.mean - target) / self.std_error


@dataclass(frozen=True)
class GofCell:
    label: str
    observed: int
    expected: float


@dataclass(frozen=True)
class GofReport:
    statistic: float
    degrees_of_freedom: int
    p_value: float
    tv_distance: float
    cells: tuple[GofCell, ...]
    threshold: float

    @property
    def passed(self) -> bool:
        return self.p_value >= self.threshold

    def line(self, name: str) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict} {name}: chi2={self.statistic:.4g} df={self.degrees_of_freedom} "
            f"p={self.p_value:.4g} (threshold {self.threshold:.3g}) tv={self.tv_distance:.4g}"
        )


def _label(key) -> str:
    if isinstance(key, PairTypeMatrix):
        return str(key.rows())
    return str(key)


def gof_compare(observed: Mapping[Hashable, int], expected: PmfOverTables | Mapping[Hashable, float], *,
                alpha: float = 1e-3, checks: int = 1) -> GofReport:
    """Pearson chi-square of observed counts against an expected pmf.

    Cells whose expected count is below 5 are pooled into one tail cell
    (grown from the smallest remaining cell until it reaches 5).  A positive
    count on a zero-probability cell gives an infinite statistic.  The test
    passes when ``p >= alpha / checks`` (Bonferroni over ``checks`` tests).
    """
    probs = expected.as_dict() if isinstance(expected, PmfOverTables) else dict(expected)
    total = int(sum(observed.values()))
    if total <= 0:
        raise EmptySample("no observations to compare")
    keys = list(probs) + [k for k in observed if k not in probs]
    tv = 0.5 * sum(abs(observed.get(k, 0) / total - probs.get(k, 0.0)) for k in keys)
    threshold = alpha / checks

    stray = [k for k in keys if probs.get(k, 0.0) <= 0.0 and observed.get(k, 0) > 0]
    if stray:
        cells = tuple(GofCell(_label(k), int(observed.get(k, 0)), total * probs.get(k, 0.0)) for k in keys)
        return GofReport(math.inf, max(len(cells) - 1, 0), 0.0, tv, cells, threshold)

    main = [(k, int(observed.get(k, 0)), total * probs[k]) for k in keys if probs.get(k, 0.0) > 0.0]
    main.sort(key=lambda c: c[2], reverse=True)
    tail_o, tail_e, tail_n = 0, 0.0, 0
    while main and main[-1][2] < MIN_EXPECTED:
        _, o, e = main.pop()
        tail_o, tail_e, tail_n = tail_o + o, tail_e + e, tail_n + 1
    while tail_n and tail_e < MIN_EXPECTED and main:
        _, o, e = main.pop()
        tail_o, tail_e, tail_n = tail_o + o, tail_e + e, tail_n + 1
    cells = [GofCell(_label(k), o, e) for k, o, e in main]
    if tail_n:
        cells.append(GofCell(f"<pooled {tail_n} cells>", tail_o, tail_e))
    df = len(cells) - 1
    if df <= 0:
        return GofReport(0.0, 0, 1.0, tv, tuple(cells), threshold)
    stat = float(sum((c.observed - c.expected) ** 2 / c.expected for c in cells))
    return GofReport(stat, df, float(chi2.sf(stat, df)), tv, tuple(cells), threshold)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def empirical_terminal_pmf(model: ModelInputs, runs: int, seed: int, *, alternative: bool = False,
                           workers: int = 1) -> tuple[PmfOverTables, dict[PairTypeMatrix, int]]:
    """Normalized terminal-pattern counts over all tables of the population."""
    if runs < 1:
        raise ValueError(f"runs must be at least 1, got {runs}")
    pats = simulate_patterns(model.pop, model.roster, model.prefs, model.spec, seed, runs,
                             alternative=alternative, order=model.order, workers=workers)
    rows, counts = np.unique(pats, axis=0, return_counts=True)
    k = model.pop.k
    observed = {PairTypeMatrix(r.tolist(), k): int(c) for r, c in zip(rows, counts)}
    tables = enumerate_tables(model.pop)
    pmf = PmfOverTables(tables, [observed.get(t, 0) / runs for t in tables], tol=1e-9)
    return pmf, observed


def empirical_pairlists(model: ModelInputs, runs: int, seed: int, *,
                        alternative: bool = False) -> dict[tuple[int, ...], int]:
    """Counts of terminal pair-lists, keyed by the permutation female -> male."""
    perms = simulate_pairlists(model.pop, model.roster, model.prefs, model.spec, seed, runs,
                               alternative=alternative, order=model.order)
    rows, counts = np.unique(perms, axis=0, return_counts=True)
    return {tuple(r.tolist()): int(c) for r, c in zip(rows, counts)}


def mc_pattern_moments(model: ModelInputs, runs: int, seed: int, *, alternative: bool = False,
                       workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean of Q(T) and its standard error, cell by cell."""
    if runs < 2:
        raise ValueError(f"runs must be at least 2, got {runs}")
    pats = simulate_patterns(model.pop, model.roster, model.prefs, model.spec, seed, runs,
                             alternative=alternative, order=model.order, workers=workers).astype(float)
    k = model.pop.k
    mean = pats.mean(axis=0).reshape(k, k)
    se = (pats.std(axis=0, ddof=1) / math.sqrt(runs)).reshape(k, k)
    return mean, se


def mc_expectation(model: ModelInputs, statistic: Callable[[SimulationRecord], float], runs: int, seed: int, *,
                   alternative: bool = False) -> McEstimate:
    """Mean and standard error of ``statistic`` over ``runs`` replications.

    Replication ``r`` is simulated with seed ``derive_seed(seed, r)``.
    """
    if runs < 2:
        raise ValueError(f"runs must be at least 2, got {runs}")
    sim = run_sem_alternative if alternative else run_sem
    vals = np.empty(runs)
    for r in range(runs):
        rec = sim(model.pop, model.roster, model.prefs, model.spec, derive_seed(seed, r), order=model.order)
        vals[r] = statistic(rec)
    return McEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(runs)), runs, seed)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------


def _check_oracle_size(n: int) -> None:
    if n > ORACLE_MAX_N:
        raise TooLargeForOracle(f"n={n} needs {math.factorial(n)} permutations; the oracle stops at n={ORACLE_MAX_N}")


def permutation_oracle_exact(pop: PopulationCounts, roster: AnimalRoster | None = None) -> dict[PairTypeMatrix, Fraction]:
    """Terminal pattern law under uniform pair-lists, as exact fractions."""
    _check_oracle_size(pop.n)
    roster = roster or AnimalRoster.from_population(pop)
    roster.check(pop)
    weight = Fraction(1, math.factorial(pop.n))
    out: dict[PairTypeMatrix, Fraction] = {}
    for sigma in permutations(range(pop.n)):
        m = pattern_from_pairlist(PairList.from_permutation(sigma), roster)
        out[m] = out.get(m, Fraction(0)) + weight
    return out


def permutation_oracle_definite(pop: PopulationCounts, roster: AnimalRoster | None = None,
                                schedule: FiringSchedule | None = None, t: float | None = None):
    """Brute-force terminal pattern law by enumerating all ``n!`` pair-lists.

    With ``schedule`` and ``t`` also returns the law of the pattern at ``t``:
    a pair of the terminal list is present iff one of its members has fired
    by ``t``.  The result is then ``(terminal, at_t)``.
    """
    _check_oracle_size(pop.n)
    roster = roster or AnimalRoster.from_population(pop)
    roster.check(pop)
    exact = permutation_oracle_exact(pop, roster)
    tables = enumerate_tables(pop)
    terminal = PmfOverTables(tables, [float(exact.get(m, 0)) for m in tables])
    if t is None:
        return terminal
    if schedule is None:
        raise ValueError("the time-t law needs a firing schedule")
    n = pop.n

    def first(animal):
        ts = schedule.of(animal)
        return ts[0] if ts else math.inf

    fem = [first(Animal("F", a)) for a in range(n)]
    mal = [first(Animal("M", b)) for b in range(n)]
    weight = Fraction(1, math.factorial(n))
    at_t: dict[PairTypeMatrix, Fraction] = {}
    for sigma in permutations(range(n)):
        kept = PairList((a, b) for a, b in enumerate(sigma) if min(fem[a], mal[b]) <= t)
        m = pattern_from_pairlist(kept, roster)
        at_t[m] = at_t.get(m, Fraction(0)) + weight
    states = enumerate_states(pop)
    return terminal, PmfOverTables(states, [float(at_t.get(m, 0)) for m in states])


def covering_collection_probability(singles: int, size: int) -> Fraction:
    """Probability of one particular admissible collection of ``size``
    temporary pairs covering the firers, with ``singles`` singles per sex."""
    if not 0 <= size <= singles:
        raise ValueError("collection size must lie in 0..singles")
    return Fraction(math.factorial(singles - size), math.factorial(singles))


__all__ = [
    "GofCell",
    "GofReport",
    "McEstimate",
    "ModelInputs",
    "covering_collection_probability",
    "empirical_pairlists",
    "empirical_terminal_pmf",
    "gof_compare",
    "mc_expectation",
    "mc_pattern_moments",
    "permutation_oracle_definite",
    "permutation_oracle_exact",
]
