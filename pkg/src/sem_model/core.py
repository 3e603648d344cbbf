"""Domain types, validation and contingency-table state spaces.

Types are indexed from 0 throughout the Python API: a k-type population has
female counts ``x[0..k-1]`` and male counts ``y[0..k-1]``.  Animals are
labelled ``0..n-1`` within each sex.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    EmptyPopulation,
    InvalidIndex,
    InvalidLaw,
    InvalidPopulation,
    InvalidPreferences,
    InvalidRates,
    StateSpaceTooLarge,
    UnequalTotals,
)

DEFAULT_STATE_CAP = 10**7


class Flavor(str, enum.Enum):
    POISSON = "poisson"
    BERNOULLI = "bernoulli"


def state_cap() -> int:
    """Maximum number of matrices any enumeration may produce.

    ``SEM_STATE_CAP`` in the environment overrides the default of 10**7.
    """
    raw = os.environ.get("SEM_STATE_CAP")
    if raw is None or raw.strip() == "":
        return DEFAULT_STATE_CAP
    cap = int(raw)
    if cap < 1:
        raise ValueError(f"SEM_STATE_CAP must be positive, got {raw!r}")
    return cap


# ---------------------------------------------------------------------------
# populations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopulationCounts:
    x: tuple[int, ...]
    y: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return sum(self.x)

    def residual(self, m: "PairTypeMatrix") -> "PopulationCounts":
        """Counts of still-single animals once the pairs in ``m`` are formed."""
        return PopulationCounts(
            tuple(a - r for a, r in zip(self.x, m.row_sums)),
            tuple(b - c for b, c in zip(self.y, m.col_sums)),
        )


def validate_population(x: Sequence[int], y: Sequence[int], *, require_nonempty: bool = False) -> PopulationCounts:
    """Check per-type headcounts and return them as a :class:`PopulationCounts`.

    Raises :class:`UnequalTotals` when ``sum(x) != sum(y)`` and, if
    ``require_nonempty`` is set, :class:`EmptyPopulation` when ``n == 0``.
    """
    x = tuple(x)
    y = tuple(y)
    if len(x) != len(y):
        raise InvalidPopulation(f"x has {len(x)} types but y has {len(y)}")
    if len(x) < 2:
        raise InvalidPopulation(f"need at least 2 types, got k={len(x)}")
    for name, seq in (("x", x), ("y", y)):
        for v in seq:
            if isinstance(v, bool) or int(v) != v:
                raise InvalidPopulation(f"{name} entries must be integers, got {v!r}")
            if v < 0:
                raise InvalidPopulation(f"{name} entries must be nonnegative, got {v!r}")
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    if sum(x) != sum(y):
        raise UnequalTotals(
            f"females and males must be equally many: sum(x)={sum(x)} != sum(y)={sum(y)}"
        )
    pop = PopulationCounts(x, y)
    if require_nonempty and pop.n == 0:
        raise EmptyPopulation("population is empty (n = 0)")
    return pop


# ---------------------------------------------------------------------------
# pair-type matrices
# ---------------------------------------------------------------------------


class PairTypeMatrix:
    """Immutable k x k matrix of nonnegative integers with cached margins.

    ``cells`` is the row-major tuple of entries; it doubles as the hash key.
    ``a <= b`` is the entrywise partial order.
    """

    __slots__ = ("cells", "k", "_rows", "_cols")

    def __init__(self, cells: Iterable[int], k: int | None = None):
        cells = tuple(int(c) for c in cells)
        if k is None:
            k = math.isqrt(len(cells))
        if k * k != len(cells):
            raise ValueError(f"{len(cells)} cells do not form a square matrix")
        if any(c < 0 for c in cells):
            raise ValueError("pair-type matrices have nonnegative entries")
        self.cells = cells
        self.k = k
        self._rows = None
        self._cols = None

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "PairTypeMatrix":
        k = len(rows)
        if any(len(r) != k for r in rows):
            raise ValueError("matrix must be square")
        return cls([v for r in rows for v in r], k)

    @classmethod
    def zeros(cls, k: int) -> "PairTypeMatrix":
        return cls((0,) * (k * k), k)

    @classmethod
    def unit(cls, k: int, i: int, j: int) -> "PairTypeMatrix":
        """The matrix with a single 1 at ``(i, j)``."""
        cells = [0] * (k * k)
        cells[i * k + j] = 1
        return cls(cells, k)

    def __getitem__(self, ij: tuple[int, int]) -> int:
        i, j = ij
        return self.cells[i * self.k + j]

    @property
    def row_sums(self) -> tuple[int, ...]:
        if self._rows is None:
            k = self.k
            self._rows = tuple(sum(self.cells[i * k:(i + 1) * k]) for i in range(k))
        return self._rows

    @property
    def col_sums(self) -> tuple[int, ...]:
        if self._cols is None:
            k = self.k
            self._cols = tuple(sum(self.cells[j::k]) for j in range(k))
        return self._cols

    @property
    def total(self) -> int:
        return sum(self.cells)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.cells, dtype=np.int64).reshape(self.k, self.k)

    def rows(self) -> list[list[int]]:
        k = self.k
        return [list(self.cells[i * k:(i + 1) * k]) for i in range(k)]

    def in_states(self, pop: PopulationCounts) -> bool:
        """Membership in the state space: margins bounded by the population."""
        return (
            self.k == pop.k
            and all(r <= a for r, a in zip(self.row_sums, pop.x))
            and all(c <= b for c, b in zip(self.col_sums, pop.y))
        )

    def in_tables(self, pop: PopulationCounts) -> bool:
        """Membership in the terminal set: margins equal to the population."""
        return self.k == pop.k and self.row_sums == pop.x and self.col_sums == pop.y

    def __le__(self, other: "PairTypeMatrix") -> bool:
        return self.k == other.k and all(a <= b for a, b in zip(self.cells, other.cells))

    def __ge__(self, other: "PairTypeMatrix") -> bool:
        return other <= self

    def __add__(self, other: "PairTypeMatrix") -> "PairTypeMatrix":
        return PairTypeMatrix([a + b for a, b in zip(self.cells, other.cells)], self.k)

    def __sub__(self, other: "PairTypeMatrix") -> "PairTypeMatrix":
        return PairTypeMatrix([a - b for a, b in zip(self.cells, other.cells)], self.k)

    def __eq__(self, other) -> bool:
        if isinstance(other, PairTypeMatrix):
            return self.cells == other.cells
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.cells)

    def __repr__(self) -> str:
        return f"PairTypeMatrix({self.rows()})"


def _iter_cells(x: Sequence[int], y: Sequence[int], exact: bool) -> Iterator[tuple[int, ...]]:
    """Row-major lexicographic walk over matrices with bounded/equal margins."""
    k = len(x)
    rrem = list(x)
    crem = list(y)
    cells = [0] * (k * k)

    def walk(pos):
        if pos == k * k:
            yield tuple(cells)
            return
        i, j = divmod(pos, k)
        hi = min(rrem[i], crem[j])
        if exact:
            if j == k - 1:
                lo = hi = rrem[i]
                if lo > crem[j]:
                    return
            else:
                lo = max(0, rrem[i] - sum(crem[j + 1:]))
        else:
            lo = 0
        for v in range(lo, hi + 1):
            cells[pos] = v
            rrem[i] -= v
            crem[j] -= v
            yield from walk(pos + 1)
            rrem[i] += v
            crem[j] += v
        cells[pos] = 0

    if exact and sum(x) != sum(y):
        return
    yield from walk(0)


def _collect(it: Iterator[tuple[int, ...]], k: int, what: str) -> list[PairTypeMatrix]:
    cap = state_cap()
    out = []
    for cells in it:
        if len(out) >= cap:
            raise StateSpaceTooLarge(f"{what} exceeds the state-space cap of {cap}")
        out.append(PairTypeMatrix(cells, k))
    return out


def enumerate_tables(pop: PopulationCounts) -> list[PairTypeMatrix]:
    """All contingency tables whose row sums are ``x`` and column sums ``y``."""
    return _collect(_iter_cells(pop.x, pop.y, exact=True), pop.k, "table enumeration")


def enumerate_states(pop: PopulationCounts) -> list[PairTypeMatrix]:
    """All pair-type matrices with row sums <= ``x`` and column sums <= ``y``."""
    return _collect(_iter_cells(pop.x, pop.y, exact=False), pop.k, "state enumeration")


def enumerate_completions(m: PairTypeMatrix, pop: PopulationCounts) -> list[PairTypeMatrix]:
    """Tables of ``pop`` that dominate ``m`` entrywise.

    Every such table is ``m`` plus a table of the residual population, so the
    walk runs over the residual margins and keeps the lexicographic order.
    """
    if not m.in_states(pop):
        raise ValueError(f"{m!r} is not a state of population {pop}")
    res = pop.residual(m)
    return [m + d for d in enumerate_tables(res)]


# ---------------------------------------------------------------------------
# animals and pair lists
# ---------------------------------------------------------------------------


class Animal(NamedTuple):
    sex: str  # "F" or "M"
    index: int

    def __str__(self) -> str:
        return f"{self.sex}{self.index}"


@dataclass(frozen=True)
class AnimalRoster:
    """Type of every female and every male, indexed by label."""

    females: tuple[int, ...]
    males: tuple[int, ...]
    k: int

    @classmethod
    def from_population(cls, pop: PopulationCounts) -> "AnimalRoster":
        """Canonical roster: labels assigned in ascending type order."""
        females = tuple(i for i, c in enumerate(pop.x) for _ in range(c))
        males = tuple(j for j, c in enumerate(pop.y) for _ in range(c))
        return cls(females, males, pop.k)

    @classmethod
    def from_types(cls, females: Sequence[int], males: Sequence[int], k: int) -> "AnimalRoster":
        females = tuple(int(t) for t in females)
        males = tuple(int(t) for t in males)
        if len(females) != len(males):
            raise InvalidPopulation("roster needs equally many females and males")
        if any(not 0 <= t < k for t in females + males):
            raise InvalidPopulation(f"animal types must lie in 0..{k - 1}")
        return cls(females, males, k)

    @property
    def n(self) -> int:
        return len(self.females)

    def population(self) -> PopulationCounts:
        x = [0] * self.k
        y = [0] * self.k
        for t in self.females:
            x[t] += 1
        for t in self.males:
            y[t] += 1
        return PopulationCounts(tuple(x), tuple(y))

    def check(self, pop: PopulationCounts) -> None:
        if self.population() != pop:
            raise InvalidPopulation(f"roster counts {self.population()} do not match {pop}")

    def animals(self) -> list[Animal]:
        return [Animal("F", a) for a in range(self.n)] + [Animal("M", b) for b in range(self.n)]


@dataclass(frozen=True)
class PairList:
    """Unordered collection of (female label, male label) pairs."""

    pairs: frozenset

    def __init__(self, pairs: Iterable[tuple[int, int]] = ()):
        object.__setattr__(self, "pairs", frozenset((int(a), int(b)) for a, b in pairs))

    @classmethod
    def from_permutation(cls, sigma: Sequence[int]) -> "PairList":
        """Female ``a`` is paired with male ``sigma[a]``."""
        return cls(enumerate(sigma))

    def is_admissible(self) -> bool:
        females = [a for a, _ in self.pairs]
        males = [b for _, b in self.pairs]
        return len(set(females)) == len(females) and len(set(males)) == len(males)

    def as_permutation(self, n: int) -> tuple[int, ...]:
        if len(self.pairs) != n or not self.is_admissible():
            raise ValueError("only an admissible list of n pairs is a permutation")
        sigma = [0] * n
        for a, b in self.pairs:
            sigma[a] = b
        if sorted(sigma) != list(range(n)):
            raise ValueError("pair labels do not cover 0..n-1")
        return tuple(sigma)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def __or__(self, other: "PairList") -> "PairList":
        return PairList(self.pairs | other.pairs)


def pattern_from_pairlist(pairs: PairList, roster: AnimalRoster) -> PairTypeMatrix:
    """Count pairs by (female type, male type)."""
    if not pairs.is_admissible():
        raise ValueError("pair list is not admissible: an animal appears twice")
    k = roster.k
    cells = [0] * (k * k)
    n = roster.n
    for a, b in pairs.pairs:
        if not (0 <= a < n and 0 <= b < n):
            raise InvalidIndex(f"pair ({a}, {b}) is outside a roster of {n} animals per sex")
        cells[roster.females[a] * k + roster.males[b]] += 1
    return PairTypeMatrix(cells, k)


# ---------------------------------------------------------------------------
# preferences, rates and EM laws
# ---------------------------------------------------------------------------


def _square(a, name: str, exc) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise exc(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise exc(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PreferenceMatrix:
    p: np.ndarray

    def __init__(self, p):
        arr = _square(p, "preference matrix", InvalidPreferences)
        if np.any(arr <= 0) or np.any(arr > 1):
            raise InvalidPreferences("mating probabilities must lie in (0, 1]")
        object.__setattr__(self, "p", arr)

    @classmethod
    def ones(cls, k: int) -> "PreferenceMatrix":
        return cls(np.ones((k, k)))

    @property
    def k(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True, eq=False)
class RateVector:
    """Per-type firing intensities (Poisson) or success probabilities (Bernoulli)."""

    flavor: Flavor
    alpha: np.ndarray
    beta: np.ndarray

    def __init__(self, flavor, alpha, beta):
        flavor = Flavor(flavor)
        a = np.array(alpha, dtype=float)
        b = np.array(beta, dtype=float)
        if a.ndim != 1 or a.shape != b.shape:
            raise InvalidRates("alpha and beta must be vectors of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidRates("rates must be finite")
        if np.any(a < 0) or np.any(b < 0):
            raise InvalidRates("rates must be nonnegative")
        if flavor is Flavor.BERNOULLI and (np.any(a > 1) or np.any(b > 1)):
            raise InvalidRates("Bernoulli success probabilities must lie in [0, 1]")
        if np.any(a[:, None] + b[None, :] <= 0):
            i, j = np.argwhere(a[:, None] + b[None, :] <= 0)[0]
            raise InvalidRates(f"alpha[{i}] + beta[{j}] must be positive")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "flavor", flavor)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def k(self) -> int:
        return self.alpha.shape[0]


@dataclass(frozen=True, eq=False)
class EMLaw:
    """The k x k matrix that alone determines the law of the pair-type process."""

    flavor: Flavor
    pi: np.ndarray

    def __init__(self, flavor, pi):
        flavor = Flavor(flavor)
        arr = _square(pi, "EM law", InvalidLaw)
        if np.any(arr <= 0):
            raise InvalidLaw("EM law entries must be positive")
        if flavor is Flavor.BERNOULLI and np.any(arr > 1):
            raise InvalidLaw("Bernoulli EM law entries must lie in (0, 1]")
        object.__setattr__(self, "flavor", flavor)
        object.__setattr__(self, "pi", arr)

    @property
    def k(self) -> int:
        return self.pi.shape[0]

    def __repr__(self) -> str:
        return f"EMLaw({self.flavor.value}, {self.pi.tolist()})"


def em_law(prefs: PreferenceMatrix, rates: RateVector) -> EMLaw:
    """Combine preferences and firing rates into the EM law.

    Poisson: ``pi_ij = p_ij (alpha_i + beta_j)``.
    Bernoulli: ``pi_ij = p_ij (alpha_i + beta_j - alpha_i beta_j)``, the
    probability that a type-ij pair is touched by a firing in one step.
    """
    if prefs.k != rates.k:
        raise InvalidRates(f"preferences are {prefs.k}x{prefs.k} but rates have length {rates.k}")
    a = rates.alpha[:, None]
    b = rates.beta[None, :]
    if np.any(a + b <= 0):
        raise InvalidRates("alpha_i + beta_j must be positive for all i, j")
    if rates.flavor is Flavor.POISSON:
        pi = prefs.p * (a + b)
    else:
        pi = prefs.p * (a + b - a * b)
    return EMLaw(rates.flavor, pi)


def realize_law(law: EMLaw) -> tuple[PreferenceMatrix, RateVector]:
    """Some (preferences, rates) pair whose EM law is ``law``.

    Only males fire (``alpha = 0``).  Poisson males of type j fire at rate
    ``max_i pi_ij`` and accept with ``pi_ij / max_i pi_ij``; Bernoulli males
    fire every step and accept with ``pi_ij``.
    """
    k = law.k
    if law.flavor is Flavor.POISSON:
        beta = law.pi.max(axis=0)
        p = np.minimum(law.pi / beta[None, :], 1.0)
    else:
        beta = np.ones(k)
        p = law.pi.copy()
    return PreferenceMatrix(p), RateVector(law.flavor, np.zeros(k), beta)
