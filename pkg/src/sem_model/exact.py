"""Closed-form laws of the pair-type process under definite mating.

With every encounter ending in a mating, the terminal pair-list is a uniform
permutation, so the terminal pattern is multiple hypergeometric.  At a fixed
time ``t`` the pattern is a thinning of that table: a type-ij pair is already
formed with probability ``lambda_ij(t) = F_i(t) + G_j(t) - F_i(t) G_j(t)``,
where ``F_i``/``G_j`` are the first-firing CDFs.  Fine-balanced EM laws reduce
to this case with ``lambda_ij(t) = 1 - exp(-pi_ij t)`` (Poisson) or
``1 - (1 - pi_ij)^t`` (Bernoulli).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .classify import check_fine_balance
from .core import (
    EMLaw,
    Flavor,
    PairTypeMatrix,
    PopulationCounts,
    enumerate_completions,
    enumerate_states,
    enumerate_tables,
)
from .errors import FineBalanceViolated, InvalidHorizon, NotATable

PMF_SUM_TOL = 1e-12


@lru_cache(maxsize=4096)
def _lfact(m: int) -> float:
    return math.lgamma(m + 1)


def _log_prefactor(pop: PopulationCounts, cells: Iterable[int]) -> float:
    return (
        sum(_lfact(a) for a in pop.x)
        + sum(_lfact(b) for b in pop.y)
        - _lfact(pop.n)
        - sum(_lfact(m) for m in cells)
    )


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FirstFiringCDF:
    """First-firing CDFs per female type (``F``) and male type (``G``).

    ``lattice`` marks integer-time processes; evaluating them at a
    non-integer time is refused rather than silently floored.
    """

    F: tuple[Callable[[float], float], ...]
    G: tuple[Callable[[float], float], ...]
    lattice: bool = False

    def __post_init__(self):
        object.__setattr__(self, "F", tuple(self.F))
        object.__setattr__(self, "G", tuple(self.G))
        if len(self.F) != len(self.G):
            raise ValueError("F and G must cover the same number of types")

    @property
    def k(self) -> int:
        return len(self.F)

    def _check_t(self, t: float) -> None:
        if not t >= 0:
            raise InvalidHorizon(f"t must be nonnegative, got {t}")
        if self.lattice and t != int(t):
            raise InvalidHorizon(f"integer-time CDFs need integer t, got {t}")

    @classmethod
    def poisson_cdfs(cls, alpha: Sequence[float], beta: Sequence[float]) -> "FirstFiringCDF":
        """Exponential first firings: ``1 - exp(-rate * t)``."""
        return cls(
            tuple(_exp_cdf(float(a)) for a in alpha),
            tuple(_exp_cdf(float(b)) for b in beta),
        )

    @classmethod
    def bernoulli_cdfs(cls, alpha: Sequence[float], beta: Sequence[float]) -> "FirstFiringCDF":
        """Geometric first firings on ``1, 2, ...``: ``1 - (1 - p)^t``."""
        return cls(
            tuple(_geom_cdf(float(a)) for a in alpha),
            tuple(_geom_cdf(float(b)) for b in beta),
            lattice=True,
        )


def _exp_cdf(rate):
    return lambda t: -math.expm1(-rate * t) if t > 0 else 0.0


def _geom_cdf(p):
    return lambda t: 1.0 - (1.0 - p) ** int(t) if t > 0 else 0.0


class PmfOverTables:
    """A probability mass function on pair-type matrices.

    Masses must be nonnegative and sum to one within ``tol``.
    """

    __slots__ = ("support", "probabilities", "_index")

    def __init__(self, support: Sequence[PairTypeMatrix], probabilities: Sequence[float], *, tol: float = PMF_SUM_TOL):
        support = tuple(support)
        probs = np.asarray(probabilities, dtype=float)
        if probs.shape != (len(support),):
            raise ValueError("support and probabilities differ in length")
        if np.any(probs < -tol):
            raise ValueError(f"negative mass {probs.min()}")
        total = probs.sum()
        if abs(total - 1.0) > tol:
            raise ValueError(f"masses sum to {total!r}, not 1 within {tol}")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        self.support = support
        self.probabilities = probs
        self._index = {m: i for i, m in enumerate(support)}
        if len(self._index) != len(support):
            raise ValueError("support has repeated matrices")

    def prob(self, m: PairTypeMatrix) -> float:
        i = self._index.get(m)
        return 0.0 if i is None else float(self.probabilities[i])

    def items(self):
        return zip(self.support, self.probabilities.tolist())

    def as_dict(self) -> dict[PairTypeMatrix, float]:
        return dict(self.items())

    def mean(self) -> np.ndarray:
        k = self.support[0].k
        acc = np.zeros((k, k))
        for m, p in self.items():
            acc += p * m.array
        return acc

    def tv(self, other: "PmfOverTables | Mapping[PairTypeMatrix, float]") -> float:
        """Total-variation distance."""
        a = self.as_dict()
        b = other.as_dict() if isinstance(other, PmfOverTables) else dict(other)
        return 0.5 * sum(abs(a.get(m, 0.0) - b.get(m, 0.0)) for m in set(a) | set(b))

    def __len__(self) -> int:
        return len(self.support)

    def __repr__(self) -> str:
        body = ", ".join(f"{m.rows()}: {p:.6g}" for m, p in self.items())
        return f"PmfOverTables({{{body}}})"


# ---------------------------------------------------------------------------
# terminal law
# ---------------------------------------------------------------------------


def terminal_pmf_definite(pop: PopulationCounts, m: PairTypeMatrix) -> float:
    """Multiple hypergeometric mass of table ``m``.

    ``prod x_i! prod y_j! / (n! prod m_ij!)``, evaluated in log space.
    """
    if not m.in_tables(pop):
        raise NotATable(f"{m!r} does not have margins x={pop.x}, y={pop.y}")
    return math.exp(_log_prefactor(pop, m.cells))


def terminal_distribution_definite(pop: PopulationCounts) -> PmfOverTables:
    tables = enumerate_tables(pop)
    return PmfOverTables(tables, [terminal_pmf_definite(pop, m) for m in tables], tol=1e-10)


# ---------------------------------------------------------------------------
# time-t law
# ---------------------------------------------------------------------------


def lambda_ij(cdfs: FirstFiringCDF, i: int, j: int, t: float) -> float:
    """Probability that a given type-ij couple has had a first firing by ``t``."""
    cdfs._check_t(t)
    f = cdfs.F[i](t)
    g = cdfs.G[j](t)
    return 1.0 - (1.0 - f) * (1.0 - g)


def lambda_matrix(cdfs: FirstFiringCDF, t: float) -> np.ndarray:
    k = cdfs.k
    return np.array([[lambda_ij(cdfs, i, j, t) for j in range(k)] for i in range(k)])


def _qt_pmf_from_lambda(pop: PopulationCounts, lam: np.ndarray, m: PairTypeMatrix) -> float:
    if not m.in_states(pop):
        return 0.0
    lam = lam.ravel()
    rest = 1.0 - lam
    total = 0.0
    for full in enumerate_completions(m, pop):
        term = 1.0
        for c, (a, b) in enumerate(zip(m.cells, full.cells)):
            d = b - a
            term *= lam[c] ** a * rest[c] ** d / math.factorial(d)
            if term == 0.0:
                break
        total += term
    return math.exp(_log_prefactor(pop, m.cells)) * total


def qt_pmf_definite(pop: PopulationCounts, cdfs: FirstFiringCDF, t: float, m: PairTypeMatrix) -> float:
    """P(Q(t) = m) under definite mating.

    Sums over every table that dominates ``m``: each pair of the uniform
    terminal pair-list is present at ``t`` independently with probability
    ``lambda_ij(t)``.  Matrices outside the state space get mass 0.
    """
    if cdfs.k != pop.k:
        raise ValueError(f"CDFs cover {cdfs.k} types, population has {pop.k}")
    return _qt_pmf_from_lambda(pop, lambda_matrix(cdfs, t), m)


def qt_distribution_definite(pop: PopulationCounts, cdfs: FirstFiringCDF, t: float) -> PmfOverTables:
    lam = lambda_matrix(cdfs, t)
    states = enumerate_states(pop)
    return PmfOverTables(states, [_qt_pmf_from_lambda(pop, lam, m) for m in states], tol=1e-10)


def expected_qt_definite(pop: PopulationCounts, cdfs: FirstFiringCDF, t: float, i: int, j: int) -> float:
    """E[Q_ij(t)] = x_i y_j lambda_ij(t) / n (0 for the empty population)."""
    if pop.n == 0:
        return 0.0
    return pop.x[i] * pop.y[j] * lambda_ij(cdfs, i, j, t) / pop.n


def finebalanced_lambda(law: EMLaw, t: float, *, tol: float = 1e-9) -> np.ndarray:
    """``lambda_ij(t)`` of a fine-balanced law, after checking fine balance."""
    if not check_fine_balance(law, tol):
        raise FineBalanceViolated(f"{law!r} is not fine-balanced at tolerance {tol}")
    if not t >= 0:
        raise InvalidHorizon(f"t must be nonnegative, got {t}")
    if law.flavor is Flavor.POISSON:
        return -np.expm1(-law.pi * t)
    if t != int(t):
        raise InvalidHorizon(f"Bernoulli time must be an integer, got {t}")
    return 1.0 - (1.0 - law.pi) ** int(t)


def qt_pmf_finebalanced(pop: PopulationCounts, law: EMLaw, t: float, m: PairTypeMatrix, *, tol: float = 1e-9) -> float:
    """P(Q(t) = m) for a fine-balanced EM law.

    Raises :class:`FineBalanceViolated` off the fine-balance manifold, where
    this formula does not describe the process.
    """
    if law.k != pop.k:
        raise ValueError(f"law is {law.k}x{law.k}, population has {pop.k} types")
    return _qt_pmf_from_lambda(pop, finebalanced_lambda(law, t, tol=tol), m)


def qt_distribution_finebalanced(pop: PopulationCounts, law: EMLaw, t: float, *, tol: float = 1e-9) -> PmfOverTables:
    lam = finebalanced_lambda(law, t, tol=tol)
    states = enumerate_states(pop)
    return PmfOverTables(states, [_qt_pmf_from_lambda(pop, lam, m) for m in states], tol=1e-10)


def expected_qt_finebalanced(pop: PopulationCounts, law: EMLaw, t: float, *, tol: float = 1e-9) -> np.ndarray:
    if pop.n == 0:
        return np.zeros((pop.k, pop.k))
    lam = finebalanced_lambda(law, t, tol=tol)
    return np.outer(pop.x, pop.y) * lam / pop.n


__all__ = [
    "FirstFiringCDF",
    "PmfOverTables",
    "expected_qt_definite",
    "expected_qt_finebalanced",
    "finebalanced_lambda",
    "lambda_ij",
    "lambda_matrix",
    "qt_distribution_definite",
    "qt_distribution_finebalanced",
    "qt_pmf_definite",
    "qt_pmf_finebalanced",
    "terminal_distribution_definite",
    "terminal_pmf_definite",
]
