"""Markov-chain view of the pair-type process for arbitrary EM laws.

Under Poisson firing the pair-type matrix is a continuous-time chain that
adds one type-ij pair at rate ``pi_ij (x_i - m_i.)(y_j - m_.j) / (n - m_tot)``.
Under Bernoulli firing it is a discrete-time chain whose one-step increment
depends only on the residual (still single) population.

Everything here works on the finite lattice of states and is exact up to
floating point; the population recursions are memoized on residual counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import MutableMapping

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .core import (
    EMLaw,
    Flavor,
    PairTypeMatrix,
    PopulationCounts,
    enumerate_states,
    enumerate_tables,
)
from .errors import DegenerateKernel, InvalidHorizon, InvalidLaw
from .exact import PmfOverTables

UNIFORMIZATION_TAIL = 1e-13


def _require(law: EMLaw, flavor: Flavor, pop: PopulationCounts) -> None:
    if law.flavor is not flavor:
        raise InvalidLaw(f"expected a {flavor.value} law, got {law.flavor.value}")
    if law.k != pop.k:
        raise InvalidLaw(f"law is {law.k}x{law.k}, population has {pop.k} types")


def _sorted_states(pop: PopulationCounts) -> list[PairTypeMatrix]:
    # ascending m_tot, lexicographic within a level: every transition moves forward
    return sorted(enumerate_states(pop), key=lambda m: m.total)


@dataclass(frozen=True, eq=False)
class _ChainMatrix:
    states: tuple[PairTypeMatrix, ...]
    index: dict
    matrix: sparse.csr_matrix

    def entry(self, a: PairTypeMatrix, b: PairTypeMatrix) -> float:
        return float(self.matrix[self.index[a], self.index[b]])

    def row(self, m: PairTypeMatrix) -> dict[PairTypeMatrix, float]:
        r = self.matrix.getrow(self.index[m])
        return {self.states[j]: float(v) for j, v in zip(r.indices, r.data) if v != 0.0}

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


class GeneratorMatrix(_ChainMatrix):
    """Infinitesimal generator; the diagonal is minus the off-diagonal row sum."""

    def exit_rate(self, m: PairTypeMatrix) -> float:
        return -self.entry(m, m)


class KernelMatrix(_ChainMatrix):
    """One-step transition probabilities."""


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------


def _poisson_rates(pop: PopulationCounts, pi: np.ndarray) -> dict[tuple[int, int], float]:
    """Rates out of the zero state of ``pop`` (so of any state with residual ``pop``)."""
    n = pop.n
    if n == 0:
        return {}
    k = pop.k
    return {
        (i, j): pi[i, j] * pop.x[i] * pop.y[j] / n
        for i in range(k)
        for j in range(k)
        if pop.x[i] and pop.y[j]
    }


def generator_poisson(pop: PopulationCounts, law: EMLaw) -> GeneratorMatrix:
    """Generator of the pair-type chain under Poisson firing."""
    _require(law, Flavor.POISSON, pop)
    states = _sorted_states(pop)
    index = {m: s for s, m in enumerate(states)}
    k = pop.k
    rows, cols, vals = [], [], []
    for s, m in enumerate(states):
        out = 0.0
        for (i, j), r in _poisson_rates(pop.residual(m), law.pi).items():
            rows.append(s)
            cols.append(index[m + PairTypeMatrix.unit(k, i, j)])
            vals.append(r)
            out += r
        rows.append(s)
        cols.append(s)
        vals.append(-out)
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return GeneratorMatrix(tuple(states), index, mat)


# ---------------------------------------------------------------------------
# Bernoulli
# ---------------------------------------------------------------------------


def _log_fact(m: int) -> float:
    return math.lgamma(m + 1)


def bernoulli_increment_law(res: PopulationCounts, pi: np.ndarray) -> dict[PairTypeMatrix, float]:
    """Law of the one-step increment ``D`` from any state with residual ``res``.

    For each residual table ``R`` (the permutation pattern of the singles)
    every ``D <= R`` is reached with weight
    ``C(res) prod pi^D (1 - pi)^(R - D) / (D! (R - D)!)``, where
    ``C(res) = prod x! prod y! / n!``.
    """
    k = res.k
    flat = pi.ravel()
    comp = 1.0 - flat
    logc = sum(_log_fact(a) for a in res.x) + sum(_log_fact(b) for b in res.y) - _log_fact(res.n)
    law: dict[tuple[int, ...], float] = {}
    for table in enumerate_tables(res):
        cells = table.cells
        per_cell = []
        for c, r in enumerate(cells):
            opts = []
            for d in range(r + 1):
                w = flat[c] ** d * comp[c] ** (r - d) / (math.factorial(d) * math.factorial(r - d))
                if w > 0.0 or r == 0:
                    opts.append((d, w))
            per_cell.append(opts)
        for combo in product(*per_cell):
            w = 1.0
            for _, v in combo:
                w *= v
            key = tuple(d for d, _ in combo)
            law[key] = law.get(key, 0.0) + w
    scale = math.exp(logc)
    return {PairTypeMatrix(key, k): w * scale for key, w in law.items()}


def kernel_bernoulli(pop: PopulationCounts, law: EMLaw) -> KernelMatrix:
    """Transition kernel of the pair-type chain under Bernoulli firing."""
    _require(law, Flavor.BERNOULLI, pop)
    states = _sorted_states(pop)
    index = {m: s for s, m in enumerate(states)}
    cache: dict[PopulationCounts, dict] = {}
    rows, cols, vals = [], [], []
    for s, m in enumerate(states):
        res = pop.residual(m)
        if res.n == 0:
            rows.append(s)
            cols.append(s)
            vals.append(1.0)
            continue
        inc = cache.get(res)
        if inc is None:
            inc = cache[res] = bernoulli_increment_law(res, law.pi)
        for d, p in inc.items():
            rows.append(s)
            cols.append(index[m + d])
            vals.append(p)
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return KernelMatrix(tuple(states), index, mat)


# ---------------------------------------------------------------------------
# transient law
# ---------------------------------------------------------------------------


def transient_distribution(pop: PopulationCounts, law: EMLaw, t: float) -> PmfOverTables:
    """Law of Q(t) started from the zero matrix.

    Poisson: uniformization, keeping Poisson weights until the neglected tail
    is below ``UNIFORMIZATION_TAIL``.  Bernoulli: ``t`` kernel steps.
    """
    if not t >= 0:
        raise InvalidHorizon(f"t must be nonnegative, got {t}")
    if law.flavor is Flavor.POISSON:
        gen = generator_poisson(pop, law)
        states = gen.states
        v = np.zeros(len(states))
        v[0] = 1.0
        rate = float(max(-gen.matrix.diagonal().min(), 0.0))
        if t == 0 or rate == 0.0:
            return PmfOverTables(states, v)
        mu = rate * t
        kmax = int(poisson.isf(UNIFORMIZATION_TAIL, mu)) + 1
        weights = poisson.pmf(np.arange(kmax + 1), mu)
        step = (sparse.identity(len(states), format="csr") + gen.matrix / rate).T.tocsr()
        acc = weights[0] * v
        for w in weights[1:]:
            v = step @ v
            acc += w * v
        return PmfOverTables(states, acc / weights.sum())
    if t != int(t):
        raise InvalidHorizon(f"Bernoulli time must be an integer, got {t}")
    ker = kernel_bernoulli(pop, law)
    step = ker.matrix.T.tocsr()
    v = np.zeros(len(ker.states))
    v[0] = 1.0
    for _ in range(int(t)):
        v = step @ v
    return PmfOverTables(ker.states, v, tol=1e-10)


# ---------------------------------------------------------------------------
# terminal expectations
# ---------------------------------------------------------------------------


def _bind_memo(memo: MutableMapping | None, law: EMLaw) -> MutableMapping:
    if memo is None:
        return {}
    tag = ("law", law.flavor.value, law.pi.tobytes())
    owner = memo.setdefault("__law__", tag)
    if owner != tag:
        raise ValueError("memo was filled under a different EM law")
    return memo


def terminal_expectation_poisson(pop: PopulationCounts, law: EMLaw, memo: MutableMapping | None = None) -> np.ndarray:
    """``u*_ij = E[Q_ij(T)]`` from the first-step recursion of the jump chain.

    ``memo`` may be shared across populations evaluated under the same law.
    """
    _require(law, Flavor.POISSON, pop)
    memo = _bind_memo(memo, law)
    pi = law.pi
    k = pop.k

    def u(x, y):
        key = (x, y)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if sum(x) == 0:
            out = np.zeros((k, k))
        else:
            out = np.zeros((k, k))
            z = 0.0
            for i in range(k):
                if not x[i]:
                    continue
                for j in range(k):
                    if not y[j]:
                        continue
                    w = pi[i, j] * x[i] * y[j]
                    z += w
                    sub = u(x[:i] + (x[i] - 1,) + x[i + 1:], y[:j] + (y[j] - 1,) + y[j + 1:])
                    out += w * sub
                    out[i, j] += w
            out /= z
        out.setflags(write=False)
        memo[key] = out
        return out

    return u(pop.x, pop.y).copy()


def terminal_expectation_bernoulli(pop: PopulationCounts, law: EMLaw, memo: MutableMapping | None = None) -> np.ndarray:
    """``u*_ij`` from the recursion over the first non-trivial step.

    Conditioning out the self-loop at the zero state of each residual
    population gives weights ``rho(0, D) / (1 - rho(0, 0))`` for ``D != 0``.
    """
    _require(law, Flavor.BERNOULLI, pop)
    memo = _bind_memo(memo, law)
    k = pop.k

    def u(res):
        key = (res.x, res.y)
        hit = memo.get(key)
        if hit is not None:
            return hit
        out = np.zeros((k, k))
        if res.n:
            inc = bernoulli_increment_law(res, law.pi)
            zero = PairTypeMatrix.zeros(k)
            leave = 1.0 - inc.get(zero, 0.0)
            if not leave > 0.0:
                raise DegenerateKernel(f"no pair can ever form from residual population {res}")
            for d, p in inc.items():
                if d == zero or p == 0.0:
                    continue
                out += (p / leave) * (u(res.residual(d)) + d.array)
        out.setflags(write=False)
        memo[key] = out
        return out

    return u(pop).copy()


def terminal_expectation(pop: PopulationCounts, law: EMLaw, memo: MutableMapping | None = None) -> np.ndarray:
    if law.flavor is Flavor.POISSON:
        return terminal_expectation_poisson(pop, law, memo)
    return terminal_expectation_bernoulli(pop, law, memo)


# ---------------------------------------------------------------------------
# terminal law
# ---------------------------------------------------------------------------


def terminal_pmf_absorbing(pop: PopulationCounts, law: EMLaw) -> PmfOverTables:
    """Exact law of Q(T) for any EM law, by pushing mass through the lattice.

    States are visited in ascending ``m_tot`` so every state's mass is final
    before it moves on.  Poisson uses jump probabilities proportional to the
    generator rates; Bernoulli uses the kernel conditioned on leaving.
    """
    if law.k != pop.k:
        raise InvalidLaw(f"law is {law.k}x{law.k}, population has {pop.k} types")
    states = _sorted_states(pop)
    k = pop.k
    zero = PairTypeMatrix.zeros(k)
    mass: dict[PairTypeMatrix, float] = {zero: 1.0}
    cache: dict[PopulationCounts, list] = {}
    for m in states:
        p = mass.get(m, 0.0)
        res = pop.residual(m)
        if p == 0.0 or res.n == 0:
            continue
        moves = cache.get(res)
        if moves is None:
            if law.flavor is Flavor.POISSON:
                rates = _poisson_rates(res, law.pi)
                z = sum(rates.values())
                moves = [(PairTypeMatrix.unit(k, i, j), r / z) for (i, j), r in rates.items()]
            else:
                inc = bernoulli_increment_law(res, law.pi)
                leave = 1.0 - inc.get(zero, 0.0)
                if not leave > 0.0:
                    raise DegenerateKernel(f"no pair can ever form from residual population {res}")
                moves = [(d, w / leave) for d, w in inc.items() if d != zero and w > 0.0]
            cache[res] = moves
        for d, w in moves:
            nxt = m + d
            mass[nxt] = mass.get(nxt, 0.0) + p * w
    tables = enumerate_tables(pop)
    return PmfOverTables(tables, [mass.get(t, 0.0) for t in tables], tol=1e-10)


__all__ = [
    "GeneratorMatrix",
    "KernelMatrix",
    "bernoulli_increment_law",
    "generator_poisson",
    "kernel_bernoulli",
    "terminal_expectation",
    "terminal_expectation_bernoulli",
    "terminal_expectation_poisson",
    "terminal_pmf_absorbing",
    "transient_distribution",
]
