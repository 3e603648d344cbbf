"""Stochastic simulation of encounter-mating pair formation.

Two mechanisms are provided.  :func:`run_sem` follows the encounter stage
literally: firers are processed in a fixed order and each one that is not yet
in a temporary pair draws a partner uniformly, without replacement, from the
remaining singles of the opposite sex.  :func:`run_sem_alternative` pairs all
singles by a uniform random permutation and keeps the pairs that contain at
least one firer.  Both then flip an independent mating coin with probability
``p_ij`` per temporary type-ij pair.

Firing times of memoryless flavors are drawn lazily, one per animal, so the
schedule never runs out.  Explicit schedules are consumed as given and raise
:class:`HorizonExhausted` if every remaining single has run out of firings.

The round loop is compiled with numba; the Python wrappers convert inputs to
flat arrays and rebuild :class:`SimulationRecord` objects from the output.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
from numba import njit

from .core import (
    Animal,
    AnimalRoster,
    Flavor,
    PairList,
    PairTypeMatrix,
    PopulationCounts,
    PreferenceMatrix,
    RateVector,
)
from .errors import (
    EmptyPopulation,
    HorizonExhausted,
    InvalidHorizon,
    InvalidPreferences,
    InvalidRates,
    InvalidSchedule,
)
from .rng import MASK64, SplitMix64, derive_seed, nb_derive_seed, nb_random

_POISSON, _BERNOULLI, _EXPLICIT = 0, 1, 2


# ---------------------------------------------------------------------------
# firing processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiringSchedule:
    """Explicit firing times per animal.

    Animals missing from ``times`` never fire.  ``horizon`` is the time up to
    which the schedule is declared complete; it defaults to the last firing.
    """

    times: Mapping[Animal, tuple[float, ...]]
    horizon: float | None = None

    def __post_init__(self):
        clean = {}
        for animal, ts in self.times.items():
            animal = Animal(*animal)
            if animal.sex not in ("F", "M"):
                raise InvalidSchedule(f"unknown sex {animal.sex!r}")
            ts = tuple(float(t) for t in ts)
            for t in ts:
                if not t > 0 or math.isnan(t):
                    raise InvalidSchedule(f"{animal}: firing times must be positive, got {t}")
            for s, t in zip(ts, ts[1:]):
                if not t > s:
                    raise InvalidSchedule(f"{animal}: firing times must be strictly increasing ({s} then {t})")
            if ts:
                clean[animal] = ts
        object.__setattr__(self, "times", clean)
        if self.horizon is None:
            last = [ts[-1] for ts in clean.values() if ts and math.isfinite(ts[-1])]
            object.__setattr__(self, "horizon", max(last) if last else 0.0)

    def of(self, animal: Animal) -> tuple[float, ...]:
        return self.times.get(animal, ())

    def check_proper(self, roster: AnimalRoster) -> None:
        """Reject schedules that cannot be a proper family up to the horizon.

        Every label must exist in the roster, and either every female or every
        male must fire at least once by ``horizon``.
        """
        n = roster.n
        for animal in self.times:
            if not 0 <= animal.index < n:
                raise InvalidSchedule(f"{animal} is not in a roster of {n} animals per sex")

        def covered(sex):
            return all(any(t <= self.horizon for t in self.of(Animal(sex, a))) for a in range(n))

        if n and not (covered("F") or covered("M")):
            raise InvalidSchedule(
                "neither all females nor all males fire by the horizon; pair formation could stall"
            )

    def to_arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """CSR layout: animal ``z`` (females 0..n-1, males n..2n-1) owns
        ``times[offsets[z]:offsets[z+1]]``."""
        seqs = [self.of(Animal("F", a)) for a in range(n)] + [self.of(Animal("M", b)) for b in range(n)]
        offsets = np.zeros(2 * n + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(s) for s in seqs])
        flat = np.array([t for s in seqs for t in s], dtype=np.float64)
        return offsets, flat

    def truncate(self, horizon: float) -> "FiringSchedule":
        return FiringSchedule({a: tuple(t for t in ts if t <= horizon) for a, ts in self.times.items()}, horizon)


def parse_schedule(text: str) -> FiringSchedule:
    """Parse the plain-text schedule format.

    One line per animal: ``F<label>`` or ``M<label>`` (labels start at 1)
    followed by whitespace-separated, strictly increasing positive times.
    Blank lines and ``#`` comments are ignored; a comment line
    ``# horizon: <t>`` declares the horizon.
    """
    times: dict[Animal, tuple[float, ...]] = {}
    seen: set[Animal] = set()
    horizon = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if "#" in line and not line.startswith("#"):
            line = line.split("#", 1)[0].strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("horizon"):
                try:
                    horizon = float(body.split(":", 1)[1] if ":" in body else body.split()[1])
                except (IndexError, ValueError):
                    raise InvalidSchedule(f"line {lineno}: malformed horizon directive {raw!r}") from None
            continue
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if len(head) < 2 or head[0] not in "FM" or not head[1:].isdigit() or int(head[1:]) < 1:
            raise InvalidSchedule(f"line {lineno}: expected F<label> or M<label> with label >= 1, got {head!r}")
        animal = Animal(head[0], int(head[1:]) - 1)
        if animal in seen:
            raise InvalidSchedule(f"line {lineno}: {head} listed twice")
        seen.add(animal)
        try:
            ts = tuple(float(tok) for tok in tokens[1:])
        except ValueError as exc:
            raise InvalidSchedule(f"line {lineno}: {exc}") from None
        try:
            times[animal] = FiringSchedule({animal: ts}).of(animal)
        except InvalidSchedule as exc:
            raise InvalidSchedule(f"line {lineno}: {exc}") from None
    return FiringSchedule(times, horizon)


def read_schedule(path) -> FiringSchedule:
    return parse_schedule(Path(path).read_text())


def format_schedule(schedule: FiringSchedule, roster: AnimalRoster) -> str:
    lines = [f"# horizon: {schedule.horizon!r}"]
    for animal in roster.animals():
        ts = " ".join(repr(t) for t in schedule.of(animal))
        lines.append(f"{animal.sex}{animal.index + 1} {ts}".rstrip())
    return "\n".join(lines) + "\n"


class FiringKind(str, enum.Enum):
    POISSON_RATES = "poisson"
    BERNOULLI_PROBABILITIES = "bernoulli"
    EXPLICIT_SCHEDULE = "explicit"


@dataclass(frozen=True)
class FiringProcessSpec:
    kind: FiringKind
    rates: RateVector | None = None
    schedule: FiringSchedule | None = None

    def __post_init__(self):
        kind = FiringKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is FiringKind.EXPLICIT_SCHEDULE:
            if self.schedule is None or self.rates is not None:
                raise ValueError("an explicit firing process carries a schedule and no rates")
        else:
            if self.rates is None or self.schedule is not None:
                raise ValueError("a rate-based firing process carries rates and no schedule")
            want = Flavor.POISSON if kind is FiringKind.POISSON_RATES else Flavor.BERNOULLI
            if self.rates.flavor is not want:
                raise InvalidRates(f"{kind.value} firing process needs {want.value} rates, got {self.rates.flavor.value}")

    @classmethod
    def poisson(cls, alpha, beta) -> "FiringProcessSpec":
        return cls(FiringKind.POISSON_RATES, rates=RateVector(Flavor.POISSON, alpha, beta))

    @classmethod
    def bernoulli(cls, alpha, beta) -> "FiringProcessSpec":
        return cls(FiringKind.BERNOULLI_PROBABILITIES, rates=RateVector(Flavor.BERNOULLI, alpha, beta))

    @classmethod
    def explicit(cls, schedule: FiringSchedule) -> "FiringProcessSpec":
        return cls(FiringKind.EXPLICIT_SCHEDULE, schedule=schedule)

    @classmethod
    def from_rates(cls, rates: RateVector) -> "FiringProcessSpec":
        kind = FiringKind.POISSON_RATES if rates.flavor is Flavor.POISSON else FiringKind.BERNOULLI_PROBABILITIES
        return cls(kind, rates=rates)


def sample_firing_schedule(spec: FiringProcessSpec, roster: AnimalRoster, horizon: float, seed: int) -> FiringSchedule:
    """Draw every animal's firing times on ``(0, horizon]``.

    Poisson times are cumulative sums of exponential gaps at the animal's type
    rate; Bernoulli times are the steps ``1..horizon`` whose coin succeeds.
    """
    if spec.kind is FiringKind.EXPLICIT_SCHEDULE:
        if not horizon > 0:
            raise InvalidHorizon(f"horizon must be positive, got {horizon}")
        return spec.schedule.truncate(horizon)
    rates = spec.rates
    if rates.k != roster.k:
        raise InvalidRates(f"rates have {rates.k} types but the roster has {roster.k}")
    rng = np.random.default_rng(seed & MASK64)
    times = {}
    if spec.kind is FiringKind.POISSON_RATES:
        if not (horizon > 0 and math.isfinite(horizon)):
            raise InvalidHorizon(f"Poisson horizon must be positive and finite, got {horizon}")
        for animal in roster.animals():
            r = _animal_rate(rates, roster, animal)
            if r == 0:
                times[animal] = ()
                continue
            chunk = int(r * horizon + 6 * math.sqrt(r * horizon) + 8)
            gaps = rng.exponential(1.0 / r, size=chunk)
            t = np.cumsum(gaps)
            while t[-1] <= horizon:
                t = np.concatenate([t, t[-1] + np.cumsum(rng.exponential(1.0 / r, size=chunk))])
            times[animal] = tuple(t[t <= horizon].tolist())
    else:
        if horizon != int(horizon) or horizon < 1:
            raise InvalidHorizon(f"Bernoulli horizon must be a positive integer, got {horizon}")
        steps = np.arange(1, int(horizon) + 1, dtype=float)
        for animal in roster.animals():
            r = _animal_rate(rates, roster, animal)
            hits = rng.random(steps.size) < r
            times[animal] = tuple(steps[hits].tolist())
    return FiringSchedule(times, float(horizon))


def _animal_rate(rates: RateVector, roster: AnimalRoster, animal: Animal) -> float:
    if animal.sex == "F":
        return float(rates.alpha[roster.females[animal.index]])
    return float(rates.beta[roster.males[animal.index]])


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _next_time(mode, r, t, z, ptr, off, stimes, state):
    """Next firing of animal ``z`` strictly after ``t``."""
    if mode == _EXPLICIT:
        idx = off[z] + ptr[z]
        ptr[z] += 1
        if idx < off[z + 1]:
            return stimes[idx]
        return np.inf
    if mode == _POISSON:
        if r <= 0.0:
            return np.inf
        nt = t - math.log(1.0 - nb_random(state)) / r
        if nt <= t:
            nt = np.nextafter(t, np.inf)
        return nt
    if r <= 0.0:
        return np.inf
    if r >= 1.0:
        return t + 1.0
    wait = math.log(1.0 - nb_random(state)) / math.log1p(-r)
    if wait >= 1e300:
        return np.inf
    return t + 1.0 + np.floor(wait)


@njit(cache=True, nogil=True)
def _take(avail, pos, count, label):
    i = pos[label]
    last = avail[count - 1]
    avail[i] = last
    pos[last] = i
    pos[label] = -1
    return count - 1


@njit(cache=True, nogil=True)
def _encounter(firers, nfire, n, avail_f, nf, pos_f, avail_m, nm, pos_m, tmp_f, tmp_m, state, pf, pm):
    """Sequential uniform sampling without replacement; returns the number of
    temporary pairs written to ``pf``/``pm``."""
    npair = 0
    for q in range(nfire):
        z = firers[q]
        if z < n:
            a = z
            if tmp_f[a] >= 0:
                continue
            nf = _take(avail_f, pos_f, nf, a)
            b = avail_m[int(nb_random(state) * nm)]
            nm = _take(avail_m, pos_m, nm, b)
        else:
            b = z - n
            if tmp_m[b] >= 0:
                continue
            nm = _take(avail_m, pos_m, nm, b)
            a = avail_f[int(nb_random(state) * nf)]
            nf = _take(avail_f, pos_f, nf, a)
        tmp_f[a] = b
        tmp_m[b] = a
        pf[npair] = a
        pm[npair] = b
        npair += 1
    return npair


@njit(cache=True, nogil=True)
def _simulate(ftype, mtype, pref, mode, rate, off, stimes, males_first, alternative, state,
              partner, ptime, pround, porder):
    n = ftype.shape[0]
    nn = 2 * n
    nxt = np.empty(nn)
    ptr = np.zeros(nn, dtype=np.int64)
    for z in range(nn):
        nxt[z] = _next_time(mode, rate[z], 0.0, z, ptr, off, stimes, state)

    single = np.ones(nn, dtype=np.bool_)
    sf = np.arange(n)
    sm = np.arange(n)
    nsf = n
    nsm = n
    firers = np.empty(nn, dtype=np.int64)
    avail_f = np.empty(n, dtype=np.int64)
    avail_m = np.empty(n, dtype=np.int64)
    pos_f = np.full(n, -1, dtype=np.int64)
    pos_m = np.full(n, -1, dtype=np.int64)
    tmp_f = np.full(n, -1, dtype=np.int64)
    tmp_m = np.full(n, -1, dtype=np.int64)
    pf = np.empty(n, dtype=np.int64)
    pm = np.empty(n, dtype=np.int64)

    remaining = n
    npaired = 0
    rounds = 0
    anomalies = 0
    T = 0.0
    while remaining > 0:
        tstar = np.inf
        for q in range(nsf):
            if nxt[sf[q]] < tstar:
                tstar = nxt[sf[q]]
        for q in range(nsm):
            if nxt[n + sm[q]] < tstar:
                tstar = nxt[n + sm[q]]
        if tstar == np.inf:
            return T, rounds, anomalies, 1

        nfire = 0
        for half in range(2):
            female_turn = (half == 0) != males_first
            if female_turn:
                for q in range(nsf):
                    if nxt[sf[q]] == tstar:
                        firers[nfire] = sf[q]
                        nfire += 1
            else:
                for q in range(nsm):
                    if nxt[n + sm[q]] == tstar:
                        firers[nfire] = n + sm[q]
                        nfire += 1
        if mode == _POISSON and nfire > 1:
            anomalies += 1
        rounds += 1

        if alternative:
            for q in range(nsm):
                avail_m[q] = sm[q]
            for q in range(nsm - 1, 0, -1):
                j = int(nb_random(state) * (q + 1))
                tmp = avail_m[q]
                avail_m[q] = avail_m[j]
                avail_m[j] = tmp
            npair = 0
            for q in range(nsf):
                a = sf[q]
                b = avail_m[q]
                if nxt[a] == tstar or nxt[n + b] == tstar:
                    pf[npair] = a
                    pm[npair] = b
                    npair += 1
        else:
            for q in range(nsf):
                avail_f[q] = sf[q]
                pos_f[sf[q]] = q
                tmp_f[sf[q]] = -1
            for q in range(nsm):
                avail_m[q] = sm[q]
                pos_m[sm[q]] = q
                tmp_m[sm[q]] = -1
            npair = _encounter(firers, nfire, n, avail_f, nsf, pos_f, avail_m, nsm, pos_m,
                               tmp_f, tmp_m, state, pf, pm)

        for q in range(npair):
            a = pf[q]
            b = pm[q]
            if nb_random(state) < pref[ftype[a], mtype[b]]:
                partner[a] = b
                ptime[a] = tstar
                pround[a] = rounds
                porder[npaired] = a
                npaired += 1
                single[a] = False
                single[n + b] = False
                remaining -= 1

        for q in range(nfire):
            z = firers[q]
            if single[z]:
                nxt[z] = _next_time(mode, rate[z], tstar, z, ptr, off, stimes, state)

        w = 0
        for q in range(nsf):
            if single[sf[q]]:
                sf[w] = sf[q]
                w += 1
        nsf = w
        w = 0
        for q in range(nsm):
            if single[n + sm[q]]:
                sm[w] = sm[q]
                w += 1
        nsm = w
        T = tstar
    return T, rounds, anomalies, 0


@njit(cache=True, nogil=True)
def _batch(ftype, mtype, pref, mode, rate, off, stimes, males_first, alternative,
           master, start, k, out):
    """Run ``out.shape[0]`` replications; row r of ``out`` receives the
    row-major terminal pattern of replication ``start + r``.  Returns the
    first failing replication index, or -1."""
    n = ftype.shape[0]
    state = np.empty(1, dtype=np.uint64)
    partner = np.empty(n, dtype=np.int64)
    ptime = np.empty(n)
    pround = np.empty(n, dtype=np.int64)
    porder = np.empty(n, dtype=np.int64)
    for r in range(out.shape[0]):
        state[0] = nb_derive_seed(master, np.uint64(start + r))
        res = _simulate(ftype, mtype, pref, mode, rate, off, stimes, males_first, alternative,
                        state, partner, ptime, pround, porder)
        if res[3] != 0:
            return start + r
        for a in range(n):
            out[r, ftype[a] * k + mtype[partner[a]]] += 1
    return -1


@njit(cache=True, nogil=True)
def _batch_partners(ftype, mtype, pref, mode, rate, off, stimes, males_first, alternative,
                    master, start, out):
    """Like :func:`_batch` but row r receives the terminal partner of each female."""
    n = ftype.shape[0]
    state = np.empty(1, dtype=np.uint64)
    ptime = np.empty(n)
    pround = np.empty(n, dtype=np.int64)
    porder = np.empty(n, dtype=np.int64)
    for r in range(out.shape[0]):
        state[0] = nb_derive_seed(master, np.uint64(start + r))
        res = _simulate(ftype, mtype, pref, mode, rate, off, stimes, males_first, alternative,
                        state, out[r], ptime, pround, porder)
        if res[3] != 0:
            return start + r
    return -1


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------


class Jump(NamedTuple):
    time: float
    new_pairs: PairList
    q_after: PairTypeMatrix


@dataclass(frozen=True)
class SimulationRecord:
    jumps: tuple[Jump, ...]
    terminal_time: float
    terminal_pairlist: PairList
    rounds_elapsed: int
    seed: int
    anomalies: int = 0

    @property
    def pattern(self) -> PairTypeMatrix:
        """The mating pattern Q(T)."""
        return self.jumps[-1].q_after

    def q_at(self, t: float) -> PairTypeMatrix:
        """Pair-type matrix at time ``t`` (right-continuous step function)."""
        q = None
        for jump in self.jumps:
            if jump.time > t:
                break
            q = jump.q_after
        return q if q is not None else PairTypeMatrix.zeros(self.pattern.k)


@dataclass(frozen=True)
class SinglesPool:
    females: frozenset = field(default_factory=frozenset)
    males: frozenset = field(default_factory=frozenset)

    @classmethod
    def full(cls, n: int) -> "SinglesPool":
        return cls(frozenset(range(n)), frozenset(range(n)))


_ORDERS = {"females_first": False, "males_first": True}


class _Prepared(NamedTuple):
    ftype: np.ndarray
    mtype: np.ndarray
    pref: np.ndarray
    mode: int
    rate: np.ndarray
    off: np.ndarray
    stimes: np.ndarray
    males_first: bool


def _prepare(pop: PopulationCounts, roster: AnimalRoster | None, prefs: PreferenceMatrix,
             spec: FiringProcessSpec, order: str) -> tuple[AnimalRoster, _Prepared]:
    if pop.n < 1:
        raise EmptyPopulation("simulation needs at least one female and one male")
    if roster is None:
        roster = AnimalRoster.from_population(pop)
    roster.check(pop)
    if prefs.k != pop.k:
        raise InvalidPreferences(f"preference matrix is {prefs.k}x{prefs.k} for k={pop.k}")
    if order not in _ORDERS:
        raise ValueError(f"order must be one of {sorted(_ORDERS)}, got {order!r}")
    n = pop.n
    ftype = np.array(roster.females, dtype=np.int64)
    mtype = np.array(roster.males, dtype=np.int64)
    if spec.kind is FiringKind.EXPLICIT_SCHEDULE:
        spec.schedule.check_proper(roster)
        mode = _EXPLICIT
        rate = np.zeros(2 * n)
        off, stimes = spec.schedule.to_arrays(n)
    else:
        if spec.rates.k != pop.k:
            raise InvalidRates(f"rates have {spec.rates.k} types for k={pop.k}")
        mode = _POISSON if spec.kind is FiringKind.POISSON_RATES else _BERNOULLI
        rate = np.concatenate([spec.rates.alpha[ftype], spec.rates.beta[mtype]]).astype(np.float64)
        off = np.zeros(2 * n + 1, dtype=np.int64)
        stimes = np.zeros(0)
    return roster, _Prepared(ftype, mtype, np.ascontiguousarray(prefs.p, dtype=np.float64), mode,
                             rate, off, stimes, _ORDERS[order])


def _run(pop, roster, prefs, spec, seed, order, alternative) -> SimulationRecord:
    roster, prep = _prepare(pop, roster, prefs, spec, order)
    n = pop.n
    state = np.array([int(seed) & MASK64], dtype=np.uint64)
    partner = np.full(n, -1, dtype=np.int64)
    ptime = np.empty(n)
    pround = np.empty(n, dtype=np.int64)
    porder = np.empty(n, dtype=np.int64)
    T, rounds, anomalies, status = _simulate(*prep, alternative, state, partner, ptime, pround, porder)
    if status != 0:
        raise HorizonExhausted(
            f"explicit schedule exhausted after {rounds} rounds with {int((partner < 0).sum())} pairs unformed"
        )
    k = pop.k
    cells = [0] * (k * k)
    jumps = []
    current_round = None
    batch = []
    for a in porder.tolist():
        if pround[a] != current_round and batch:
            jumps.append(Jump(float(ptime[batch[0]]), PairList((f, int(partner[f])) for f in batch),
                              PairTypeMatrix(cells, k)))
            batch = []
        current_round = pround[a]
        b = int(partner[a])
        cells[roster.females[a] * k + roster.males[b]] += 1
        batch.append(a)
    jumps.append(Jump(float(ptime[batch[0]]), PairList((f, int(partner[f])) for f in batch),
                      PairTypeMatrix(cells, k)))
    return SimulationRecord(
        jumps=tuple(jumps),
        terminal_time=float(T),
        terminal_pairlist=PairList.from_permutation(partner.tolist()),
        rounds_elapsed=int(rounds),
        seed=int(seed) & MASK64,
        anomalies=int(anomalies),
    )


def run_sem(pop: PopulationCounts, roster: AnimalRoster | None, prefs: PreferenceMatrix,
            spec: FiringProcessSpec, seed: int, *, order: str = "females_first") -> SimulationRecord:
    """Simulate one realization with the sequential encounter mechanism.

    ``order`` decides whether simultaneous female or male firers sample
    first; within a sex, firers go by ascending label.  The same ``seed``
    always gives the same record.
    """
    return _run(pop, roster, prefs, spec, seed, order, False)


def run_sem_alternative(pop: PopulationCounts, roster: AnimalRoster | None, prefs: PreferenceMatrix,
                        spec: FiringProcessSpec, seed: int, *, order: str = "females_first") -> SimulationRecord:
    """Simulate one realization with the random-permutation encounter mechanism."""
    return _run(pop, roster, prefs, spec, seed, order, True)


def encounter_round(singles: SinglesPool, firers: set[Animal], rng: SplitMix64, *,
                    order: str = "females_first") -> PairList:
    """Form the temporary pairs of one firing round.

    Every firer ends up in exactly one pair; ``rng`` is advanced in place.
    """
    firers = {Animal(*f) for f in firers}
    for f in firers:
        pool = singles.females if f.sex == "F" else singles.males
        if f.index not in pool:
            raise ValueError(f"firer {f} is not single")
    if len(singles.females) != len(singles.males):
        raise ValueError("the singles' pool holds equally many females and males")
    if order not in _ORDERS:
        raise ValueError(f"order must be one of {sorted(_ORDERS)}, got {order!r}")
    labels = sorted(singles.females | singles.males)
    size = (max(labels) + 1) if labels else 0
    fem = sorted(f.index for f in firers if f.sex == "F")
    mal = sorted(f.index for f in firers if f.sex == "M")
    seq = [size + b for b in mal] + fem if _ORDERS[order] else fem + [size + b for b in mal]
    firer_arr = np.array(seq, dtype=np.int64)
    avail_f = np.array(sorted(singles.females), dtype=np.int64)
    avail_m = np.array(sorted(singles.males), dtype=np.int64)
    pos_f = np.full(size, -1, dtype=np.int64)
    pos_m = np.full(size, -1, dtype=np.int64)
    pos_f[avail_f] = np.arange(avail_f.size)
    pos_m[avail_m] = np.arange(avail_m.size)
    tmp_f = np.full(size, -1, dtype=np.int64)
    tmp_m = np.full(size, -1, dtype=np.int64)
    pf = np.empty(max(size, 1), dtype=np.int64)
    pm = np.empty(max(size, 1), dtype=np.int64)
    state = rng.as_array()
    npair = _encounter(firer_arr, firer_arr.size, size, avail_f, avail_f.size, pos_f, avail_m,
                       avail_m.size, pos_m, tmp_f, tmp_m, state, pf, pm)
    rng.sync(state)
    return PairList(zip(pf[:npair].tolist(), pm[:npair].tolist()))


def simulate_patterns(pop: PopulationCounts, roster: AnimalRoster | None, prefs: PreferenceMatrix,
                      spec: FiringProcessSpec, master_seed: int, runs: int, *, start: int = 0,
                      alternative: bool = False, order: str = "females_first",
                      workers: int = 1) -> np.ndarray:
    """Terminal patterns of replications ``start .. start+runs-1``.

    Replication ``r`` uses seed ``derive_seed(master_seed, r)``, so row ``i``
    equals ``run_sem(..., seed=derive_seed(master_seed, start + i)).pattern``
    flattened row-major.  ``workers > 1`` splits the range across threads;
    the result does not depend on the split.
    """
    roster, prep = _prepare(pop, roster, prefs, spec, order)
    k = pop.k
    out = np.zeros((runs, k * k), dtype=np.int32)
    master = np.uint64(int(master_seed) & MASK64)
    bounds = np.linspace(0, runs, max(1, workers) + 1).astype(int)

    def work(lo, hi):
        return _batch(*prep, alternative, master, start + lo, k, out[lo:hi])

    if workers <= 1:
        failed = [work(0, runs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            failed = list(pool.map(lambda lh: work(*lh), zip(bounds[:-1], bounds[1:])))
    bad = [f for f in failed if f >= 0]
    if bad:
        raise HorizonExhausted(f"explicit schedule exhausted in replication {min(bad)}")
    return out


def simulate_pairlists(pop: PopulationCounts, roster: AnimalRoster | None, prefs: PreferenceMatrix,
                       spec: FiringProcessSpec, master_seed: int, runs: int, *, start: int = 0,
                       alternative: bool = False, order: str = "females_first") -> np.ndarray:
    """Terminal pair-lists as permutations: ``out[r, a]`` is the male paired
    with female ``a`` in replication ``start + r``."""
    roster, prep = _prepare(pop, roster, prefs, spec, order)
    out = np.empty((runs, pop.n), dtype=np.int64)
    failed = _batch_partners(*prep, alternative, np.uint64(int(master_seed) & MASK64), start, out)
    if failed >= 0:
        raise HorizonExhausted(f"explicit schedule exhausted in replication {failed}")
    return out


__all__ = [
    "FiringKind",
    "FiringProcessSpec",
    "FiringSchedule",
    "Jump",
    "SimulationRecord",
    "SinglesPool",
    "derive_seed",
    "encounter_round",
    "format_schedule",
    "parse_schedule",
    "read_schedule",
    "run_sem",
    "run_sem_alternative",
    "sample_firing_schedule",
    "simulate_pairlists",
    "simulate_patterns",
]
