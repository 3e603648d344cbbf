"""Fine balance, rate decompositions and the two-type trichotomy.

A Poisson EM law is fine-balanced when it is additive, ``pi_ij = a_i + b_j``;
a Bernoulli law when its complement is multiplicative,
``1 - pi_ij = (1 - a_i)(1 - b_j)``.  Fine-balanced laws are exactly those
that can be reproduced with ``p = 1`` and suitable firing rates, and they are
the panmictic ones.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import EMLaw, Flavor, PreferenceMatrix, RateVector, em_law
from .errors import NotFineBalanced, WrongDimension


def _violations(law: EMLaw) -> np.ndarray:
    """Array ``v[i, j, i2, j2]`` of fine-balance residuals for every quadruple.

    Poisson residuals are scaled by ``max |pi|``; Bernoulli ones are absolute.
    """
    pi = law.pi
    if law.flavor is Flavor.POISSON:
        a = pi[:, :, None, None] + pi[None, None, :, :]
        b = pi[:, None, None, :] + pi.T[None, :, :, None]
        return np.abs(a - b) / max(np.abs(pi).max(), 1e-300)
    q = 1.0 - pi
    a = q[:, :, None, None] * q[None, None, :, :]
    b = q[:, None, None, :] * q.T[None, :, :, None]
    return np.abs(a - b)


def check_fine_balance(law: EMLaw, tol: float = 1e-9) -> bool:
    """Whether the flavor's fine-balance identity holds for every quadruple.

    Tolerance is relative to ``max |pi|`` for Poisson and absolute on the
    complement products for Bernoulli.
    """
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    return bool(_violations(law).max() <= tol)


def worst_quadruple(law: EMLaw) -> tuple[tuple[int, int, int, int], float]:
    v = _violations(law)
    idx = np.unravel_index(int(np.argmax(v)), v.shape)
    return tuple(int(i) for i in idx), float(v[idx])


def _swap_perm(k: int, a: int) -> tuple[int, ...]:
    perm = list(range(k))
    perm[0], perm[a] = perm[a], perm[0]
    return tuple(perm)


@dataclass(frozen=True)
class Decomposition:
    """Firing rates that reproduce an EM law with ``p = 1``.

    ``alpha_bar``/``beta_bar`` are indexed by the original types.  The
    relabelings record which row/column was moved to position 0 to build
    them: ``female_relabeling[new] = old`` and likewise for males.
    """

    flavor: Flavor
    alpha_bar: tuple[float, ...]
    beta_bar: tuple[float, ...]
    female_relabeling: tuple[int, ...]
    male_relabeling: tuple[int, ...]

    def reconstruct(self) -> np.ndarray:
        a = np.array(self.alpha_bar)[:, None]
        b = np.array(self.beta_bar)[None, :]
        if self.flavor is Flavor.POISSON:
            return a + b
        return 1.0 - (1.0 - a) * (1.0 - b)


def decompose(law: EMLaw, tol: float = 1e-12) -> Decomposition:
    """Constructive rate decomposition of a fine-balanced law.

    Poisson: with ``c`` the column of the smallest entry in row 0,
    ``alpha_i = pi_ic`` and ``beta_j = pi_0j - pi_0c``.  Bernoulli: if every
    entry is 1 both vectors are 1; otherwise, with ``(r, c)`` the position of
    the smallest entry (so the divisor ``1 - pi_rc`` is as large as possible),
    ``alpha_i = pi_ic`` and ``beta_j = 1 - (1 - pi_rj) / (1 - pi_rc)``.
    The reconstruction must match to ``tol`` or :class:`NotFineBalanced` is
    raised with the worst quadruple.
    """
    pi = law.pi
    k = law.k
    ident = tuple(range(k))
    if law.flavor is Flavor.POISSON:
        c = int(np.argmin(pi[0]))
        alpha = pi[:, c].copy()
        beta = np.clip(pi[0] - pi[0, c], 0.0, None)
        dec = Decomposition(law.flavor, tuple(alpha.tolist()), tuple(beta.tolist()), ident, _swap_perm(k, c))
        scale = max(1.0, float(np.abs(pi).max()))
    else:
        if np.all(pi >= 1.0):
            ones = (1.0,) * k
            return Decomposition(law.flavor, ones, ones, ident, ident)
        r, c = (int(v) for v in np.unravel_index(np.argmin(pi), pi.shape))
        alpha = pi[:, c].copy()
        beta = np.clip(1.0 - (1.0 - pi[r]) / (1.0 - pi[r, c]), 0.0, 1.0)
        dec = Decomposition(law.flavor, tuple(alpha.tolist()), tuple(beta.tolist()), _swap_perm(k, r), _swap_perm(k, c))
        scale = 1.0
    err = float(np.abs(dec.reconstruct() - pi).max())
    if err > tol * scale:
        quad, v = worst_quadruple(law)
        raise NotFineBalanced(
            f"{law!r} admits no rate decomposition: reconstruction error {err:.3g}, "
            f"worst quadruple {quad} violates fine balance by {v:.3g}",
            quadruple=quad,
            violation=v,
        )
    return dec


def reduce_to_definite(law: EMLaw, tol: float = 1e-12) -> tuple[PreferenceMatrix, RateVector]:
    """Preferences ``p = 1`` and rates whose EM law equals ``law``."""
    dec = decompose(law, tol)
    prefs = PreferenceMatrix.ones(law.k)
    rates = RateVector(law.flavor, dec.alpha_bar, dec.beta_bar)
    back = em_law(prefs, rates).pi
    err = float(np.abs(back - law.pi).max())
    if err > tol * max(1.0, float(np.abs(law.pi).max())):
        quad, v = worst_quadruple(law)
        raise NotFineBalanced(f"round trip through definite mating misses by {err:.3g}", quad, v)
    return prefs, rates


class Verdict(str, enum.Enum):
    HETEROGAMOUS = "Heterogamous"
    PANMICTIC = "Panmictic"
    HOMOGAMOUS = "Homogamous"


class Trichotomy(NamedTuple):
    verdict: Verdict
    discriminant: float


def discriminant_2x2(law: EMLaw) -> float:
    """Positive for homogamy, negative for heterogamy."""
    if law.k != 2:
        raise WrongDimension(f"the trichotomy is defined for two types, got k={law.k}")
    p = law.pi
    if law.flavor is Flavor.POISSON:
        return float((p[0, 0] + p[1, 1]) - (p[0, 1] + p[1, 0]))
    return float((1 - p[0, 1]) * (1 - p[1, 0]) - (1 - p[0, 0]) * (1 - p[1, 1]))


def classify_2x2(law: EMLaw, tol: float = 1e-9) -> Trichotomy:
    """Sign of ``u*_11 - x_1 y_1 / n``, read off the EM law.

    The Panmictic band is ``|d| <= tol``, scaled by ``max |pi|`` for
    Poisson so it agrees with :func:`check_fine_balance`.
    """
    d = discriminant_2x2(law)
    band = tol * (float(np.abs(law.pi).max()) if law.flavor is Flavor.POISSON else 1.0)
    if d > band:
        verdict = Verdict.HOMOGAMOUS
    elif d < -band:
        verdict = Verdict.HETEROGAMOUS
    else:
        verdict = Verdict.PANMICTIC
    return Trichotomy(verdict, d)


__all__ = [
    "Decomposition",
    "Trichotomy",
    "Verdict",
    "check_fine_balance",
    "classify_2x2",
    "decompose",
    "discriminant_2x2",
    "reduce_to_definite",
    "worst_quadruple",
]
