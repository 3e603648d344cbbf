"""SplitMix64 streams and stateless per-replication seed derivation.

A stream is a 64-bit counter advanced by a fixed odd increment; each output
is a bijective mix of the counter.  Replication ``r`` of a batch with master
seed ``s`` starts from ``derive_seed(s, r)``, so any subset of replications
can be reproduced in any order and on any worker.

The Python and numba versions produce identical bits; tests pin that.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, replication: int) -> int:
    """Seed of replication ``replication`` under master seed ``master``."""
    base = mix64((master & MASK64) + GAMMA)
    return mix64(base + ((replication + 1) * GAMMA & MASK64))


class SplitMix64:
    """Python-side stream; ``state`` is shared with the compiled kernels."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV53

    def as_array(self) -> np.ndarray:
        return np.array([self.state], dtype=np.uint64)

    def sync(self, arr: np.ndarray) -> None:
        self.state = int(arr[0])


# --- compiled twins -------------------------------------------------------

_G = np.uint64(GAMMA)
_K1 = np.uint64(_C1)
_K2 = np.uint64(_C2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)


@njit(cache=True, nogil=True)
def nb_mix64(z):
    z = (z ^ (z >> _S30)) * _K1
    z = (z ^ (z >> _S27)) * _K2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def nb_derive_seed(master, replication):
    base = nb_mix64(np.uint64(master) + _G)
    return nb_mix64(base + (np.uint64(replication) + _ONE) * _G)


@njit(cache=True, nogil=True)
def nb_random(state):
    """Advance the one-element uint64 array ``state`` and return a uniform in [0, 1)."""
    state[0] = state[0] + _G
    return (nb_mix64(state[0]) >> _S11) * _INV53
