"""Counter-based random numbers.

Every draw is a pure function of a 64-bit key and a counter, so any stream
can be re-materialized from any position without carrying generator state
around.  The mixer is the SplitMix64 finalizer; all functions are numba
compiled and callable from plain Python as well.
"""

import numpy as np
from numba import njit

_U = np.uint64
GOLDEN = _U(0x9E3779B97F4A7C15)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def mix64(z):
    z = _U(z)
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


@njit(cache=True)
def stream_key(seed, a, b):
    """Key for the stream indexed by the integer pair (a, b) under ``seed``."""
    k = mix64(_U(seed) + GOLDEN)
    k = mix64(k ^ _U(np.int64(a)))
    return mix64(k + GOLDEN * _U(np.int64(b) + 1))


@njit(cache=True)
def draw(key, counter):
    """Raw 64 random bits at position ``counter`` of the stream ``key``."""
    return mix64(key + GOLDEN * (_U(counter) + _U(1)))


@njit(cache=True)
def to_unit(bits):
    """Map 64 bits to a uniform on (0, 1]; the low 11 bits are ignored."""
    return (float(bits >> _U(11)) + 1.0) * _INV53


@njit(cache=True)
def uniform(key, counter):
    return to_unit(draw(key, counter))


def replica_seed(master_seed: int, replica: int) -> int:
    """Per-replica seed; adding replicas never changes earlier ones."""
    return int(stream_key(np.uint64(master_seed), -1, replica))


class RngCursor:
    """A position in a counter-based stream, advanced one draw at a time."""

    def __init__(self, seed: int, counter: int = 0, stream: int = 0):
        self.seed = int(seed)
        self.key = np.uint64(stream_key(np.uint64(self.seed), -2, stream))
        self.counter = int(counter)

    def bits(self) -> int:
        b = draw(self.key, np.uint64(self.counter))
        self.counter += 1
        return int(b)

    def uniform(self) -> float:
        return to_unit(np.uint64(self.bits()))
