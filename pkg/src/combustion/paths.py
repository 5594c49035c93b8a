"""Per-label random-walk paths.

A label ``(birth_site, index)`` owns one continuous-time simple symmetric
walk of total jump rate 2.  Its ``j``-th event (holding time, step) is a pure
function of ``(seed, label, j)``, so the combustion, labeled and auxiliary
processes can all be driven by literally the same family of walks.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from typing import NamedTuple

import numpy as np
from numba import njit

from .rng import draw, stream_key, to_unit

JUMP_RATE = 2.0


class Label(NamedTuple):
    """Birthplace label; tuple ordering is the lexicographic label order."""

    birth_site: int
    index: int


@njit(cache=True)
def label_key(seed, site, index):
    return stream_key(seed, site, index)


@njit(cache=True)
def path_event(key, j):
    """(holding time, step) of event ``j`` of the path with stream ``key``."""
    bits = draw(key, j)
    hold = -math.log(to_unit(bits)) / 2.0
    step = 1 if (bits & np.uint64(1)) else -1
    return hold, step


@njit(cache=True)
def _path_block(key, start, n):
    holds = np.empty(n)
    steps = np.empty(n, dtype=np.int64)
    for j in range(n):
        h, s = path_event(key, start + j)
        holds[j] = h
        steps[j] = s
    return holds, steps


@njit(cache=True)
def first_hit(key, start_site, target, horizon):
    """First time the unshifted walk from ``start_site`` is at ``target``.

    Returns ``inf`` if that does not happen by ``horizon``.
    """
    if start_site == target:
        return 0.0
    t = 0.0
    pos = start_site
    j = 0
    while True:
        h, s = path_event(key, j)
        t += h
        if t > horizon:
            return np.inf
        pos += s
        if pos == target:
            return t
        j += 1


class Censored(NamedTuple):
    """A stopping time not observed before ``at``."""

    at: float


class WalkPath:
    """Lazily materialized path of one label under one seed."""

    _BLOCK = 256

    def __init__(self, seed: int, label: Label):
        self.seed = int(seed)
        self.label = Label(*label)
        self.key = np.uint64(label_key(np.uint64(self.seed), self.label.birth_site, self.label.index))
        self._holds = np.empty(0)
        self._steps = np.empty(0, dtype=np.int64)
        self._times = np.empty(0)
        self._positions = np.empty(0, dtype=np.int64)

    def __len__(self):
        return len(self._holds)

    def _extend(self, n: int) -> None:
        have = len(self._holds)
        if n <= have:
            return
        n = max(n, have + self._BLOCK)
        holds, steps = _path_block(self.key, have, n - have)
        self._holds = np.concatenate([self._holds, holds])
        self._steps = np.concatenate([self._steps, steps])
        self._times = np.cumsum(self._holds)
        self._positions = self.label.birth_site + np.cumsum(self._steps)

    def events(self, n: int) -> list[tuple[float, int]]:
        """The first ``n`` (holding time, step) pairs."""
        self._extend(n)
        return [(float(h), int(s)) for h, s in zip(self._holds[:n], self._steps[:n])]

    def _cover(self, t: float) -> None:
        while len(self._times) == 0 or self._times[-1] <= t:
            self._extend(2 * len(self._holds) + self._BLOCK)

    def jump_times(self, t: float) -> np.ndarray:
        """Cumulative event times up to and including ``t``."""
        self._cover(t)
        return self._times[: bisect_right(self._times, t)]

    def position_at(self, t: float) -> int:
        if t < 0:
            raise ValueError("t must be non-negative")
        self._cover(t)
        n = int(np.searchsorted(self._times, t, side="right"))
        return self.label.birth_site if n == 0 else int(self._positions[n - 1])

    def hitting_time(self, target: int, horizon: float) -> float | Censored:
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        t = first_hit(self.key, self.label.birth_site, target, horizon)
        return Censored(horizon) if math.isinf(t) else float(t)


def path_for(seed: int, label: Label | tuple[int, int]) -> WalkPath:
    return WalkPath(seed, Label(*label))


def position_at(path: WalkPath, t: float) -> int:
    return path.position_at(t)


def hitting_time(path: WalkPath, target: int, horizon: float) -> float | Censored:
    return path.hitting_time(target, horizon)


class FixedPath(WalkPath):
    """A path with prescribed leading events, for hand-built examples.

    Events beyond the prescribed ones continue with the seeded stream.
    """

    def __init__(self, label: Label, events: list[tuple[float, int]], seed: int = 0):
        super().__init__(seed, label)
        holds = np.array([h for h, _ in events], dtype=float)
        steps = np.array([s for _, s in events], dtype=np.int64)
        self._prefix = len(events)
        tail_h, tail_s = _path_block(self.key, 0, self._BLOCK)
        self._holds = np.concatenate([holds, tail_h])
        self._steps = np.concatenate([steps, tail_s])
        self._times = np.cumsum(self._holds)
        self._positions = self.label.birth_site + np.cumsum(self._steps)

    def _extend(self, n: int) -> None:
        have = len(self._holds)
        if n <= have:
            return
        n = max(n, have + self._BLOCK)
        holds, steps = _path_block(self.key, have - self._prefix, n - have)
        self._holds = np.concatenate([self._holds, holds])
        self._steps = np.concatenate([self._steps, steps])
        self._times = np.cumsum(self._holds)
        self._positions = self.label.birth_site + np.cumsum(self._steps)

    def hitting_time(self, target: int, horizon: float) -> float | Censored:
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        if target == self.label.birth_site:
            return 0.0
        self._cover(horizon)
        hit = np.nonzero(self._positions == target)[0]
        if len(hit) == 0 or self._times[hit[0]] > horizon:
            return Censored(horizon)
        return float(self._times[hit[0]])
