"""Closed-form quantities, explicit bounds and exact small-system laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import optimize, sparse, special, stats

from .core import ModelParams, Occupancy
from .rng import draw, stream_key, to_unit


def _theta_eq(theta: float, c: float) -> float:
    return c * theta - 2.0 * (math.cosh(theta) - 1.0)


def theta_c(c: float) -> float:
    """Positive root of ``c t - 2 (cosh t - 1) = 0``."""
    if not c > 0:
        raise ValueError("c must be positive")
    # the left side is concave, positive just right of 0 and eventually negative
    hi = max(1.0, 2.0 * math.asinh(c / 2.0) + 1.0)
    while _theta_eq(hi, c) >= 0:
        hi *= 2.0
    lo = hi / 2.0
    while _theta_eq(lo, c) <= 0:
        lo /= 2.0
    return optimize.brentq(_theta_eq, lo, hi, args=(c,), xtol=1e-15, rtol=4 * np.finfo(float).eps)


def theta_residual(c: float) -> float:
    return abs(_theta_eq(theta_c(c), c))


def rate_I(u: float) -> float:
    """Cramér rate function of a rate-2 symmetric walk at speed ``u``."""
    if u < 0:
        raise ValueError("u must be non-negative")
    return 2.0 + u * math.asinh(u / 2.0) - math.sqrt(4.0 + u * u)


def walk_tail_logprob(t: float, x: int) -> float:
    """``log P[X_t >= x]`` for the rate-2 symmetric walk from 0, exactly.

    ``X_t`` is a difference of two rate-1 Poisson counts, whose law is
    ``e^{-2t} I_k(2t)``; summing scaled Bessel terms in log space stays
    finite where the Skellam survival function underflows.
    """
    if t <= 0:
        return 0.0 if x <= 0 else -math.inf
    lo = x if x > 0 else 1 - x
    k = np.arange(lo, lo + int(20 * math.sqrt(t)) + 50 + int(3 * t))
    with np.errstate(divide="ignore"):
        terms = np.log(special.ive(k, 2.0 * t))
    upper = float(special.logsumexp(terms))
    if x > 0:
        return upper
    # P[X >= x] = 1 - P[X >= 1 - x] by symmetry when x <= 0
    return math.log1p(-math.exp(upper))


@dataclass
class LineHitBound:
    x: int
    c: float
    p_escape_lb: float
    p_hit_ub: float
    theta: float

    def late_hit_terms(self, t: float) -> tuple[float, float]:
        """The two pieces of the split at ``B = (floor(ct) + x) / 2``:
        a Chernoff bound for the walk being above ``B`` at ``t`` and the
        probability of later catching the line from at or below ``B``."""
        line = math.floor(self.c * t)
        B = (line + self.x) / 2.0
        above = 1.0 if B + abs(self.x) <= 0 else math.exp(-t * rate_I((B + abs(self.x)) / t))
        catch = min(1.0, math.exp(-(line - B - 1.0) * self.theta))
        return above, catch

    def late_hit_ub(self, t: float) -> float:
        return min(1.0, sum(self.late_hit_terms(t)))

    def horizon_for(self, residual: float) -> float:
        """Smallest power-of-two horizon where the late-hit bound is below ``residual``."""
        t = 1.0
        while self.late_hit_ub(t) >= residual:
            t *= 2.0
        return t


def line_hit_bounds(x: int, c: float) -> LineHitBound:
    if x > -1:
        raise ValueError("x must be <= -1")
    th = theta_c(c)
    if x <= -2:
        hit = math.exp((1 + x) * th)
        esc = 1.0 - hit
    else:
        esc = math.exp(-2.0 / c) * (1.0 - math.exp(-th))
        hit = 1.0 - esc
    return LineHitBound(x, c, esc, hit, th)


def v_escape_bound(M: int, alpha_p: float, sites: int) -> float:
    """Lower bound on no older particle ever reaching the line when sites
    ``-1, ..., -sites`` each hold ``M`` particles (walks are independent)."""
    th = theta_c(alpha_p)
    logp = M * (-2.0 / alpha_p + math.log1p(-math.exp(-th)))
    for n in range(1, sites):
        logp += M * math.log1p(-math.exp(-n * th))
    return math.exp(logp)


def poisson_front_bound(M: int, Mp: float, t: float) -> float:
    """``P[Poisson(M t) >= ceil(Mp t)]``."""
    if not Mp > M:
        raise ValueError("need Mp > M")
    k = math.ceil(Mp * t)
    return float(stats.poisson.sf(k - 1, M * t))


# -- Monte Carlo for single walks against a line ------------------------------

@njit(cache=True)
def _line_hit(key, j, x, c, horizon):
    """Does walk ``j`` of stream ``key`` from ``x`` reach ``floor(c t)`` by ``horizon``?"""
    t = 0.0
    pos = x
    m = 0
    while True:
        bits = draw(key, m)
        m += 1
        t += -math.log(to_unit(bits)) / 2.0
        if t > horizon:
            return False
        if bits & np.uint64(1):
            pos += 1
            if pos >= math.floor(c * t):
                return True
        else:
            pos -= 1


@njit(cache=True)
def line_hit_count(seed, x, c, horizon, n):
    hits = 0
    for j in range(n):
        if _line_hit(stream_key(seed, x, j), j, x, c, horizon):
            hits += 1
    return hits


@njit(cache=True)
def worst_case_v_escapes(seed, M, sites, c, horizon, n):
    """Configurations (``M`` walks on each of ``sites`` sites below 0) in
    which no walk reaches the line by ``horizon``."""
    ok = 0
    for j in range(n):
        fired = False
        for s in range(1, sites + 1):
            for i in range(M):
                key = stream_key(seed, j, s * (M + 1) + i)
                if _line_hit(key, 0, -s, c, horizon):
                    fired = True
                    break
            if fired:
                break
        if not fired:
            ok += 1
    return ok


# -- uniformization ---------------------------------------------------------

class StateSpaceTooLarge(RuntimeError):
    pass


class ExcessiveLeak(RuntimeError):
    pass


def uniformize(Q: sparse.csr_matrix, p0: np.ndarray, t: float, rate: float | None = None,
               tol: float = 1e-12) -> np.ndarray:
    """``p0 exp(Q t)`` for a generator ``Q`` (rows sum to zero).

    The Poisson series is cut once the neglected Poisson mass is below ``tol``.
    """
    exit_rates = -Q.diagonal()
    lam = float(exit_rates.max()) if rate is None else float(rate)
    if t == 0 or lam == 0:
        return p0.copy()
    if lam < exit_rates.max() - 1e-12:
        raise ValueError("uniformization rate below the largest exit rate")
    P = sparse.identity(Q.shape[0], format="csr") + Q / lam
    PT = P.T.tocsr()
    mu = lam * t
    kmax = int(stats.poisson.isf(tol, mu)) + 2
    weights = stats.poisson.pmf(np.arange(kmax + 1), mu)
    v = p0.astype(float).copy()
    out = weights[0] * v
    for k in range(1, kmax + 1):
        v = PT @ v
        out += weights[k] * v
    return out


@dataclass
class CtmcResult:
    states: list
    probs: np.ndarray
    leak_left: float
    leak_right: float
    boundary: str = "absorbing"

    @property
    def leak(self) -> float:
        return self.leak_left + self.leak_right

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def front_law(self) -> dict[int, float]:
        law: dict[int, float] = {}
        for (front, _), p in zip(self.states, self.probs):
            law[front] = law.get(front, 0.0) + float(p)
        return law


_LEFT_COFFIN = ("left",)
_RIGHT_COFFIN = ("right",)


def _transitions(state, params: ModelParams, left: int, right: int):
    """Outgoing (rate, next_state) pairs of a truncated combustion state.

    A state is ``(front, counts)`` with ``counts[i]`` the number at ``left + i``.
    """
    front, counts = state
    a, M = params.a, params.M
    out: dict = {}
    for i, c in enumerate(counts):
        if not c:
            continue
        x = left + i
        for y in (x - 1, x + 1):
            if y < left:
                nxt = _LEFT_COFFIN
            elif y > front:
                if y > right:
                    nxt = _RIGHT_COFFIN
                else:
                    new = list(counts) + [0]
                    new[i] -= 1
                    new[y - left] = a
                    nxt = (y, tuple(new))
            else:
                new = list(counts)
                new[i] -= 1
                if new[y - left] < M:
                    new[y - left] += 1
                nxt = (front, tuple(new))
            out[nxt] = out.get(nxt, 0.0) + float(c)
    return out


def exact_small_ctmc(initial: Occupancy, params: ModelParams, t: float, left_trunc: int,
                     right_trunc: int, max_states: int = 10**6, max_leak: float = 1e-3,
                     rate_factor: float = 1.0) -> CtmcResult:
    """Transient law at ``t`` of the process confined to ``[left, right]``.

    A particle stepping below ``left_trunc`` or a front passing
    ``right_trunc`` sends the whole system to an absorbing coffin state; the
    coffin masses are the truncation error (in total variation).
    """
    if any(x < left_trunc for x in initial.counts if initial.counts[x]):
        raise ValueError("initial particles left of the truncation")
    if initial.front > right_trunc:
        raise ValueError("initial front right of the truncation")
    counts0 = tuple(initial.count(x) for x in range(left_trunc, initial.front + 1))
    start = (initial.front, counts0)
    index = {start: 0, _LEFT_COFFIN: 1, _RIGHT_COFFIN: 2}
    states = [start, _LEFT_COFFIN, _RIGHT_COFFIN]
    rows, cols, vals = [], [], []
    head = 0
    pending = [start]
    while head < len(pending):
        s = pending[head]
        head += 1
        i = index[s]
        total = 0.0
        for nxt, rate in _transitions(s, params, left_trunc, right_trunc).items():
            j = index.get(nxt)
            if j is None:
                j = index[nxt] = len(states)
                states.append(nxt)
                if len(states) > max_states:
                    raise StateSpaceTooLarge(f"more than {max_states} states")
                pending.append(nxt)
            rows.append(i)
            cols.append(j)
            vals.append(rate)
            total += rate
        rows.append(i)
        cols.append(i)
        vals.append(-total)
    n = len(states)
    Q = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    p0 = np.zeros(n)
    p0[0] = 1.0
    lam = float((-Q.diagonal()).max()) * rate_factor
    p = uniformize(Q, p0, t, rate=lam)
    res = CtmcResult([s for s in states if len(s) == 2], np.delete(p, [1, 2]),
                     float(p[1]), float(p[2]))
    if res.leak > max_leak:
        raise ExcessiveLeak(f"truncation leaks {res.leak:.3g} > {max_leak}")
    return res


def walk_hit_probability(offset: int, t: float, left: int = -60) -> float:
    """``P[a rate-2 symmetric walk from 0 visits offset > 0 by time t]``.

    Solved as a birth-death chain on ``[left, offset]`` with ``offset``
    absorbing; sites below ``left`` count as never hitting (their mass is
    below ``P[Poisson(t) >= |left|]``).
    """
    if offset <= 0:
        return 1.0 if offset == 0 else math.nan
    sites = np.arange(left - 1, offset + 1)
    n = len(sites)
    Q = sparse.lil_matrix((n, n))
    for k in range(1, n - 1):
        Q[k, k - 1] = 1.0
        Q[k, k + 1] = 1.0
        Q[k, k] = -2.0
    p0 = np.zeros(n)
    p0[-left + 1] = 1.0
    return float(uniformize(Q.tocsr(), p0, t)[-1])
