"""Compiled occupancy-view engine.

Particles are unlabeled; a Fenwick tree over site counts selects the jumping
particle in increasing-site order, so the compiled engine consumes its random
stream exactly like the pure-Python ``step_fast`` and both produce the same
trajectory from the same seed.
"""

import math

import numpy as np
from numba import njit

from .rng import draw, stream_key, to_unit

LEFT, RIGHT, ADVANCE, KILL, RETIRE = 0, 1, 2, 3, 4

STOP_HORIZON, STOP_FRONT, STOP_BUDGET, STOP_EXTINCT = 0, 1, 2, 3
STOP_NAMES = ("horizon", "front-hit", "event-budget", "extinct")

_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def fenwick_build(counts, tree):
    n = len(counts)
    for i in range(n):
        tree[i] = 0
    for i in range(n):
        j = i + 1
        c = counts[i]
        while j <= n:
            tree[j - 1] += c
            j += j & (-j)


@njit(cache=True)
def fenwick_add(tree, i, delta):
    n = len(tree)
    j = i + 1
    while j <= n:
        tree[j - 1] += delta
        j += j & (-j)


@njit(cache=True)
def fenwick_find(tree, k):
    """Smallest index i with prefix sum over [0, i] greater than k."""
    n = len(tree)
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt - 1] <= k:
            pos = nxt
            k -= tree[nxt - 1]
        step //= 2
    return pos


@njit(cache=True)
def pick_particle(bits, n):
    """Particle rank in [0, n) and jump direction from one 64-bit draw."""
    k = int(float(bits >> np.uint64(11)) * _INV53 * n)
    if k >= n:
        k = n - 1
    d = 1 if (bits & np.uint64(1)) else -1
    return k, d


@njit(cache=True)
def _regrow(counts, base, lo_site, hi_site):
    old_lo = base
    old_hi = base + len(counts) - 1
    lo = min(old_lo, lo_site)
    hi = max(old_hi, hi_site)
    span = hi - lo + 1
    cap = 1
    while cap < 2 * span:
        cap *= 2
    pad = (cap - span) // 4
    new_base = lo - pad
    new = np.zeros(cap, dtype=np.int64)
    off = old_lo - new_base
    for i in range(len(counts)):
        new[off + i] = counts[i]
    return new, new_base


@njit(cache=True)
def run_fast_kernel(a, M, key, init_sites, init_counts, front0, horizon, stop_front,
                    max_events, depth, sample_dt, check, capacity_slack):
    """Simulate until ``horizon``, front ``stop_front`` or ``max_events``.

    ``depth < 0`` is the exact process; otherwise a particle jumping to a site
    more than ``depth`` below the front is retired, unless it is the last
    particle alive.  ``capacity_slack`` > 0 deliberately breaks the capacity
    rule (negative-control fixture).
    """
    lo = init_sites.min()
    hi = max(init_sites.max(), front0)
    counts = np.zeros(1, dtype=np.int64)
    counts, base = _regrow(counts, lo, lo, hi + 64)
    for i in range(len(init_sites)):
        counts[init_sites[i] - base] += init_counts[i]
    tree = np.zeros(len(counts), dtype=np.int64)
    fenwick_build(counts, tree)
    n = init_counts.sum()
    front = front0
    cap_M = M + capacity_slack

    n_samples = int(horizon / sample_dt) + 1 if sample_dt > 0 and np.isfinite(horizon) else 0
    s_t = np.empty(n_samples)
    s_r = np.empty(n_samples, dtype=np.int64)
    s_eta = np.empty(n_samples, dtype=np.int64)
    s_n = np.empty(n_samples, dtype=np.int64)
    next_sample = 0

    adv_cap = 1024
    adv_times = np.empty(adv_cap)
    n_adv = 0

    kinds = np.zeros(5, dtype=np.int64)
    violations = np.zeros(4, dtype=np.int64)  # capacity, monotone, front-support, total
    t = 0.0
    c = 0
    ev = 0
    cause = STOP_HORIZON
    if stop_front >= 0 and front >= stop_front:
        cause = STOP_FRONT
    else:
        while True:
            if n == 0:
                cause = STOP_EXTINCT
                break
            if ev >= max_events:
                cause = STOP_BUDGET
                break
            u = to_unit(draw(key, c))
            c += 1
            dt = -math.log(u) / (2.0 * n)
            t_new = t + dt
            while next_sample < n_samples and next_sample * sample_dt < t_new:
                s_t[next_sample] = next_sample * sample_dt
                s_r[next_sample] = front
                s_eta[next_sample] = counts[front - base]
                s_n[next_sample] = n
                next_sample += 1
            if t_new > horizon:
                cause = STOP_HORIZON
                t = horizon
                break
            t = t_new
            k, d = pick_particle(draw(key, c), n)
            c += 1
            xi = fenwick_find(tree, k)
            x = xi + base
            y = x + d
            ev += 1
            if y - base < 0 or y - base >= len(counts):
                counts, base = _regrow(counts, base, y - 64, y + 64)
                tree = np.zeros(len(counts), dtype=np.int64)
                fenwick_build(counts, tree)
                xi = x - base
            yi = y - base
            if y > front:
                counts[xi] -= 1
                fenwick_add(tree, xi, -1)
                front = y
                counts[yi] += a
                fenwick_add(tree, yi, a)
                n += a - 1
                kinds[ADVANCE] += 1
                if n_adv == adv_cap:
                    tmp = np.empty(2 * adv_cap)
                    tmp[:adv_cap] = adv_times
                    adv_times = tmp
                    adv_cap *= 2
                adv_times[n_adv] = t
                n_adv += 1
                if check and counts[yi] != a:
                    violations[2] += 1
                if check and front - 1 != x:
                    violations[1] += 1
                if stop_front >= 0 and front >= stop_front:
                    cause = STOP_FRONT
                    break
            elif depth >= 0 and y < front - depth and n > 1:
                counts[xi] -= 1
                fenwick_add(tree, xi, -1)
                n -= 1
                kinds[RETIRE] += 1
            elif counts[yi] >= cap_M:
                counts[xi] -= 1
                fenwick_add(tree, xi, -1)
                n -= 1
                kinds[KILL] += 1
            else:
                counts[xi] -= 1
                fenwick_add(tree, xi, -1)
                counts[yi] += 1
                fenwick_add(tree, yi, 1)
                kinds[RIGHT if d > 0 else LEFT] += 1
            if check:
                if counts[yi] > M:
                    violations[0] += 1
                if counts[xi] < 0:
                    violations[3] += 1
                if (ev & 1023) == 0:
                    tot = 0
                    for i in range(len(counts)):
                        if counts[i] > M or counts[i] < 0:
                            violations[0] += 1
                        if i + base > front and counts[i] != 0:
                            violations[3] += 1
                        tot += counts[i]
                    if tot != n:
                        violations[3] += 1
    while next_sample < n_samples and next_sample * sample_dt <= horizon:
        s_t[next_sample] = next_sample * sample_dt
        s_r[next_sample] = front
        s_eta[next_sample] = counts[front - base]
        s_n[next_sample] = n
        next_sample += 1
    sites = np.nonzero(counts)[0]
    final_sites = sites + base
    final_counts = counts[sites]
    return (t, front, cause, ev, c, kinds, violations, adv_times[:n_adv],
            s_t[:next_sample], s_r[:next_sample], s_eta[:next_sample], s_n[:next_sample],
            final_sites, final_counts)


@njit(cache=True)
def batch_fronts(a, M, master, first, n, init_sites, init_counts, front0, horizon, depth):
    """Fronts at ``horizon`` of replicas ``first .. first+n-1`` of ``master``.

    Replica ``j`` uses exactly the stream a single ``run`` with seed
    ``replica_seed(master, j)`` would use.
    """
    out = np.empty(n, dtype=np.int64)
    for j in range(n):
        seed = stream_key(master, -1, first + j)
        key = stream_key(seed, -2, 0)
        res = run_fast_kernel(a, M, key, init_sites, init_counts, front0, horizon, -1,
                              1 << 62, depth, 0.0, False, 0)
        out[j] = res[1]
    return out
