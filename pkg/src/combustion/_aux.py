"""Compiled auxiliary-front primitives (unshifted walks, restarted per level)."""

import numpy as np
from numba import njit

from .paths import first_hit, label_key


@njit(cache=True)
def nu_value(seed, r, k, a, M, cap):
    """Waiting time of level ``k`` for the auxiliary front started at ``r``.

    Minimum over the active labels of the unshifted hitting time of ``r + k``;
    ``inf`` if it exceeds ``cap``.  Caps are doubled from a small value so a
    heavy-tailed nearest walk never gets scanned far past the minimum.
    """
    z = r + k - 1
    target = r + k
    trial = 1.0
    while True:
        bound = min(trial, cap)
        best = np.inf
        count = 0
        x = z
        i = a - 1
        while count < M and x >= r:
            h = first_hit(label_key(seed, x, i), x, target, bound if best == np.inf else best)
            if h < best:
                best = h
            count += 1
            i -= 1
            if i == 0:
                i = a - 1
                x -= 1
        if best < np.inf or bound >= cap:
            return best
        trial *= 4.0


@njit(cache=True)
def aux_nus(seed, r, a, M, horizon):
    """All waiting times whose partial sums stay within ``horizon``.

    The last entry is ``inf`` when the level after them is censored.
    """
    out = np.empty(64)
    n = 0
    s = 0.0
    k = 1
    while True:
        nu = nu_value(seed, r, k, a, M, horizon - s)
        if n == len(out):
            tmp = np.empty(2 * n)
            tmp[:n] = out
            out = tmp
        out[n] = nu
        n += 1
        if nu == np.inf:
            break
        s += nu
        k += 1
    return out[:n]


@njit(cache=True)
def first_line_failure(seed, r, a, M, alpha_p, window):
    """Relative time at which the auxiliary front from ``r`` drops below
    ``floor(alpha_p * t)``; ``inf`` if not by ``window``."""
    s = 0.0
    m = 1
    while m / alpha_p <= window:
        cap = m / alpha_p - s
        nu = nu_value(seed, r, m, a, M, cap)
        if nu == np.inf:
            return m / alpha_p
        s += nu
        m += 1
    return np.inf


@njit(cache=True)
def nu_samples(seed, a, M, k, n, cap):
    """``n`` independent copies of the level-``k`` waiting time, one per origin
    ``r = j * spacing`` far enough apart that no label is shared."""
    out = np.empty(n)
    spacing = k + 2 * M + 2
    for j in range(n):
        out[j] = nu_value(seed, j * spacing, k, a, M, cap)
    return out


@njit(cache=True)
def front_at_horizon(seed, r, a, M, horizon):
    s = 0.0
    k = 1
    while True:
        nu = nu_value(seed, r, k, a, M, horizon - s)
        if nu == np.inf:
            return k - 1
        s += nu
        k += 1
