"""Compiled labeled/enlarged-process engine driven by the shared walk paths.

Every tracked label (live or ghost) has one entry in a binary heap keyed by
(next event time, label id).  Label ids are assigned in increasing label
order, so id order is the lexicographic label order and ties resolve by it.

Optionally the engine watches, for every newly ignited front site ``y``, the
old particles (birth site below ``y``, alive when ``y`` ignited, minus the
particle that ignited it) and records the first time one of them reaches the
line ``y + floor(alpha_p * (t - T_y))`` within ``w_monitor`` of ``T_y``.
"""

import math

import numpy as np
from numba import njit

from .paths import label_key, path_event
from ._fast import (ADVANCE, KILL, LEFT, RETIRE, RIGHT, STOP_BUDGET, STOP_EXTINCT,
                    STOP_FRONT, STOP_HORIZON)

LIVE, GHOST, RETIRED = 0, 1, 2


@njit(cache=True)
def _less(t1, i1, t2, i2):
    return t1 < t2 or (t1 == t2 and i1 < i2)


@njit(cache=True)
def _push(ht, hid, size, t, i):
    j = size
    while j > 0:
        p = (j - 1) >> 1
        if _less(ht[p], hid[p], t, i):
            break
        ht[j] = ht[p]
        hid[j] = hid[p]
        j = p
    ht[j] = t
    hid[j] = i
    return size + 1


@njit(cache=True)
def _replace_top(ht, hid, size, t, i):
    j = 0
    while True:
        c = 2 * j + 1
        if c >= size:
            break
        if c + 1 < size and _less(ht[c + 1], hid[c + 1], ht[c], hid[c]):
            c += 1
        if _less(ht[c], hid[c], t, i):
            ht[j] = ht[c]
            hid[j] = hid[c]
            j = c
        else:
            break
    ht[j] = t
    hid[j] = i


@njit(cache=True)
def _pop(ht, hid, size):
    size -= 1
    if size > 0:
        _replace_top(ht, hid, size, ht[size], hid[size])
    return size


@njit(cache=True)
def _grow_f(arr, n, fill):
    new = np.full(n, fill)
    new[:len(arr)] = arr
    return new


@njit(cache=True)
def _grow_i(arr, n, fill):
    new = np.full(n, fill, dtype=arr.dtype)
    new[:len(arr)] = arr
    return new


@njit(cache=True)
def _site_remove(site_ids, site_cnt, s, lid):
    c = site_cnt[s]
    for k in range(c):
        if site_ids[s, k] == lid:
            site_ids[s, k] = site_ids[s, c - 1]
            site_cnt[s] = c - 1
            return


@njit(cache=True)
def _regrow_sites(site_ids, site_cnt, sbase, lo_site, hi_site):
    old_lo = sbase
    old_hi = sbase + len(site_cnt) - 1
    lo = min(old_lo, lo_site)
    hi = max(old_hi, hi_site)
    span = hi - lo + 1
    cap = 1
    while cap < 2 * span:
        cap *= 2
    new_base = lo - (cap - span) // 4
    ids = np.zeros((cap, site_ids.shape[1]), dtype=np.int64)
    cnt = np.zeros(cap, dtype=np.int64)
    off = old_lo - new_base
    ids[off:off + len(site_cnt)] = site_ids
    cnt[off:off + len(site_cnt)] = site_cnt
    return ids, cnt, new_base


@njit(cache=True)
def coupled_kernel(a, M, seed, init_x, init_i, init_pos, front0, horizon, stop_front,
                   max_events, depth, alpha_p, w_monitor, check, capacity_slack, log_cap):
    n0 = len(init_x)
    cap = 64
    while cap < 2 * n0 + 2 * a:
        cap *= 2
    lab_x = np.zeros(cap, dtype=np.int64)
    lab_i = np.zeros(cap, dtype=np.int64)
    lab_key = np.zeros(cap, dtype=np.uint64)
    lab_birth = np.zeros(cap)
    lab_kill = np.full(cap, np.inf)
    lab_pos = np.zeros(cap, dtype=np.int64)
    lab_j = np.zeros(cap, dtype=np.int64)
    lab_step = np.zeros(cap, dtype=np.int64)
    lab_status = np.zeros(cap, dtype=np.int64)
    ht = np.zeros(cap)
    hid = np.zeros(cap, dtype=np.int64)
    size = 0
    kill_at = M + capacity_slack

    lo = init_pos.min()
    hi = max(init_pos.max(), front0)
    site_ids = np.zeros((1, kill_at + 2), dtype=np.int64)
    site_cnt = np.zeros(1, dtype=np.int64)
    site_ids, site_cnt, sbase = _regrow_sites(site_ids, site_cnt, lo, lo - 64, hi + 64)

    nlab = 0
    for k in range(n0):
        lid = nlab
        nlab += 1
        lab_x[lid] = init_x[k]
        lab_i[lid] = init_i[k]
        lab_key[lid] = label_key(seed, init_x[k], init_i[k])
        lab_pos[lid] = init_pos[k]
        h, s = path_event(lab_key[lid], 0)
        lab_step[lid] = s
        lab_j[lid] = 0
        size = _push(ht, hid, size, h, lid)
        si = init_pos[k] - sbase
        site_ids[si, site_cnt[si]] = lid
        site_cnt[si] += 1

    adv_cap = 256
    adv_t = np.zeros(adv_cap)
    adv_jumper = np.zeros(adv_cap, dtype=np.int64)
    vrel = np.full(adv_cap, np.inf)
    n_adv = 0
    ylo = 0  # index into adv arrays of the oldest monitor still open

    log_t = np.zeros(log_cap)
    log_kind = np.zeros(log_cap, dtype=np.int64)
    log_id = np.zeros(log_cap, dtype=np.int64)
    log_site = np.zeros(log_cap, dtype=np.int64)
    n_log = 0

    kinds = np.zeros(5, dtype=np.int64)
    violations = np.zeros(4, dtype=np.int64)  # capacity, monotone, front-support, ghost
    n_live = n0
    front = front0
    t = 0.0
    ev = 0
    cause = STOP_HORIZON
    done = stop_front >= 0 and front >= stop_front
    if done:
        cause = STOP_FRONT
    while not done:
        if size == 0:
            cause = STOP_EXTINCT
            break
        if ev >= max_events:
            cause = STOP_BUDGET
            break
        tn = ht[0]
        lid = hid[0]
        if tn > horizon:
            cause = STOP_HORIZON
            t = horizon
            break
        t = tn
        ev += 1
        d = lab_step[lid]
        xo = lab_pos[lid]
        y = xo + d
        st = lab_status[lid]
        kind = RIGHT if d > 0 else LEFT
        retire = depth >= 0 and y < front - depth and (st != LIVE or n_live > 1)
        if st == LIVE:
            if y - sbase < 0 or y - sbase >= len(site_cnt):
                site_ids, site_cnt, sbase = _regrow_sites(site_ids, site_cnt, sbase, y - 64, y + 64)
            _site_remove(site_ids, site_cnt, xo - sbase, lid)
            if retire:
                lab_status[lid] = RETIRED
                n_live -= 1
                kind = RETIRE
            else:
                yi = y - sbase
                site_ids[yi, site_cnt[yi]] = lid
                site_cnt[yi] += 1
                if y > front:
                    kind = ADVANCE
                elif site_cnt[yi] > kill_at:
                    victim = site_ids[yi, 0]
                    for k in range(1, site_cnt[yi]):
                        if site_ids[yi, k] < victim:
                            victim = site_ids[yi, k]
                    _site_remove(site_ids, site_cnt, yi, victim)
                    lab_status[victim] = GHOST
                    lab_kill[victim] = t
                    n_live -= 1
                    kinds[KILL] += 1
                    if n_log < log_cap:
                        log_t[n_log] = t
                        log_kind[n_log] = KILL
                        log_id[n_log] = victim
                        log_site[n_log] = y
                        n_log += 1
                if check and site_cnt[yi] > M:
                    violations[0] += 1
        elif retire:
            lab_status[lid] = RETIRED
            kind = RETIRE
        kinds[kind] += 1
        if n_log < log_cap:
            log_t[n_log] = t
            log_kind[n_log] = kind
            log_id[n_log] = lid
            log_site[n_log] = y
            n_log += 1
        if kind == RETIRE:
            size = _pop(ht, hid, size)
            continue
        lab_pos[lid] = y
        lab_j[lid] += 1
        h, s = path_event(lab_key[lid], lab_j[lid])
        lab_step[lid] = s
        _replace_top(ht, hid, size, t + h, lid)

        if kind == ADVANCE:
            if check and y != front + 1:
                violations[1] += 1
            front = y
            if n_adv == adv_cap:
                adv_t = _grow_f(adv_t, 2 * adv_cap, 0.0)
                adv_jumper = _grow_i(adv_jumper, 2 * adv_cap, 0)
                vrel = _grow_f(vrel, 2 * adv_cap, np.inf)
                adv_cap *= 2
            adv_t[n_adv] = t
            adv_jumper[n_adv] = lid
            n_adv += 1
            if nlab + a > len(lab_x):
                nc = 2 * len(lab_x)
                lab_x = _grow_i(lab_x, nc, 0)
                lab_i = _grow_i(lab_i, nc, 0)
                lab_key = _grow_i(lab_key, nc, np.uint64(0))
                lab_birth = _grow_f(lab_birth, nc, 0.0)
                lab_kill = _grow_f(lab_kill, nc, np.inf)
                lab_pos = _grow_i(lab_pos, nc, 0)
                lab_j = _grow_i(lab_j, nc, 0)
                lab_step = _grow_i(lab_step, nc, 0)
                lab_status = _grow_i(lab_status, nc, 0)
                ht = _grow_f(ht, nc, 0.0)
                hid = _grow_i(hid, nc, 0)
            n_live += a - 1
            yi = y - sbase
            for i in range(1, a):
                nid = nlab
                nlab += 1
                lab_x[nid] = y
                lab_i[nid] = i
                lab_key[nid] = label_key(seed, y, i)
                lab_birth[nid] = t
                lab_pos[nid] = y
                h0, s0 = path_event(lab_key[nid], 0)
                lab_step[nid] = s0
                size = _push(ht, hid, size, t + h0, nid)
                site_ids[yi, site_cnt[yi]] = nid
                site_cnt[yi] += 1
            if check and site_cnt[yi] != a:
                violations[2] += 1

        if alpha_p > 0.0 and d > 0:
            while ylo < n_adv and adv_t[ylo] < t - w_monitor:
                ylo += 1
            yfirst = max(lab_x[lid] + 1, front0 + 1 + ylo)
            ylast = min(y, front)
            for yy in range(yfirst, ylast + 1):
                k = yy - front0 - 1
                if vrel[k] == np.inf and adv_jumper[k] != lid and lab_kill[lid] > adv_t[k]:
                    if y >= yy + math.floor(alpha_p * (t - adv_t[k])):
                        vrel[k] = t - adv_t[k]

        if stop_front >= 0 and front >= stop_front:
            cause = STOP_FRONT
            break

    if check:
        for s in range(len(site_cnt)):
            if site_cnt[s] > M:
                violations[0] += 1
        for k in range(nlab):
            if lab_status[k] == GHOST and lab_kill[k] == np.inf:
                violations[3] += 1
    return (t, front, cause, ev, kinds, violations,
            adv_t[:n_adv], adv_jumper[:n_adv], vrel[:n_adv],
            lab_x[:nlab], lab_i[:nlab], lab_birth[:nlab], lab_kill[:nlab],
            lab_status[:nlab], lab_pos[:nlab],
            log_t[:n_log], log_kind[:n_log], log_id[:n_log], log_site[:n_log])
