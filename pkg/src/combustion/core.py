"""Combustion process: occupancy view, labeled/enlarged view, and runs.

The pure-Python ``step_fast`` / ``step_coupled`` are readable reference
implementations; ``run`` drives the compiled engines, which consume the same
random streams and reproduce the reference trajectories exactly.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _coupled, _fast
from .paths import Label, label_key, path_event
from .rng import RngCursor, draw, stream_key, to_unit

EVENT_KINDS = ("left-jump", "right-jump", "front-advance", "kill", "retire")


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    a: int = 2
    M: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (2 <= self.a <= self.M):
            raise InvalidParams(f"need 2 <= a <= M, got a={self.a}, M={self.M}")
        if not (0 <= self.seed < 2**64):
            raise InvalidParams("seed must be an unsigned 64-bit integer")

    @property
    def clt_grade(self) -> bool:
        return self.a < self.M and self.M > 8


@dataclass
class Occupancy:
    front: int
    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def count(self, x: int) -> int:
        return self.counts.get(x, 0)

    def check(self, M: int) -> None:
        for x, c in self.counts.items():
            if not 0 <= c <= M:
                raise AssertionError(f"site {x} holds {c} particles (cap {M})")
            if x > self.front and c:
                raise AssertionError(f"particles at {x} beyond front {self.front}")
        if self.total <= 0:
            raise AssertionError("no particles left")

    def sorted_sites(self) -> list[int]:
        return sorted(x for x, c in self.counts.items() if c)

    def copy(self) -> Occupancy:
        return Occupancy(self.front, dict(self.counts))


class Event(NamedTuple):
    time: float
    kind: str
    subject: object
    detail: int


# -- occupancy view ---------------------------------------------------------

def step_fast(state: Occupancy, cursor: RngCursor, a: int, M: int,
              t: float = 0.0, depth: int | None = None) -> tuple[Occupancy, Event]:
    """One event of the generator from time ``t``; returns the new state.

    Draw order (time, then particle and direction) matches the compiled
    engine, so both follow the same trajectory from the same cursor.
    """
    n = state.total
    dt = -math.log(cursor.uniform()) / (2.0 * n)
    k, d = _fast.pick_particle(np.uint64(cursor.bits()), n)
    for x in state.sorted_sites():
        if k < state.counts[x]:
            break
        k -= state.counts[x]
    y = x + d
    new = state.copy()
    new.counts[x] -= 1
    if y > state.front:
        new.front = y
        new.counts[y] = a
        kind = "front-advance"
    elif depth is not None and y < state.front - depth and sum(state.counts.values()) > 1:
        kind = "retire"
    elif state.count(y) >= M:
        kind = "kill"
    else:
        new.counts[y] = new.count(y) + 1
        kind = "right-jump" if d > 0 else "left-jump"
    if new.counts[x] == 0:
        del new.counts[x]
    return new, Event(t + dt, kind, x, y)


# -- labeled / enlarged view ------------------------------------------------

@dataclass
class LabeledState:
    front: int
    live: set[Label]
    positions: dict[Label, int]
    birth_times: dict[Label, float]
    ghosts: dict[Label, int] = field(default_factory=dict)
    kill_times: dict[Label, float] = field(default_factory=dict)
    time: float = 0.0
    # scheduling: heap of (time, label); per-label next event index and step
    _queue: list = field(default_factory=list, repr=False)
    _next: dict = field(default_factory=dict, repr=False)

    @property
    def all_labels(self) -> set[Label]:
        return set(self.live) | set(self.ghosts)

    def position(self, label: Label) -> int:
        return self.positions[label] if label in self.live else self.ghosts[label]

    def live_at(self, z: int) -> list[Label]:
        return [lab for lab in self.live if self.positions[lab] == z]

    def check(self, M: int) -> None:
        if max(lab.birth_site for lab in self.live) != self.front:
            raise AssertionError("front label missing")
        per_site: dict[int, int] = {}
        for lab in self.live:
            per_site[self.positions[lab]] = per_site.get(self.positions[lab], 0) + 1
        if any(c > M for c in per_site.values()):
            raise AssertionError("capacity exceeded")
        if self.live & set(self.ghosts):
            raise AssertionError("label both live and ghost")


def canonical_labels(n: int, front: int, a: int) -> list[Label]:
    """The ``n`` largest labels not exceeding ``(front, a-1)``, decreasing."""
    out = []
    x, i = front, a - 1
    while len(out) < n:
        out.append(Label(x, i))
        i -= 1
        if i == 0:
            x, i = x - 1, a - 1
    return out


def _schedule(state: LabeledState, seed: int, label: Label, t: float, j: int) -> None:
    h, s = path_event(np.uint64(label_key(np.uint64(seed), label.birth_site, label.index)), j)
    state._next[label] = (j, s)
    heapq.heappush(state._queue, (t + h, label))


def init_labeled(occ: Occupancy, a: int, seed: int) -> LabeledState:
    """Decreasing-lexicographic canonical labeling of a finite occupancy."""
    if occ.count(occ.front) < 1:
        raise InvalidParams("the front site must hold at least one particle")
    positions = [x for x in sorted(occ.counts, reverse=True) for _ in range(occ.counts[x])]
    labels = canonical_labels(len(positions), occ.front, a)
    state = LabeledState(front=occ.front, live=set(labels),
                         positions=dict(zip(labels, positions)),
                         birth_times={lab: 0.0 for lab in labels})
    for lab in sorted(labels):
        _schedule(state, seed, lab, 0.0, 0)
    return state


def init_canonical(params: ModelParams, n0: int) -> LabeledState:
    if not 1 <= n0 <= params.M:
        raise InvalidParams(f"n0 must be in 1..{params.M}")
    return init_labeled(Occupancy(0, {0: n0}), params.a, params.seed)


def step_coupled(state: LabeledState, seed: int, a: int, M: int,
                 depth: int | None = None) -> tuple[LabeledState, list[Event]]:
    """Advance to the next jump among live and ghost labels (in place).

    Returns the events produced: the jump itself and, if the destination
    overflows, the kill of the smallest label there.
    """
    t, lab = heapq.heappop(state._queue)
    j, d = state._next[lab]
    live = lab in state.live
    x = state.positions[lab] if live else state.ghosts[lab]
    y = x + d
    state.time = t
    events = []
    if depth is not None and y < state.front - depth and not (live and len(state.live) == 1):
        if live:
            state.live.discard(lab)
            del state.positions[lab]
        else:
            del state.ghosts[lab]
        del state._next[lab]
        return state, [Event(t, "retire", lab, y)]
    if not live:
        state.ghosts[lab] = y
        _schedule(state, seed, lab, t, j + 1)
        return state, [Event(t, "right-jump" if d > 0 else "left-jump", lab, y)]
    state.positions[lab] = y
    _schedule(state, seed, lab, t, j + 1)
    if y > state.front:
        state.front = y
        events.append(Event(t, "front-advance", lab, y))
        for i in range(1, a):
            new = Label(y, i)
            state.live.add(new)
            state.positions[new] = y
            state.birth_times[new] = t
            _schedule(state, seed, new, t, 0)
        return state, events
    events.append(Event(t, "right-jump" if d > 0 else "left-jump", lab, y))
    here = state.live_at(y)
    if len(here) > M:
        victim = min(here)
        state.live.discard(victim)
        state.ghosts[victim] = state.positions.pop(victim)
        state.kill_times[victim] = t
        events.insert(0, Event(t, "kill", victim, y))
    return state, events


def project_counts(state: LabeledState) -> Occupancy:
    counts: dict[int, int] = {}
    for lab in state.live:
        z = state.positions[lab]
        counts[z] = counts.get(z, 0) + 1
    return Occupancy(state.front, counts)


def particle_counts_split(state: LabeledState, r0: int, alive_since: float | None = None):
    """Counts of new-born live (zeta), old live (phi) and old live-or-ghost
    (phi_bar) labels per site, relative to the reference front ``r0``.

    With ``alive_since`` only ghosts killed after that time enter phi_bar,
    i.e. the enlarged process restarted at that time.
    """
    zeta: dict[int, int] = {}
    phi: dict[int, int] = {}
    phi_bar: dict[int, int] = {}
    for lab in state.live:
        z = state.positions[lab]
        target = zeta if lab.birth_site >= r0 else phi
        target[z] = target.get(z, 0) + 1
        if lab.birth_site < r0:
            phi_bar[z] = phi_bar.get(z, 0) + 1
    for lab, z in state.ghosts.items():
        if lab.birth_site < r0 and (alive_since is None or state.kill_times[lab] > alive_since):
            phi_bar[z] = phi_bar.get(z, 0) + 1
    return zeta, phi, phi_bar


# -- runs -------------------------------------------------------------------

@dataclass
class RunSummary:
    params: ModelParams
    mode: str
    stop_cause: str
    time: float
    front: int
    events: int
    event_counts: dict[str, int]
    advance_times: np.ndarray
    samples: np.ndarray | None = None  # rows (t, r_t, eta(t, r_t), live count)
    violations: dict[str, int] = field(default_factory=dict)
    depth: int | None = None
    final_counts: dict[int, int] = field(default_factory=dict)
    coupled: dict | None = None

    def front_at(self, t: float) -> int:
        """r_t reconstructed from the front-advance times."""
        r0 = self.front - len(self.advance_times)
        return r0 + int(np.searchsorted(self.advance_times, t, side="right"))

    def to_record(self, with_path: bool = False) -> dict:
        rec = {
            "params": {"a": self.params.a, "M": self.params.M},
            "seed": self.params.seed,
            "mode": self.mode,
            "stop": self.stop_cause,
            "time": self.time,
            "front": self.front,
            "events": self.events,
            "event_counts": self.event_counts,
            "depth": self.depth,
        }
        if self.samples is not None:
            rec["samples"] = [[float(t), int(r)] for t, r in self.samples[:, :2]]
        if with_path:
            rec["advance_times"] = [float(t) for t in self.advance_times]
        return rec

    def to_json(self, with_path: bool = False) -> str:
        return json.dumps(self.to_record(with_path), sort_keys=True)


@dataclass(frozen=True)
class Stop:
    horizon: float = math.inf
    front_hit: int | None = None
    max_events: int = 10**13

    def __post_init__(self):
        if self.horizon < 0 or (math.isinf(self.horizon) and self.front_hit is None):
            raise InvalidParams("need a finite horizon >= 0 or a front-hit target")


def _counts_arrays(occ: Occupancy):
    sites = np.array(sorted(occ.counts), dtype=np.int64)
    return sites, np.array([occ.counts[x] for x in sites], dtype=np.int64)


def run(params: ModelParams, init: Occupancy | int, mode: str = "fast", stop: Stop = Stop(1.0),
        depth: int | None = None, sample_dt: float = 0.0, check: bool = False,
        alpha_prime: float = 0.0, monitor_window: float = 0.0, capacity_slack: int = 0,
        log_events: int = 0) -> RunSummary:
    """Run one replica in ``fast`` (occupancy) or ``coupled`` (labeled) mode.

    ``init`` is an occupancy or a particle count at site 0.  ``depth`` enables
    the far-field cutoff (particles jumping more than ``depth`` sites behind
    the front are retired, never the last live one); ``None`` runs the exact
    process.
    """
    occ = Occupancy(0, {0: init}) if isinstance(init, int) else init
    if isinstance(init, int) and not 1 <= init <= params.M:
        raise InvalidParams(f"n0 must be in 1..{params.M}")
    occ.check(params.M)
    dep = -1 if depth is None else int(depth)
    stop_front = -1 if stop.front_hit is None else int(stop.front_hit)
    seed = np.uint64(params.seed)
    if mode == "fast":
        key = np.uint64(stream_key(seed, -2, 0))
        sites, counts = _counts_arrays(occ)
        (t, front, cause, ev, _, kinds, viol, adv, s_t, s_r, s_eta, s_n, fs, fc) = _fast.run_fast_kernel(
            params.a, params.M, key, sites, counts, occ.front, float(stop.horizon), stop_front,
            stop.max_events, dep, float(sample_dt), check, capacity_slack)
        samples = np.column_stack([s_t, s_r, s_eta, s_n]) if sample_dt > 0 else None
        coupled = None
        final = {int(x): int(c) for x, c in zip(fs, fc)}
    elif mode == "coupled":
        state = init_labeled(occ, params.a, params.seed)
        labs = sorted(state.live)
        ix = np.array([lab.birth_site for lab in labs], dtype=np.int64)
        ii = np.array([lab.index for lab in labs], dtype=np.int64)
        ip = np.array([state.positions[lab] for lab in labs], dtype=np.int64)
        out = _coupled.coupled_kernel(
            params.a, params.M, seed, ix, ii, ip, occ.front, float(stop.horizon), stop_front,
            stop.max_events, dep, float(alpha_prime), float(monitor_window), check,
            capacity_slack, log_events)
        (t, front, cause, ev, kinds, viol, adv, jumper, vrel,
         lx, li, lb, lk, ls, lp, g_t, g_k, g_i, g_s) = out
        samples = None
        coupled = {"jumper": jumper, "v_rel": vrel, "label_site": lx, "label_index": li,
                   "birth": lb, "kill": lk, "status": ls, "position": lp,
                   "log": (g_t, g_k, g_i, g_s)}
        live = ls == _coupled.LIVE
        final = {}
        for z in lp[live]:
            final[int(z)] = final.get(int(z), 0) + 1
    else:
        raise InvalidParams(f"unknown mode {mode!r}")
    viol_names = ("capacity", "monotone", "front_support", "consistency")
    return RunSummary(
        params=params, mode=mode, stop_cause=_fast.STOP_NAMES[cause], time=float(t),
        front=int(front), events=int(ev),
        event_counts={k: int(v) for k, v in zip(EVENT_KINDS, kinds)},
        advance_times=np.asarray(adv), samples=samples,
        violations={k: int(v) for k, v in zip(viol_names, viol)} if check else {},
        depth=depth, final_counts=final, coupled=coupled)


def merge_summaries(runs: list[RunSummary]) -> list[RunSummary]:
    """Canonical (order-independent) merge of replica summaries."""
    return sorted(runs, key=lambda s: s.params.seed)
