"""Regeneration structure on coupled sample paths.

At a candidate time ``S`` (the front first reaching ``R + L``) two failure
detectors are launched from ``r_S``:

* ``U``: the auxiliary front from ``r_S`` (labels born at or above ``r_S``,
  so disjoint from everything that existed before ``S``) falls below the
  line ``floor(alpha' t)``;
* ``V``: some older particle, live at ``S`` or killed later, reaches that
  line.

If neither fires within the confirmation window ``W`` the candidate is
accepted as a regeneration time; otherwise the front value at the failure
becomes the new ``R`` and the cascade continues.  "Never fires" cannot be
observed in finite time, so the window is a surrogate whose effect is
measured by re-running the decision with ``2W``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import _aux
from .auxiliary import AuxRun
from .core import LabeledState, ModelParams, RunSummary, Stop, run
from .paths import Censored, Label


@dataclass(frozen=True)
class RenewalParams:
    alpha_prime: float
    L: int
    confirm_window: float
    horizon: float = math.inf

    def __post_init__(self):
        if not self.alpha_prime > 0:
            raise ValueError("alpha_prime must be positive")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if not 0 < self.confirm_window <= self.horizon:
            raise ValueError("need 0 < W <= horizon")

    @classmethod
    def auto(cls, alpha_hat: float, M: int, horizon: float = math.inf) -> RenewalParams:
        """Defaults: half the auxiliary speed, ``L = M``, ``W = 200 / alpha``."""
        return cls(0.5 * alpha_hat, M, 200.0 / alpha_hat, horizon)

    def check_against(self, alpha_hat: float) -> None:
        if not self.alpha_prime < alpha_hat:
            raise ValueError(f"alpha_prime={self.alpha_prime} must be below alpha={alpha_hat}")


StopResult = float | Censored


def detect_U(aux: AuxRun, r: int, p: RenewalParams) -> StopResult:
    """First time the auxiliary front drops below ``r + floor(alpha' t)``.

    The front is right-continuous and the line only moves at ``m / alpha'``,
    so a crossing can only start at one of those times: ``U = m / alpha'``
    for the first ``m`` whose ``m``-th step comes strictly later.
    """
    if aux.origin != r:
        raise ValueError("auxiliary run must start at r")
    limit = min(p.horizon, aux.horizon)
    steps = aux.step_times
    m = 1
    while m / p.alpha_prime <= limit:
        t_line = m / p.alpha_prime
        if m > len(steps) or steps[m - 1] > t_line:
            return t_line
        m += 1
    return Censored(limit)


def detect_U_paths(seed: int, r: int, params: ModelParams, p: RenewalParams,
                   window: float | None = None) -> StopResult:
    """``detect_U`` computed straight from the path store (compiled)."""
    w = p.confirm_window if window is None else window
    u = _aux.first_line_failure(np.uint64(seed), r, params.a, params.M, p.alpha_prime, float(w))
    return Censored(w) if math.isinf(u) else float(u)


def detect_V(stream: Iterable[tuple[float, LabeledState]], r0: int, p: RenewalParams,
             exclude: Iterable[Label] = (), start: float | None = None) -> StopResult:
    """First time an older label reaches the line ``r0 + floor(alpha' t)``.

    ``stream`` yields ``(time, state)`` pairs from the restart time on (the
    first pair is the restart itself unless ``start`` is given).  Monitored
    labels have birth site below ``r0``; ghosts count if they were killed
    after the restart.  Labels in ``exclude`` are ignored.
    """
    skip = set(exclude)
    t0 = start
    last = None
    for t, state in stream:
        if t0 is None:
            t0 = t
        rel = t - t0
        if rel > p.horizon:
            return Censored(p.horizon)
        last = rel
        line = r0 + math.floor(p.alpha_prime * rel)
        for lab in state.live:
            if lab.birth_site < r0 and lab not in skip and state.positions[lab] >= line:
                return rel
        for lab, z in state.ghosts.items():
            if (lab.birth_site < r0 and lab not in skip and state.kill_times[lab] > t0
                    and z >= line):
                return rel
    return Censored(p.horizon if last is None else last)


def coupled_stream(state: LabeledState, seed: int, params: ModelParams, until: float,
                   depth: int | None = None) -> Iterator[tuple[float, LabeledState]]:
    """The restart state and then the state after every event up to ``until``."""
    from .core import step_coupled

    yield state.time, state
    while state._queue and state._queue[0][0] <= until:
        state, _ = step_coupled(state, seed, params.a, params.M, depth)
        yield state.time, state


@dataclass
class RegenRecord:
    n: int
    kappa: float
    r_at_kappa: int
    k_index: int
    confirmed_window: float
    revoked: bool | None = None  # would a 2W window have rejected it? None if unobserved

    def to_record(self) -> dict:
        return {"n": self.n, "kappa": self.kappa, "r_at_kappa": self.r_at_kappa,
                "k_index": self.k_index, "confirmed_window": self.confirmed_window,
                "revoked": self.revoked}


@dataclass
class Trial:
    """One candidate ``S_k`` of the cascade."""

    s: float
    r: int
    u: float  # relative failure times, inf when not seen within 2W
    v: float

    @property
    def d(self) -> float:
        return min(self.u, self.v)


@dataclass
class ScanResult:
    records: list[RegenRecord]
    trials: list[Trial]
    params: RenewalParams
    censored_at: float
    reason: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def revocations(self) -> tuple[int, int]:
        """(revoked, checked) among records whose 2W window was observed."""
        checked = [r.revoked for r in self.records if r.revoked is not None]
        return sum(checked), len(checked)


class NoRegeneration(RuntimeError):
    pass


def regeneration_scan(summary: RunSummary, p: RenewalParams, seed: int | None = None,
                      require: bool = False) -> ScanResult:
    """Run the cascade over a coupled run that monitored older particles.

    The run must have been made with ``alpha_prime = p.alpha_prime`` and a
    monitor window of at least ``2W``.  ``U`` is evaluated from the path store
    (it only involves labels born at or after the candidate time).
    """
    if summary.mode != "coupled" or summary.coupled is None or "v_rel" not in summary.coupled:
        raise ValueError("regeneration_scan needs a coupled run")
    params = summary.params
    seed = params.seed if seed is None else seed
    W = p.confirm_window
    adv = summary.advance_times
    vrel = summary.coupled["v_rel"]
    front0 = summary.front - len(adv)
    t_end = summary.time

    def hit_time(y: int) -> float:
        return 0.0 if y <= front0 else float(adv[y - front0 - 1])

    records: list[RegenRecord] = []
    trials: list[Trial] = []
    R = front0
    k = 0
    reason = "horizon"
    censored_at = t_end
    while True:
        y = R + p.L
        if y > summary.front:
            censored_at = t_end
            reason = "front-not-reached"
            break
        s = hit_time(y)
        if s + W > t_end:
            censored_at = s
            reason = "window-not-observed"
            break
        k += 1
        u = _aux.first_line_failure(np.uint64(seed), y, params.a, params.M, p.alpha_prime, 2 * W)
        v = float(vrel[y - front0 - 1]) if y > front0 else math.inf
        tr = Trial(s, y, float(u), v)
        trials.append(tr)
        if tr.d > W:
            seen_2w = s + 2 * W <= t_end
            records.append(RegenRecord(len(records) + 1, s, y, k, min(t_end - s, 2 * W),
                                       (tr.d <= 2 * W) if seen_2w else None))
            R = y
            k = 0
        else:
            R = summary.front_at(s + tr.d)
    if require and not records:
        raise NoRegeneration(f"no regeneration before t={t_end} ({len(trials)} candidates)")
    diag = {"candidates": len(trials), "confirmed": len(records), "reason": reason,
            "open_candidates": k}
    return ScanResult(records, trials, p, censored_at, reason, diag)


def increments(records: list[RegenRecord]) -> np.ndarray:
    """Rows ``(kappa_{n+1} - kappa_n, r_{kappa_{n+1}} - r_{kappa_n})``."""
    if len(records) < 2:
        return np.empty((0, 2))
    k = np.array([r.kappa for r in records])
    x = np.array([r.r_at_kappa for r in records], dtype=float)
    return np.column_stack([np.diff(k), np.diff(x)])


def regen_run(params: ModelParams, p: RenewalParams, horizon: float, n0: int | None = None,
              depth: int | None = 60) -> tuple[RunSummary, ScanResult]:
    """Coupled run with older-particle monitoring followed by the scan."""
    n0 = params.a - 1 if n0 is None else n0
    summary = run(params, n0, mode="coupled", stop=Stop(horizon), depth=depth,
                  alpha_prime=p.alpha_prime, monitor_window=2 * p.confirm_window)
    return summary, regeneration_scan(summary, p)


def records_jsonl(seed: int, scan: ScanResult) -> str:
    lines = [json.dumps({"seed": seed, **r.to_record()}, sort_keys=True) for r in scan.records]
    return "".join(line + "\n" for line in lines)
