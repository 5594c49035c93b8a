"""Auxiliary (slower) front built from fixed finite families of walks.

Level ``k`` of the front started at ``r`` waits for the first of the walks in
``active_set(r, r + k - 1)`` to reach ``r + k``.  The walks are read from the
shared path store *unshifted*: each starts at its birth site at time zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _aux
from .core import ModelParams, Stop, run
from .paths import Censored, Label
from .rng import replica_seed


def active_set(r: int, z: int, params: ModelParams) -> list[Label]:
    """The labels among the ``M`` largest not exceeding ``(z, a-1)`` with
    birth site at least ``r``, in increasing order."""
    if z < r:
        raise ValueError("need z >= r")
    out = []
    x, i = z, params.a - 1
    while len(out) < params.M and x >= r:
        out.append(Label(x, i))
        i -= 1
        if i == 0:
            x, i = x - 1, params.a - 1
    return out[::-1]


def nu(k: int, r: int, params: ModelParams, horizon: float) -> float | Censored:
    if k < 1:
        raise ValueError("k must be >= 1")
    v = _aux.nu_value(np.uint64(params.seed), r, k, params.a, params.M, float(horizon))
    return Censored(horizon) if math.isinf(v) else float(v)


@dataclass
class AuxRun:
    origin: int
    nus: np.ndarray  # finite waiting times, in order
    horizon: float

    @property
    def step_times(self) -> np.ndarray:
        return np.cumsum(self.nus)

    def front_at(self, t: float) -> int:
        if t < 0:
            raise ValueError("t must be non-negative")
        return self.origin + int(np.searchsorted(self.step_times, t, side="right"))

    def __call__(self, t: float) -> int:
        return self.front_at(t)


def aux_front(r: int, params: ModelParams, horizon: float) -> AuxRun:
    nus = _aux.aux_nus(np.uint64(params.seed), r, params.a, params.M, float(horizon))
    return AuxRun(origin=r, nus=nus[np.isfinite(nus)], horizon=float(horizon))


@dataclass
class AlphaEstimate:
    a: int
    M: int
    horizon: float
    replicas: int
    alpha_hat: float
    stderr: float
    origin: int = 0

    def to_record(self) -> dict:
        return {"a": self.a, "M": self.M, "horizon": self.horizon, "replicas": self.replicas,
                "alpha_hat": self.alpha_hat, "stderr": self.stderr}

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def alpha_samples(params: ModelParams, horizon: float, replicas: int, origin: int = 0,
                  first_replica: int = 0) -> np.ndarray:
    """``r~_T / T`` for replicas seeded from ``params.seed`` as master seed."""
    out = np.empty(replicas)
    for j in range(replicas):
        s = np.uint64(replica_seed(params.seed, first_replica + j))
        out[j] = _aux.front_at_horizon(s, origin, params.a, params.M, float(horizon)) / horizon
    return out


def estimate_alpha(params: ModelParams, horizon: float, replicas: int, origin: int = 0,
                   first_replica: int = 0) -> AlphaEstimate:
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    x = alpha_samples(params, horizon, replicas, origin, first_replica)
    return AlphaEstimate(params.a, params.M, float(horizon), replicas, float(x.mean()),
                         float(x.std(ddof=1) / math.sqrt(replicas)), origin)


@dataclass
class CouplingReport:
    """Outcome of comparing one labeled run with the auxiliary front from 0."""

    levels: int
    rho_violations: int
    front_violations: int
    max_excess: float

    @property
    def ok(self) -> bool:
        return self.rho_violations == 0 and self.front_violations == 0


def coupling_check(params: ModelParams, horizon: float, depth: int | None = None,
                   tol: float = 1e-9) -> CouplingReport:
    """Run the labeled process from ``a-1`` particles at 0 and compare it,
    path by path, with the auxiliary front driven by the same walks.

    Two things are checked: each inter-advance time of the true front is at
    most the matching auxiliary waiting time, and the auxiliary front never
    leads the true front (at every advance time of either one).
    """
    summary = run(params, params.a - 1, mode="coupled", stop=Stop(horizon), depth=depth)
    adv = summary.advance_times
    rho = np.diff(np.concatenate([[0.0], adv]))
    aux = aux_front(0, params, horizon)
    n = min(len(rho), len(aux.nus))
    excess = rho[:n] - aux.nus[:n]
    rho_bad = int(np.sum(excess > tol))
    # r~ <= r at every jump of either front: the k-th aux step cannot precede
    # the k-th true advance, and the aux front cannot have more steps.
    aux_times = aux.step_times
    front_bad = int(np.sum(aux_times[:n] < adv[:n] - tol)) + max(0, len(aux_times) - len(adv))
    return CouplingReport(levels=n, rho_violations=rho_bad, front_violations=front_bad,
                          max_excess=float(excess.max()) if n else 0.0)
