"""Verification checks shared by ``verify`` and the acceptance suite.

Each check returns a ``Check`` with the measured values next to the
tolerance it was judged against.  Sample sizes take a ``scale`` factor so
the same checks serve quick smoke runs and full-size verification.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _aux, _fast
from .auxiliary import coupling_check
from .core import (ModelParams, Occupancy, Stop, init_canonical, particle_counts_split,
                   project_counts, run, step_coupled)
from .estimators import iid_check, tail_fit
from .oracles import (exact_small_ctmc, line_hit_bounds, line_hit_count, poisson_front_bound,
                      rate_I, theta_c, v_escape_bound, worst_case_v_escapes)
from .rng import replica_seed


@dataclass
class Check:
    name: str
    passed: bool
    measured: dict
    tolerance: str
    seconds: float = 0.0
    notes: list[str] = field(default_factory=list)

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {vals}  [{self.tolerance}]"

    def to_record(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": self.measured,
                "tolerance": self.tolerance, "seconds": round(self.seconds, 3)}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        chk = fn(*args, **kw)
        chk.seconds = time.perf_counter() - t0
        return chk
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _n(base: int, scale: float, floor: int = 10) -> int:
    return max(floor, int(round(base * scale)))


# -- invariants -------------------------------------------------------------

@_timed
def invariants(events: int = 10**6, a: int = 2, M: int = 10, seed: int = 1,
               capacity_slack: int = 0) -> Check:
    """Capacity, front monotonicity and front support, checked on every event
    of an exact run of both engines."""
    p = ModelParams(a, M, seed)
    fast = run(p, 1, "fast", Stop(1e12, None, events), check=True, capacity_slack=capacity_slack)
    coup = run(p, 1, "coupled", Stop(1e12, None, events // 4), check=True,
               capacity_slack=capacity_slack)
    adv_ok = all(s.event_counts["front-advance"] == s.front for s in (fast, coup))
    viol = {f"fast_{k}": v for k, v in fast.violations.items()}
    viol.update({f"coupled_{k}": v for k, v in coup.violations.items()})
    total = sum(viol.values()) + (0 if adv_ok else 1)
    return Check("invariants", total == 0,
                 {"events": fast.events + coup.events, "violations": total, **viol},
                 "zero violations")


@_timed
def labeled_invariants(events: int = 20000, a: int = 2, M: int = 3, seed: int = 5) -> Check:
    """Reference labeled engine: old live counts never exceed old live-or-ghost
    counts, the new/old split partitions the live set, ghosts never revive."""
    p = ModelParams(a, M, seed)
    state = init_canonical(p, M)
    bad = 0
    seen_ghosts: set = set()
    ever = len(state.live)
    kills = 0
    for _ in range(events):
        r0 = state.front
        state, evs = step_coupled(state, seed, a, M)
        kills += sum(e.kind == "kill" for e in evs)
        for ref in (r0 - 3, r0, state.front):
            zeta, phi, phib = particle_counts_split(state, ref)
            if any(phi[y] > phib.get(y, 0) for y in phi):
                bad += 1
            if sum(zeta.values()) + sum(phi.values()) != len(state.live):
                bad += 1
        if seen_ghosts & state.live:
            bad += 1
        seen_ghosts |= set(state.ghosts)
        now = len(state.live) + len(state.ghosts)
        bad += now < ever
        ever = now
        occ = project_counts(state)
        bad += any(c > M for c in occ.counts.values())
    return Check("labeled-invariants", bad == 0,
                 {"events": events, "kills": kills, "violations": bad}, "zero violations")


@_timed
def coupling(runs: int = 100, horizon: float = 1000.0, a: int = 2, M: int = 10,
             master: int = 11) -> Check:
    """Auxiliary front below the true front, and each inter-advance time
    below its auxiliary counterpart, on every path."""
    rho = front = levels = 0
    worst = -math.inf
    for j in range(runs):
        rep = coupling_check(ModelParams(a, M, replica_seed(master, j)), horizon)
        rho += rep.rho_violations
        front += rep.front_violations
        levels += rep.levels
        worst = max(worst, rep.max_excess)
    return Check("coupling", rho == 0 and front == 0,
                 {"runs": runs, "levels": levels, "rho_violations": rho,
                  "front_violations": front, "max_excess": worst},
                 "zero violations (ties within 1e-9)")


@_timed
def mode_equivalence(n: int = 10**5, t: float = 1.0, a: int = 2, M: int = 10,
                     master: int = 13) -> Check:
    """Front at time t from both engines, two-sample KS."""
    fast = _fast.batch_fronts(a, M, np.uint64(master), 0, n, np.array([0]), np.array([1]),
                              0, float(t), -1)
    coup = np.array([run(ModelParams(a, M, replica_seed(master + 1, j)), 1, "coupled",
                         Stop(t)).front for j in range(n)])
    p = float(stats.ks_2samp(fast, coup).pvalue)
    return Check("mode-equivalence", p > 0.01,
                 {"n": n, "mean_fast": float(fast.mean()), "mean_coupled": float(coup.mean()),
                  "ks_p": p}, "KS p > 0.01")


# -- oracles ----------------------------------------------------------------

@_timed
def front_law(n: int = 10**6, t: float = 0.5, left: int = -4, right: int = 6,
              master: int = 17) -> Check:
    """Law of the front for a=2, M=2 from one particle: exact vs Monte Carlo."""
    p = ModelParams(2, 2, 0)
    exact = exact_small_ctmc(Occupancy(0, {0: 1}), p, t, left, right)
    law = exact.front_law()
    fronts = _fast.batch_fronts(2, 2, np.uint64(master), 0, n, np.array([0]), np.array([1]),
                                0, float(t), -1)
    counts = np.bincount(fronts, minlength=right + 2)
    emp = counts / n
    tv = 0.5 * sum(abs(law.get(k, 0.0) - emp[k]) for k in range(right + 1))
    tv += 0.5 * abs(exact.leak_right - emp[right + 1:].sum())
    return Check("front-law", tv < 0.01 and exact.leak < 1e-3,
                 {"n": n, "tv": tv, "leak": exact.leak, "states": len(exact.states),
                  "truncation": f"[{left},{right}]"},
                 "TV < 0.01, leak < 1e-3")


GOLDEN_THETA_1 = 0.9308211936517654  # frozen from a 200-step bisection


def _bisect_theta(c: float) -> float:
    lo, hi = 1e-9, 1.0
    while c * hi - 2 * (math.cosh(hi) - 1) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if c * mid - 2 * (math.cosh(mid) - 1) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@_timed
def analytic() -> Check:
    grid = (0.1, 0.5, 1.0, 2.0, 5.0)
    res = max(abs(c * theta_c(c) - 2 * (math.cosh(theta_c(c)) - 1)) for c in grid)
    thetas = [theta_c(c) for c in np.linspace(0.05, 10, 200)]
    mono = bool(np.all(np.diff(thetas) > 0))
    golden = abs(theta_c(1.0) - GOLDEN_THETA_1)
    us = np.linspace(0, 10, 201)
    Iv = np.array([rate_I(u) for u in us])
    convex = bool(np.all(np.diff(Iv, 2) >= -1e-12)) and bool(np.all(np.diff(Iv) > 0))
    i0 = rate_I(0.0)
    p = ModelParams(2, 2, 0)
    ex = exact_small_ctmc(Occupancy(0, {0: 1}), p, 0.5, -4, 6)
    mass_err = abs(ex.mass + ex.leak - 1.0)
    ex2 = exact_small_ctmc(Occupancy(0, {0: 1}), p, 0.5, -4, 6, rate_factor=1.5)
    rate_inv = float(np.abs(ex.probs - ex2.probs).max())
    ok = res < 1e-12 and i0 == 0.0 and convex and mono and golden < 1e-10 and mass_err < 1e-9 \
        and rate_inv < 1e-8
    return Check("analytic", ok,
                 {"theta_residual": res, "theta_monotone": mono, "theta1_vs_golden": golden,
                  "I0": i0, "I_convex_increasing": convex, "mass_error": mass_err,
                  "rate_invariance": rate_inv},
                 "residual < 1e-12, I(0) = 0, convex, mass error < 1e-9, rate change < 1e-8")


# -- bounds -----------------------------------------------------------------

@_timed
def line_hits(n: int = 10**6, xs=(-2, -3, -5), c: float = 0.5, master: int = 19) -> Check:
    """Empirical probability of ever reaching the moving line vs its bound."""
    meas = {}
    ok = True
    for x in xs:
        b = line_hit_bounds(x, c)
        H = b.horizon_for(1e-3)
        hits = line_hit_count(np.uint64(master), x, c, H, n)
        ph = hits / n
        se = math.sqrt(max(ph * (1 - ph), 1e-300) / n)
        ok &= ph <= b.p_hit_ub + 3 * se
        meas[f"p_hat[{x}]"] = ph
        meas[f"bound[{x}]"] = b.p_hit_ub
    return Check("line-hit", ok, {"n": n, **meas}, "p_hat <= exp((1+x) theta_c) + 3 SE")


@_timed
def v_escape(n: int = 10**4, M: int = 10, alpha_p: float = 0.35, sites: int = 20,
             master: int = 23) -> Check:
    """Worst case of M particles on each of ``sites`` sites below the front.

    The bound is tiny, so the SE is taken at the null value; otherwise an
    all-zero sample would have zero SE and fail a true inequality.
    """
    bound = v_escape_bound(M, alpha_p, sites)
    H = line_hit_bounds(-1, alpha_p).horizon_for(1e-6)
    ok_count = worst_case_v_escapes(np.uint64(master), M, sites, alpha_p, H, n)
    ph = ok_count / n
    se = max(math.sqrt(ph * (1 - ph) / n), math.sqrt(bound * (1 - bound) / n))
    return Check("v-escape", ph >= bound - 3 * se,
                 {"n": n, "p_hat": ph, "bound": bound, "se": se},
                 "p_hat >= bound - 3 SE (SE at the null)")


@_timed
def poisson_front(n: int = 10**5, M: int = 10, Mp: float = 12.0, t: float = 5.0,
                  master: int = 29) -> Check:
    fronts = _fast.batch_fronts(2, M, np.uint64(master), 0, n, np.array([0]), np.array([M]),
                                0, float(t), -1)
    ph = float(np.mean(fronts >= Mp * t))
    se = math.sqrt(ph * (1 - ph) / n)
    b = poisson_front_bound(M, Mp, t)
    return Check("poisson-front", ph <= b + 3 * se,
                 {"n": n, "p_hat": ph, "bound": b, "max_front": int(fronts.max())},
                 "p_hat <= Poisson tail + 3 SE")


# -- statistics on supplied data ---------------------------------------------

@_timed
def nu_tail(n: int = 10**4, a: int = 2, M: int = 10, k: int | None = None,
            master: int = 31) -> Check:
    k = M if k is None else k
    x = _aux.nu_samples(np.uint64(master), a, M, k, n, 1e9)
    slope, _, r2 = tail_fit(x)
    target = -M / 2 + 0.5
    return Check("nu-tail", slope <= target,
                 {"n": n, "k": k, "slope": slope, "r2": r2}, f"slope <= {target}")


@_timed
def kappa_tail(dk, M: int = 10) -> Check:
    slope, _, r2 = tail_fit(dk)
    return Check("kappa-tail", slope <= -1.5, {"n": len(dk), "slope": slope, "r2": r2},
                 "slope <= -1.5")


@_timed
def iid(incs) -> Check:
    rep = iid_check(incs)
    worst = max(abs(c) for cs in rep.acf.values() for c in cs)
    return Check("iid", rep.ok and rep.n >= 500,
                 {"n": rep.n, "max_abs_acf": worst, "acf_bound": rep.bound,
                  "ks_p_dk": rep.ks_pvalues["dk"], "ks_p_dr": rep.ks_pvalues["dr"]},
                 "n >= 500, |acf| <= 3/sqrt(n) at lags 1..5, half-vs-half KS p > 0.01")


SUITES = {
    "invariants": ("invariants", "labeled_invariants", "coupling", "mode_equivalence"),
    "oracles": ("analytic", "front_law"),
    "bounds": ("line_hits", "v_escape", "poisson_front"),
}


def run_suite(suite: str, scale: float = 1.0, capacity_slack: int = 0,
              alpha_prime: float = 0.35, a: int = 2, M: int = 10) -> list[Check]:
    """Run one named suite (or ``all``).  ``a`` and ``M`` apply to the
    model-level checks; the oracle and bound checks use fixed instances."""
    names = SUITES[suite] if suite != "all" else sum(SUITES.values(), ())
    out = []
    for name in names:
        if name == "invariants":
            out.append(invariants(_n(10**6, scale, 1000), a, M, capacity_slack=capacity_slack))
        elif name == "labeled_invariants":
            out.append(labeled_invariants(_n(20000, scale, 100), a, min(M, 3)))
        elif name == "coupling":
            out.append(coupling(_n(100, scale, 2), 1000.0, a, M))
        elif name == "mode_equivalence":
            out.append(mode_equivalence(_n(10**5, scale, 200), 1.0, a, M))
        elif name == "analytic":
            out.append(analytic())
        elif name == "front_law":
            out.append(front_law(_n(10**6, scale, 1000)))
        elif name == "line_hits":
            out.append(line_hits(_n(10**6, scale, 1000)))
        elif name == "v_escape":
            out.append(v_escape(_n(10**4, scale, 100), M, alpha_p=alpha_prime))
        elif name == "poisson_front":
            out.append(poisson_front(_n(10**5, scale, 1000)))
    return out
