"""Speed and variance estimators plus the statistical test battery."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


class InsufficientData(ValueError):
    pass


@dataclass
class SpeedEstimate:
    v_hat: float
    stderr: float
    method: str
    n: int

    @property
    def valid(self) -> bool:
        return self.v_hat > 0


@dataclass
class VarianceEstimate:
    sigma2_hat: float
    stderr: float
    n: int
    ci_low: float = math.nan
    ci_high: float = math.nan

    @property
    def degenerate(self) -> bool:
        return not self.sigma2_hat > 0


def _incs(incs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(incs, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def estimate_v_regen(incs, min_n: int = 30) -> SpeedEstimate:
    """Ratio of mean front gain to mean cycle length, delta-method SE."""
    dk, dr = _incs(incs)
    n = len(dk)
    if n < min_n:
        raise InsufficientData(f"need at least {min_n} increments, got {n}")
    v = dr.sum() / dk.sum()
    resid = dr - v * dk
    se = math.sqrt(resid.var(ddof=1) / n) / dk.mean() if n > 1 else 0.0
    return SpeedEstimate(float(v), float(se), "regenerative", n)


def estimate_v_direct(fronts, T: float) -> SpeedEstimate:
    """Mean and SE of ``r_T / T`` over independent runs.

    ``fronts`` holds the fronts at time ``T`` (or run summaries to read them from).
    """
    x = np.array([f.front_at(T) if hasattr(f, "front_at") else f for f in fronts], dtype=float) / T
    n = len(x)
    if n == 0:
        raise InsufficientData("no runs")
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SpeedEstimate(float(x.mean()), se, "direct", n)


def _sigma2(dk, dr, v):
    return np.mean((dr - v * dk) ** 2) / np.mean(dk)


def estimate_sigma2(incs, v_hat: float | None = None, resamples: int = 1000, seed: int = 0,
                    min_n: int = 100) -> VarianceEstimate:
    """Regenerative variance rate with a bootstrap SE and percentile CI.

    With ``v_hat`` omitted each bootstrap sample re-estimates the speed,
    which carries the speed's own uncertainty into the SE.
    """
    dk, dr = _incs(incs)
    n = len(dk)
    if n < min_n:
        raise InsufficientData(f"need at least {min_n} increments, got {n}")
    v = dr.sum() / dk.sum() if v_hat is None else v_hat
    s2 = _sigma2(dk, dr, v)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    bk, br = dk[idx], dr[idx]
    bv = br.sum(1) / bk.sum(1) if v_hat is None else np.full(resamples, v_hat)
    boot = np.mean((br - bv[:, None] * bk) ** 2, axis=1) / bk.mean(1)
    lo, hi = np.quantile(boot, [0.005, 0.995])
    return VarianceEstimate(float(s2), float(boot.std(ddof=1)), n, float(lo), float(hi))


def ks_critical(n: int, level: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value, ~1.63/sqrt(n) at 1%."""
    return float(stats.kstwobign.isf(level) / math.sqrt(n))


@dataclass
class CltReport:
    n: int
    T: float
    ks_distance: float
    ks_pvalue: float
    ks_critical: float
    allowance: float
    increment_corr: float | None
    corr_bound: float | None
    z: np.ndarray

    @property
    def ks_pass(self) -> bool:
        return self.ks_distance < self.ks_critical + self.allowance

    @property
    def corr_pass(self) -> bool:
        return self.increment_corr is None or abs(self.increment_corr) <= self.corr_bound

    def to_record(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "z"}
        d.update(ks_pass=self.ks_pass, corr_pass=self.corr_pass)
        return d


def clt_check(r_T, T: float, v_hat: float, sigma2_hat: float, r_half=None,
              allowance: float = 0.02, level: float = 0.01) -> CltReport:
    """KS distance of the standardized fronts to N(0, 1), and the
    correlation between the two half-horizon increments when ``r_half``
    (fronts at ``T/2``) is given."""
    r_T = np.asarray(r_T, dtype=float)
    n = len(r_T)
    if sigma2_hat <= 0:
        raise ValueError("sigma2_hat must be positive")
    z = (r_T - v_hat * T) / math.sqrt(sigma2_hat * T)
    ks = stats.kstest(z, "norm")
    corr = bound = None
    if r_half is not None:
        r_half = np.asarray(r_half, dtype=float)
        b1 = r_half - v_hat * T / 2
        b2 = (r_T - r_half) - v_hat * T / 2
        corr = float(np.corrcoef(b1, b2)[0, 1])
        bound = 3 / math.sqrt(n)
    return CltReport(n, T, float(ks.statistic), float(ks.pvalue), ks_critical(n, level),
                     allowance, corr, bound, z)


def tail_fit(samples, decades: float = 1.0, min_n: int = 1000,
             min_exceed: int = 10) -> tuple[float, float, float]:
    """Least-squares line through ``(log t, log P[X > t])`` on the top decade.

    The extreme order statistics are too noisy to anchor the window, so its
    top ``t_hi`` is the point with ``min_exceed`` samples above it and the
    window is ``[t_hi / 10, t_hi]``.  Returns ``(slope, intercept, r2)``.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    x = x[np.isfinite(x)]
    n = len(x)
    if n < min_n:
        raise InsufficientData(f"need at least {min_n} samples, got {n}")
    if x[0] <= 0 or x[-1] <= x[0]:
        raise ValueError("degenerate support")
    surv = 1.0 - np.arange(1, n + 1) / n
    t_hi = x[n - 1 - min_exceed]
    keep = (x >= t_hi / 10 ** decades) & (x <= t_hi)
    lx, ls = np.log(x[keep]), np.log(surv[keep])
    if len(lx) < 3 or np.ptp(lx) == 0:
        raise ValueError("degenerate support")
    res = stats.linregress(lx, ls)
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


def autocorr(x, lag: int) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    return float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))


@dataclass
class IidReport:
    n: int
    acf: dict[str, list[float]]
    bound: float
    ks_pvalues: dict[str, float]
    level: float = 0.01

    @property
    def ok(self) -> bool:
        acf_ok = all(abs(c) <= self.bound for cs in self.acf.values() for c in cs)
        return acf_ok and all(p > self.level for p in self.ks_pvalues.values())


def iid_check(incs, lags=range(1, 6), level: float = 0.01) -> IidReport:
    dk, dr = _incs(incs)
    n = len(dk)
    acf, pv = {}, {}
    for name, x in (("dk", dk), ("dr", dr)):
        acf[name] = [autocorr(x, k) for k in lags]
        h = n // 2
        pv[name] = float(stats.ks_2samp(x[:h], x[h:]).pvalue)
    return IidReport(n, acf, 3 / math.sqrt(n), pv, level)


def clt_csv(rows) -> str:
    """``replica,seed,T,r_T,z_score`` rows as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "seed", "T", "r_T", "z_score"])
    for rep, seed, T, r, z in rows:
        w.writerow([rep, seed, repr(float(T)), int(r), repr(float(z))])
    return buf.getvalue()


def report_json(report: dict) -> str:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))
    return json.dumps(report, sort_keys=True, default=default)
