"""Experiment orchestration: replicas, pilot, regeneration and estimation.

Replica ``j`` of master seed ``s`` always uses ``replica_seed(s, j)``, and
results are merged by replica index, so outputs do not depend on the worker
count or on scheduling order.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .auxiliary import estimate_alpha
from .config import ExperimentConfig
from .core import ModelParams, Stop, run
from .estimators import (InsufficientData, clt_check, estimate_sigma2, estimate_v_direct,
                         estimate_v_regen, iid_check, tail_fit)
from .renewal import RenewalParams, increments, regen_run
from .rng import replica_seed, stream_key


def replica_params(cfg: ExperimentConfig, j: int) -> ModelParams:
    return replace(cfg.model, seed=replica_seed(cfg.seed, j))


def meta(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.hash, "master_seed": cfg.seed, "version": __version__}


def _chunks(n: int, workers: int) -> list[range]:
    size = max(1, math.ceil(n / (4 * workers)))
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def map_replicas(fn, cfg: ExperimentConfig, n: int | None = None, workers: int | None = None,
                 **kw) -> list:
    """``[fn(cfg, j, **kw) for j in range(n)]``, optionally across processes."""
    n = cfg.replicas if n is None else n
    workers = cfg.workers if workers is None else workers
    if workers <= 1 or n <= 1:
        return [fn(cfg, j, **kw) for j in range(n)]
    out: dict[int, object] = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_run_chunk, fn, cfg, ch, kw) for ch in _chunks(n, workers)]
        for f in futs:
            out.update(f.result())
    return [out[j] for j in range(n)]


def _run_chunk(fn, cfg, indices, kw):
    return {j: fn(cfg, j, **kw) for j in indices}


# -- simulate ---------------------------------------------------------------

def _stop(cfg: ExperimentConfig) -> Stop:
    if cfg.stop == "front-hit":
        return Stop(math.inf, cfg.front_hit, cfg.max_events)
    return Stop(cfg.horizon, None, cfg.max_events)


def simulate_replica(cfg: ExperimentConfig, j: int) -> dict:
    params = replica_params(cfg, j)
    s = run(params, cfg.n0, mode=cfg.mode, stop=_stop(cfg), depth=cfg.depth,
            sample_dt=cfg.sample_dt, capacity_slack=cfg.capacity_slack)
    rec = s.to_record()
    rec["replica"] = j
    if cfg.stop == "horizon":
        rec["horizon"] = cfg.horizon
        rec["front_half"] = s.front_at(cfg.horizon / 2)
    return rec


def simulate(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    return map_replicas(simulate_replica, cfg, workers=workers)


# -- pilot ------------------------------------------------------------------

def pilot(cfg: ExperimentConfig) -> dict:
    """Auxiliary-speed estimate: a rough pass at ``T = 100`` sets the main
    pilot horizon ``1000 / alpha_rough`` unless one is configured."""
    pseed = int(stream_key(np.uint64(cfg.seed), -3, 0))
    params = replace(cfg.model, seed=pseed)
    rough = estimate_alpha(params, 100.0, cfg.pilot_replicas, first_replica=10**6)
    horizon = cfg.pilot_horizon or 1000.0 / rough.alpha_hat
    est = estimate_alpha(params, horizon, cfg.pilot_replicas)
    return {**est.to_record(), "alpha_rough": rough.alpha_hat, **meta(cfg)}


def renewal_params(cfg: ExperimentConfig, alpha_hat: float | None = None) -> RenewalParams:
    needs = cfg.alpha_prime is None or cfg.confirm_window is None or cfg.regen_horizon is None
    if needs and alpha_hat is None:
        alpha_hat = pilot(cfg)["alpha_hat"]
    ap = cfg.alpha_prime if cfg.alpha_prime is not None else 0.5 * alpha_hat
    W = cfg.confirm_window if cfg.confirm_window is not None else 200.0 / alpha_hat
    H = cfg.regen_horizon if cfg.regen_horizon is not None else 1e4 * math.ceil(1.0 / alpha_hat)
    p = RenewalParams(ap, cfg.L, W, H)
    if alpha_hat is not None:
        p.check_against(alpha_hat)
    return p


# -- regeneration -----------------------------------------------------------

def regen_replica(cfg: ExperimentConfig, j: int, rp: RenewalParams) -> dict:
    params = replica_params(cfg, j)
    summary, scan = regen_run(params, rp, rp.horizon, n0=cfg.n0, depth=cfg.depth)
    return {
        "replica": j,
        "seed": params.seed,
        "records": [r.to_record() for r in scan.records],
        "increments": increments(scan.records).tolist(),
        "trials": [[t.u, t.v] for t in scan.trials],
        "diagnostics": {**scan.diagnostics, "time": summary.time, "front": summary.front,
                        "kills": summary.event_counts["kill"]},
    }


def regen(cfg: ExperimentConfig, rp: RenewalParams, workers: int | None = None) -> list[dict]:
    return map_replicas(regen_replica, cfg, workers=workers, rp=rp)


def pooled_increments(results: list[dict]) -> np.ndarray:
    rows = [inc for res in results for inc in res["increments"]]
    return np.array(rows, dtype=float).reshape(-1, 2)


def regen_summary(results: list[dict], rp: RenewalParams) -> dict:
    """Confirmation statistics, the U/V independence check and the
    revocation rate against the budget from the fitted failure-time tail."""
    W = rp.confirm_window
    trials = np.array([t for res in results for t in res["trials"]], dtype=float).reshape(-1, 2)
    revoked = [r["revoked"] for res in results for r in res["records"] if r["revoked"] is not None]
    out = {"alpha_prime": rp.alpha_prime, "L": rp.L, "confirm_window": W,
           "horizon": rp.horizon, "replicas": len(results),
           "candidates": len(trials),
           "confirmed": sum(len(res["records"]) for res in results),
           "increments": sum(len(res["increments"]) for res in results),
           "revoked": int(sum(revoked)), "revocation_checked": len(revoked)}
    if len(trials) > 2:
        u_hit = trials[:, 0] <= W
        v_hit = trials[:, 1] <= W
        if u_hit.std() > 0 and v_hit.std() > 0:
            out["uv_corr"] = float(np.corrcoef(u_hit, v_hit)[0, 1])
        out["uv_corr_bound"] = 3 / math.sqrt(len(trials))
        d = trials.min(axis=1)
        finite = d[d <= 2 * W]
        out["revocation_fraction"] = out["revoked"] / len(revoked) if revoked else None
        try:
            # survival of D on its finite part, normalized by all candidates
            slope, icpt, _ = tail_fit(finite, min_n=min(1000, len(finite)))
            scale = len(finite) / len(d)
            C = math.exp(icpt) * scale
            out["d_tail"] = {"slope": slope, "C": C, "p": -2 * slope}
            # revocations are counted among confirmed candidates, so the
            # tail mass beyond W is taken conditionally on D > W
            p_confirm = float(np.mean(d > W))
            if p_confirm > 0:
                out["revocation_budget"] = min(1.0, 2 * C * W ** slope / p_confirm)
        except (InsufficientData, ValueError):
            out["d_tail"] = None
    return out


# -- estimation -------------------------------------------------------------

def estimate_report(runs: list[dict] | None, incs: np.ndarray | None, seed: int = 0) -> dict:
    """v by both methods, sigma^2 and the CLT battery, as far as data allows."""
    report: dict = {}
    if incs is not None and len(incs):
        vr = estimate_v_regen(incs)
        report["v_regen"] = vars(vr)
        try:
            s2 = estimate_sigma2(incs, seed=seed)
            report["sigma2"] = vars(s2)
        except InsufficientData as e:
            report["sigma2_error"] = str(e)
        if len(incs) >= 20:
            iid = iid_check(incs)
            report["iid"] = {**vars(iid), "ok": iid.ok}
    if runs:
        T = runs[0].get("horizon")
        if T is None or any(r.get("horizon") != T for r in runs):
            raise InsufficientData("runs need a common horizon")
        fronts = np.array([r["front"] for r in runs], dtype=float)
        vd = estimate_v_direct(fronts, T)
        report["v_direct"] = vars(vd)
        report["T"] = T
        if "v_regen" in report:
            v1, v2 = report["v_direct"], report["v_regen"]
            comb = math.hypot(v1["stderr"], v2["stderr"])
            report["v_agreement"] = {"diff": v1["v_hat"] - v2["v_hat"], "combined_se": comb,
                                     "ok": abs(v1["v_hat"] - v2["v_hat"]) <= 3 * comb}
        if "sigma2" in report and len(runs) >= 2 and report["sigma2"]["sigma2_hat"] > 0:
            half = np.array([r["front_half"] for r in runs], dtype=float)
            clt = clt_check(fronts, T, vd.v_hat, report["sigma2"]["sigma2_hat"], half)
            report["clt"] = clt.to_record()
            report["_z"] = clt.z
    if not report:
        raise InsufficientData("no runs and no increments")
    return report


def write_jsonl(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_increments(path: str, results: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "seed", "dk", "dr"])
        for res in results:
            for dk, dr in res["increments"]:
                w.writerow([res["replica"], res["seed"], repr(float(dk)), int(dr)])


def read_increments(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["dk"]), float(r["dr"])] for r in rows]).reshape(-1, 2)


@dataclass
class OutputPaths:
    root: str

    def __post_init__(self):
        os.makedirs(self.root, exist_ok=True)

    def __getattr__(self, name):
        files = {"runs": "runs.jsonl", "regen": "regen.jsonl", "increments": "increments.csv",
                 "regen_summary": "regen_summary.json", "report": "report.json",
                 "clt": "clt.csv", "pilot": "pilot.json", "verify": "verify.json",
                 "oracles": "oracles.json", "manifest": "manifest.json"}
        if name in files:
            return os.path.join(self.root, files[name])
        raise AttributeError(name)
