"""Command line entry point: ``combustion <subcommand> [flags] [--dotted.key value ...]``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, checks, harness
from .config import DEFAULTS, InvalidConfig, load
from .core import InvalidParams
from .estimators import InsufficientData, clt_csv, report_json

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_DATA = 0, 2, 3, 4


def _split_overrides(extra: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise InvalidConfig(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise InvalidConfig(f"--{key} needs a value")
        if key not in DEFAULTS:
            raise InvalidConfig(f"--{key}: unknown key")
        out[key] = val
    return out


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", help="master seed (unsigned 64-bit)")
    common.add_argument("--replicas", help="number of replicas")
    common.add_argument("--workers", help="worker processes")
    common.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="combustion", description=__doc__,
                                epilog="Any config key can be given as --key value, e.g. --model.M 12.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run replicas, write runs.jsonl")
    sub.add_parser("pilot", parents=[common], help="estimate the auxiliary speed")
    sub.add_parser("regen", parents=[common], help="coupled runs + regeneration scan")
    est = sub.add_parser("estimate", parents=[common], help="speed, variance and CLT report")
    est.add_argument("--in", dest="indir", help="directory holding runs.jsonl / increments.csv")
    ver = sub.add_parser("verify", parents=[common], help="invariant, oracle and bound checks")
    ver.add_argument("--suite", default="all", choices=["invariants", "oracles", "bounds", "all"])
    sub.add_parser("oracle-check", parents=[common], help="analytic and exact-law checks")
    return p


def _config(args, extra):
    over = _split_overrides(extra)
    for flag, key in (("seed", "seed"), ("replicas", "replicas"), ("workers", "workers"),
                      ("out", "output_dir")):
        val = getattr(args, flag, None)
        if val is not None:
            over[key] = val
    return load(args.config, over)


def _dump(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_json(obj) + "\n")


def cmd_simulate(cfg) -> int:
    out = harness.OutputPaths(cfg.output_dir)
    recs = harness.simulate(cfg)
    m = harness.meta(cfg)
    harness.write_jsonl(out.runs, ({**r, **m} for r in recs))
    _dump(out.manifest, {**m, "command": "simulate", "config": cfg.result_keys()})
    print(f"{len(recs)} runs -> {out.runs}")
    return EXIT_OK


def cmd_pilot(cfg) -> int:
    out = harness.OutputPaths(cfg.output_dir)
    rec = harness.pilot(cfg)
    _dump(out.pilot, rec)
    print(f"alpha_hat={rec['alpha_hat']:.4f} +- {rec['stderr']:.4f}")
    return EXIT_OK


def cmd_regen(cfg) -> int:
    out = harness.OutputPaths(cfg.output_dir)
    try:
        rp = harness.renewal_params(cfg)
    except ValueError as e:
        raise InvalidConfig(str(e)) from None
    results = harness.regen(cfg, rp)
    m = harness.meta(cfg)
    harness.write_jsonl(out.regen, ({"replica": res["replica"], "seed": res["seed"], **rec, **m}
                                    for res in results for rec in res["records"]))
    harness.write_increments(out.increments, results)
    summary = {**harness.regen_summary(results, rp), **m,
               "per_replica": [{"replica": r["replica"], **r["diagnostics"]} for r in results]}
    _dump(out.regen_summary, summary)
    print(f"{summary['confirmed']} regenerations, {summary['increments']} increments"
          f" -> {out.increments}")
    if summary["confirmed"] == 0:
        print("no regeneration found before the horizon", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_estimate(cfg, indir: str | None) -> int:
    src = harness.OutputPaths(indir or cfg.output_dir)
    out = harness.OutputPaths(cfg.output_dir)
    runs = harness.read_jsonl(src.runs) if os.path.exists(src.runs) else None
    incs = harness.read_increments(src.increments) if os.path.exists(src.increments) else None
    try:
        rep = harness.estimate_report(runs, incs, seed=cfg.seed)
    except InsufficientData as e:
        err = {"error": "insufficient-data", "detail": str(e), **harness.meta(cfg)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return EXIT_DATA
    z = rep.pop("_z", None)
    _dump(out.report, {**rep, **harness.meta(cfg)})
    if z is not None:
        T = rep["T"]
        with open(out.clt, "w", encoding="utf-8", newline="") as fh:
            fh.write(clt_csv((r["replica"], r["seed"], T, r["front"], zz) for r, zz in zip(runs, z)))
    for key in ("v_direct", "v_regen"):
        if key in rep:
            print(f"{key}: {rep[key]['v_hat']:.5f} +- {rep[key]['stderr']:.5f}")
    if "sigma2" in rep:
        print(f"sigma2: {rep['sigma2']['sigma2_hat']:.4f} +- {rep['sigma2']['stderr']:.4f}")
    return EXIT_OK


def _alpha_prime(cfg) -> float:
    if cfg.alpha_prime is not None:
        return cfg.alpha_prime
    return 0.5 * harness.pilot(cfg)["alpha_hat"]


def _report_checks(cfg, results, path, name) -> int:
    for c in results:
        print(c.line())
    ok = all(c.passed for c in results)
    _dump(path, {"suite": name, "passed": ok, "checks": [c.to_record() for c in results],
                 **harness.meta(cfg)})
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_verify(cfg, suite: str) -> int:
    out = harness.OutputPaths(cfg.output_dir)
    ap = _alpha_prime(cfg) if suite in ("bounds", "all") else 0.0
    res = checks.run_suite(suite, cfg.verify_scale, cfg.capacity_slack, ap, cfg.model.a, cfg.model.M)
    return _report_checks(cfg, res, out.verify, suite)


def cmd_oracle_check(cfg) -> int:
    out = harness.OutputPaths(cfg.output_dir)
    res = checks.run_suite("oracles", cfg.verify_scale)
    return _report_checks(cfg, res, out.oracles, "oracles")


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args, extra = parser.parse_known_args(argv)
    try:
        cfg = _config(args, extra)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "pilot":
            return cmd_pilot(cfg)
        if args.command == "regen":
            return cmd_regen(cfg)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.indir)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        return cmd_oracle_check(cfg)
    except (InvalidConfig, InvalidParams) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
