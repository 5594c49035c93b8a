"""Flat ``key = value`` experiment configuration with dotted keys.

Every key can be overridden on the command line with ``--model.a 3`` style
flags.  Values stay strings until ``ExperimentConfig.from_mapping`` types
them, so error messages can point at the offending line or flag.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .core import InvalidParams, ModelParams

DEFAULTS: dict[str, str] = {
    "model.a": "2",
    "model.M": "10",
    "model.n0": "1",
    "seed": "0",
    "replicas": "10",
    "workers": "1",
    "output_dir": "out",
    "run.mode": "fast",
    "run.horizon": "1000",
    "run.stop": "horizon",
    "run.front_hit": "none",
    "run.depth": "60",
    "run.max_events": "10000000000000",
    "run.sample_dt": "0",
    "renewal.alpha_prime": "auto",
    "renewal.L": "auto",
    "renewal.confirm_window": "auto",
    "renewal.horizon": "auto",
    "pilot.replicas": "10",
    "pilot.horizon": "auto",
    "verify.scale": "1",
    "verify.capacity_slack": "0",
}


class InvalidConfig(ValueError):
    pass


def parse_text(text: str, source: str = "<config>") -> dict[str, tuple[str, str]]:
    """``key -> (value, where)``; blank lines and ``#`` comments are skipped."""
    out: dict[str, tuple[str, str]] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{n}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise InvalidConfig(f"{source}:{n}: unknown key {key!r}")
        out[key] = (value, f"{source}:{n}")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    n0: int
    replicas: int
    workers: int
    output_dir: str
    mode: str
    horizon: float
    stop: str
    front_hit: int | None
    depth: int | None
    max_events: int
    sample_dt: float
    alpha_prime: float | None  # None means auto
    L: int
    confirm_window: float | None
    regen_horizon: float | None
    pilot_replicas: int
    pilot_horizon: float | None
    verify_scale: float
    capacity_slack: int
    raw: tuple[tuple[str, str], ...]

    @property
    def seed(self) -> int:
        return self.model.seed

    def result_keys(self) -> dict[str, str]:
        """Every key except the ones that cannot change results."""
        return {k: v for k, v in self.raw if k not in ("workers", "output_dir")}

    def canonical_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.result_keys().items())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, values: dict[str, tuple[str, str]]) -> ExperimentConfig:
        merged = {k: (v, "default") for k, v in DEFAULTS.items()}
        merged.update(values)

        def get(key, conv, check=None, what=""):
            text, where = merged[key]
            try:
                val = conv(text)
            except (TypeError, ValueError):
                raise InvalidConfig(f"{where}: {key}={text!r} is not {what or conv.__name__}") from None
            if check is not None and not check(val):
                raise InvalidConfig(f"{where}: {key}={text!r} out of range ({what})")
            return val

        def opt(conv):
            return lambda s: None if s.lower() in ("auto", "none") else conv(s)

        def u64(s):
            v = int(s, 0)
            if not 0 <= v < 2**64:
                raise ValueError
            return v

        a = get("model.a", int)
        M = get("model.M", int)
        seed = get("seed", u64, what="an unsigned 64-bit integer")
        try:
            model = ModelParams(a, M, seed)
        except InvalidParams as e:
            raise InvalidConfig(f"{merged['model.a'][1]}: {e}") from None
        n0 = get("model.n0", int, lambda v: 1 <= v <= M, f"1..{M}")
        mode = get("run.mode", str, lambda v: v in ("fast", "coupled"), "fast|coupled")
        stop = get("run.stop", str, lambda v: v in ("horizon", "front-hit"), "horizon|front-hit")
        front_hit = get("run.front_hit", opt(int))
        if stop == "front-hit" and front_hit is None:
            raise InvalidConfig(f"{merged['run.front_hit'][1]}: run.front_hit needed for run.stop=front-hit")
        L = get("renewal.L", opt(int), lambda v: v is None or v >= 1, ">= 1")
        pos = "a positive number"
        return cls(
            model=model, n0=n0,
            replicas=get("replicas", int, lambda v: v >= 1, ">= 1"),
            workers=get("workers", int, lambda v: v >= 1, ">= 1"),
            output_dir=merged["output_dir"][0],
            mode=mode,
            horizon=get("run.horizon", float, lambda v: v >= 0 and math.isfinite(v), "finite, >= 0"),
            stop=stop, front_hit=front_hit,
            depth=get("run.depth", opt(int), lambda v: v is None or v >= 1, ">= 1 or none"),
            max_events=get("run.max_events", int, lambda v: v >= 0, ">= 0"),
            sample_dt=get("run.sample_dt", float, lambda v: v >= 0, ">= 0"),
            alpha_prime=get("renewal.alpha_prime", opt(float), lambda v: v is None or v > 0, pos),
            L=M if L is None else L,
            confirm_window=get("renewal.confirm_window", opt(float), lambda v: v is None or v > 0, pos),
            regen_horizon=get("renewal.horizon", opt(float), lambda v: v is None or v > 0, pos),
            pilot_replicas=get("pilot.replicas", int, lambda v: v >= 2, ">= 2"),
            pilot_horizon=get("pilot.horizon", opt(float), lambda v: v is None or v > 0, pos),
            verify_scale=get("verify.scale", float, lambda v: v > 0, pos),
            capacity_slack=get("verify.capacity_slack", int, lambda v: v >= 0, ">= 0"),
            raw=tuple(sorted((k, v) for k, (v, _) in merged.items())),
        )


def load(path: str | None = None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    values: dict[str, tuple[str, str]] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_text(fh.read(), path))
        except OSError as e:
            raise InvalidConfig(f"cannot read config {path}: {e.strerror}") from None
    for k, v in (overrides or {}).items():
        if k not in DEFAULTS:
            raise InvalidConfig(f"--{k}: unknown key")
        values[k] = (str(v), f"--{k}")
    return ExperimentConfig.from_mapping(values)
