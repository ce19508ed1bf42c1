"""Run configuration: JSON schema, validation, and rate-name grammar.

A run configuration is one JSON object.  Required keys:

    populations   list of {"eta": int>=0, "nu": float>0, "c": -1|+1, "rate": name}
    sizes         list of positive ints, one per population
    seed          unsigned 64-bit master seed

Optional keys: "horizon" (default 100), "dt" (limit-ODE step), and one block
per experiment ("stability", "scan_nu", "scan_kappa", "chaos", "clt",
"weak_error", "tube", "simulate", "figures") whose entries override that
command's defaults.  Rate names: "paper_f1", "paper_f2", "sigmoid{a,A}"
(optionally "sigmoid{a,A,b}"), "const{v}".

Validation never stops at the first problem: every violation found is
collected and reported together.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .engine import PopulationSizes
from .limit import CascadeParams, Population
from .rates import PAPER_F1, PAPER_F2, ConstantRate, ExpSigmoidRate

_SIGMOID_RE = re.compile(r"^sigmoid\{\s*([^,}]+)\s*,\s*([^,}]+)\s*(?:,\s*([^,}]+)\s*)?\}$")
_CONST_RE = re.compile(r"^const\{\s*([^,}]+)\s*\}$")


class ConfigError(ValueError):
    """Carries the full list of configuration violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def parse_rate_name(name: str):
    """Resolve a rate-function name; raises ValueError for unknown grammar."""
    if name == "paper_f1":
        return PAPER_F1
    if name == "paper_f2":
        return PAPER_F2
    m = _SIGMOID_RE.match(name)
    if m:
        a, A = float(m.group(1)), float(m.group(2))
        b = float(m.group(3)) if m.group(3) is not None else 1.0
        return ExpSigmoidRate(prefactor=a, ceiling=A, slope=b)
    m = _CONST_RE.match(name)
    if m:
        return ConstantRate(value=float(m.group(1)))
    raise ValueError(f"unknown rate function name {name!r}")


@dataclass
class RunConfig:
    params: CascadeParams
    sizes: PopulationSizes
    seed: int
    horizon: float
    dt: Optional[float]
    blocks: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def block(self, name: str) -> dict:
        return dict(self.blocks.get(name, {}))

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


_KNOWN_BLOCKS = {"stability", "scan_nu", "scan_kappa", "chaos", "clt",
                 "weak_error", "tube", "simulate", "figures", "limit"}
_TOP_KEYS = {"populations", "sizes", "seed", "horizon", "dt"} | _KNOWN_BLOCKS


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document.

    JSON syntax errors surface with line/column; semantic problems are
    accumulated and raised together as one :class:`ConfigError`.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc

    violations = []
    if not isinstance(raw, dict):
        raise ConfigError(["top-level JSON value must be an object"])

    for key in raw:
        if key not in _TOP_KEYS:
            violations.append(f"unknown top-level key {key!r}")

    pops_raw = raw.get("populations")
    populations = []
    if not isinstance(pops_raw, list) or not pops_raw:
        violations.append("populations must be a non-empty list")
        pops_raw = []
    for i, p in enumerate(pops_raw):
        tag = f"populations[{i}]"
        if not isinstance(p, dict):
            violations.append(f"{tag} must be an object")
            continue
        eta = p.get("eta")
        nu = p.get("nu")
        c = p.get("c")
        rate_name = p.get("rate")
        ok = True
        if not isinstance(eta, int) or eta < 0:
            violations.append(f"{tag}.eta must be a nonnegative integer")
            ok = False
        if not isinstance(nu, (int, float)) or not nu > 0:
            violations.append(f"{tag}.nu must be strictly positive")
            ok = False
        if c not in (-1, 1):
            violations.append(f"{tag}.c must be -1 or +1")
            ok = False
        rate = None
        if not isinstance(rate_name, str):
            violations.append(f"{tag}.rate must be a rate-function name string")
            ok = False
        else:
            try:
                rate = parse_rate_name(rate_name)
            except ValueError as exc:
                violations.append(f"{tag}.rate: {exc}")
                ok = False
        if ok:
            populations.append(Population(eta=eta, nu=float(nu), c=c, rate=rate))

    sizes_raw = raw.get("sizes")
    sizes = None
    if not isinstance(sizes_raw, list) or not sizes_raw:
        violations.append("sizes must be a non-empty list of positive integers")
    elif any(not isinstance(v, int) or v < 1 for v in sizes_raw):
        violations.append("sizes entries must be positive integers")
    elif pops_raw and len(sizes_raw) != len(pops_raw):
        violations.append(
            f"sizes has {len(sizes_raw)} entries but there are {len(pops_raw)} populations"
        )
    else:
        sizes = PopulationSizes.make(sizes_raw)

    seed = raw.get("seed")
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        violations.append("seed must be an unsigned 64-bit integer")
        seed = 0

    horizon = raw.get("horizon", 100.0)
    if not isinstance(horizon, (int, float)) or not horizon > 0:
        violations.append("horizon must be strictly positive")
        horizon = 100.0

    dt = raw.get("dt")
    if dt is not None and (not isinstance(dt, (int, float)) or not dt > 0):
        violations.append("dt must be strictly positive when given")
        dt = None

    params = None
    if len(populations) == len(pops_raw) and populations:
        try:
            params = CascadeParams.make(populations)
        except ValueError as exc:
            violations.append(str(exc))

    blocks = {k: raw[k] for k in _KNOWN_BLOCKS if k in raw}
    for name, blk in blocks.items():
        if not isinstance(blk, dict):
            violations.append(f"{name} block must be an object")

    if violations:
        raise ConfigError(violations)
    return RunConfig(params=params, sizes=sizes, seed=seed, horizon=float(horizon),
                     dt=float(dt) if dt is not None else None, blocks=blocks, raw=raw)


FIG1_CONFIG = """\
{
  "populations": [
    {"eta": 3, "nu": 1.0, "c": -1, "rate": "paper_f1"},
    {"eta": 2, "nu": 1.0, "c": 1, "rate": "paper_f2"}
  ],
  "sizes": [20, 20],
  "horizon": 100.0,
  "seed": 20170804
}
"""
