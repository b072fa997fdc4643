"""Run configuration: one JSON document with tagged-record model blocks.

Example::

    {
      "mode": "compare",
      "scenario": {
        "name": "pareto-light-delays",
        "F": {"marginals": [{"type": "pareto", "alpha": 2}, {"type": "pareto", "alpha": 2}]},
        "G": {"marginals": [{"type": "exponential", "rate": 1}, {"type": "exponential", "rate": 1}]},
        "count": {"type": "geometric", "p": 0.5},
        "delay": {"type": "exponential", "rate": 1},
        "interarrival": {"type": "exponential", "rate": 1},
        "r": 0.05,
        "rare_set": {"type": "component_exceed", "thresholds": [1, 1]},
        "regime": "negligible"
      },
      "x_grid": [20, 40, 80],
      "t_grid": [2, 6, 10],
      "n": 100000,
      "seed": 1
    }

``t_grid`` entries may be the string ``"inf"`` for the infinite horizon.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import heavy_tails as ht
from . import rare_sets as rs
from .claim_models import model_from_dict
from .errors import ConfigError, DelayRiskError
from .renewal import RenewalSpec, Scenario, count_from_dict

MODES = ("simulate", "approx", "compare", "closure", "entrance-time")
CLOSURE_CHECKS = ("tail_additivity", "tail_negligible", "max_sum", "kesten", "product_convolution", "karamata")
FORMULAS = ("thm31i", "thm31ii", "cor31i", "cor31ii", "thm41i", "thm41ii", "cor41i", "cor41ii")
MC_MODES = ("simulate", "compare", "entrance-time")


@dataclass
class RunConfig:
    mode: str
    scenario: Scenario | None = None
    x_grid: list[float] = field(default_factory=list)
    t_grid: list[float] = field(default_factory=list)
    n: int = 0
    seed: int = 0
    tol: float = 1e-6
    truncation_tol: float | None = None
    threads: int | None = None
    output: str | None = None
    formulas: list[str] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    alpha: float | None = None
    source: str = ""


class _Doc:
    """Raw config text, used to point diagnostics at a line."""

    def __init__(self, text: str):
        self.text = text

    def line_of(self, key: str) -> int | None:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, message: str, path: str, anchor: str | None = None) -> ConfigError:
        """``anchor`` names the key whose line is reported (defaults to ``path``)."""
        key = (anchor if anchor is not None else path).split(".")[-1].split("[")[0]
        return ConfigError(message, field=path, line=self.line_of(key) if key else 1)


def _get(doc: _Doc, d: dict, key: str, path: str, kind, required=True, default=None):
    if not isinstance(d, dict):
        raise doc.error("expected an object", path)
    if key not in d:
        if required:
            # a missing key has no line of its own; point at the enclosing block
            raise doc.error(f"missing required field '{key}'", f"{path}.{key}" if path else key, anchor=path)
        return default
    val = d[key]
    full = f"{path}.{key}" if path else key
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise doc.error(f"expected a number, got {val!r}", full)
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise doc.error(f"expected an integer, got {val!r}", full)
        return val
    if not isinstance(val, kind):
        raise doc.error(f"expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}", full)
    return val


def _build(doc: _Doc, path: str, fn, spec):
    try:
        return fn(spec)
    except DelayRiskError as exc:
        raise doc.error(str(exc), path) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise doc.error(f"invalid block: {exc}", path) from None


def _grid(doc: _Doc, raw, path: str, allow_inf: bool) -> list[float]:
    if not isinstance(raw, list) or not raw:
        raise doc.error("expected a nonempty list", path)
    out = []
    for i, v in enumerate(raw):
        if allow_inf and v in ("inf", "Infinity", None):
            out.append(math.inf)
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise doc.error(f"entry {i} must be a positive number, got {v!r}", path)
        out.append(float(v))
    return out


def parse_scenario(doc: _Doc, s: dict) -> Scenario:
    p = "scenario"
    F = _build(doc, p + ".F", model_from_dict, _get(doc, s, "F", p, dict))
    G = _build(doc, p + ".G", model_from_dict, _get(doc, s, "G", p, dict, required=False) or s["F"])
    count = _build(doc, p + ".count", count_from_dict, _get(doc, s, "count", p, dict, required=False) or {"type": "zero"})
    delay = _build(
        doc, p + ".delay", ht.from_dict, _get(doc, s, "delay", p, dict, required=False) or {"type": "deterministic"}
    )
    arr = _build(doc, p + ".interarrival", lambda d: RenewalSpec(ht.from_dict(d)), _get(doc, s, "interarrival", p, dict))
    A = _build(doc, p + ".rare_set", rs.from_dict, _get(doc, s, "rare_set", p, dict))
    r = _get(doc, s, "r", p, float)
    regime = _get(doc, s, "regime", p, str, required=False, default="negligible")
    name = _get(doc, s, "name", p, str, required=False, default="scenario")
    return _build(doc, p, lambda _: Scenario(F, G, count, delay, arr, r, A, regime, name), None)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    doc = _Doc(text)
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object", line=1)
    known = {
        "mode", "scenario", "x_grid", "t_grid", "n", "seed", "tol", "truncation_tol",
        "threads", "output", "formulas", "checks", "alpha", "comment",
    }
    for key in raw:
        if key not in known:
            raise doc.error(f"unknown field '{key}'", key)
    mode = _get(doc, raw, "mode", "", str)
    if mode not in MODES:
        raise doc.error(f"mode must be one of {list(MODES)}, got {mode!r}", "mode")
    cfg = RunConfig(mode=mode, source=source)
    cfg.seed = _get(doc, raw, "seed", "", int, required=False, default=0)
    cfg.tol = _get(doc, raw, "tol", "", float, required=False, default=1e-6)
    if not cfg.tol > 0:
        raise doc.error("tol must be > 0", "tol")
    cfg.truncation_tol = _get(doc, raw, "truncation_tol", "", float, required=False)
    cfg.threads = _get(doc, raw, "threads", "", int, required=False)
    cfg.output = _get(doc, raw, "output", "", str, required=False)
    cfg.alpha = _get(doc, raw, "alpha", "", float, required=False)
    if mode == "closure":
        checks = _get(doc, raw, "checks", "", list)
        if not checks:
            raise doc.error("closure mode needs at least one check", "checks")
        for i, c in enumerate(checks):
            kind = _get(doc, c, "type", f"checks[{i}]", str)
            if kind not in CLOSURE_CHECKS:
                raise doc.error(f"unknown check type {kind!r}; expected one of {list(CLOSURE_CHECKS)}", f"checks[{i}].type")
        cfg.checks = checks
        return cfg
    cfg.scenario = parse_scenario(doc, _get(doc, raw, "scenario", "", dict))
    cfg.x_grid = _grid(doc, _get(doc, raw, "x_grid", "", list), "x_grid", allow_inf=False)
    if mode != "entrance-time":
        cfg.t_grid = _grid(doc, _get(doc, raw, "t_grid", "", list), "t_grid", allow_inf=True)
    if mode in MC_MODES:
        cfg.n = _get(doc, raw, "n", "", int)
        if cfg.n < 1000:
            raise doc.error(f"n must be at least 1000 for Monte Carlo modes, got {cfg.n}", "n")
    formulas = _get(doc, raw, "formulas", "", list, required=False, default=[])
    for f in formulas:
        if f not in FORMULAS:
            raise doc.error(f"unknown formula tag {f!r}; expected one of {list(FORMULAS)}", "formulas")
    cfg.formulas = formulas
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(p))
