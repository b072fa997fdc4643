"""Batch front end: ``delayrisk run <config> [--out DIR] [--threads N] [--seed S]``.

Exit codes: 0 on success, 2 on a config problem, 3 on a numerical failure.
CSV bodies depend only on the config (and the seed override), never on the
thread count; wall-clock data goes to ``summary.json``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import closure_lab as cl
from . import heavy_tails as ht
from . import mc
from . import rare_sets as rs
from .claim_models import MRVSpec, model_from_dict
from .config import RunConfig, load_config
from .errors import ConfigError, DelayRiskError, ModelError, NumericalError
from .renewal import renewal_function

log = logging.getLogger("delayrisk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def fmt(v) -> str:
    """Shortest round-trip text for numbers, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# ---------------------------------------------------------------- approx


def _formula_for(scn, t: float, requested: list[str]) -> list[str]:
    finite = math.isfinite(t)
    if not requested:
        suffix = "i" if scn.regime == "equivalent" else "ii"
        return [("thm31" if finite else "thm41") + suffix]
    prefixes = ("thm31", "cor31") if finite else ("thm41", "cor41")
    return [f for f in requested if f.startswith(prefixes)]


def _mrv(model, A):
    try:
        return MRVSpec.from_model(model, [A])
    except ModelError as exc:
        raise ConfigError(f"regular-variation formula requested but {exc}", field="formulas") from None


def evaluate(cfg: RunConfig, formula: str, x: float, t: float) -> asy.AsymptoticValue:
    scn, tol = cfg.scenario, cfg.tol
    if formula == "thm31i":
        return asy.finite_horizon_equivalent(scn, x, t, tol)
    if formula == "thm31ii":
        return asy.finite_horizon_negligible(scn, x, t, tol)
    if formula == "thm41i":
        return asy.infinite_horizon_equivalent(scn, x, tol)
    if formula == "thm41ii":
        return asy.infinite_horizon_negligible(scn, x, tol)
    mrvF = _mrv(scn.F, scn.rare_set)
    mrvG = _mrv(scn.G, scn.rare_set) if formula.endswith("31i") or formula.endswith("41i") else None
    if formula.startswith("cor31"):
        return asy.mrv_finite(scn, x, t, mrvF, mrvG, tol)
    return asy.mrv_infinite(scn, x, mrvF, mrvG)


APPROX_HEADER = [
    "scenario", "formula", "x[money]", "t[time]", "value[prob]", "main[prob]", "delayed[prob]",
    "achieved_tol[rel]", "t_star[time]",
]


def run_approx(cfg: RunConfig, out: Path, threads: int) -> dict:
    rows = []
    for x in sorted(cfg.x_grid):
        for t in sorted(cfg.t_grid):
            for f in _formula_for(cfg.scenario, t, cfg.formulas):
                v = evaluate(cfg, f, x, t)
                rows.append([cfg.scenario.name, f, x, t, v.value, v.main, v.delayed, v.achieved_tol, v.t_star])
    if not rows:
        raise ConfigError("no requested formula applies to the t grid", field="formulas")
    write_csv(out / "approx.csv", APPROX_HEADER, rows)
    return {"files": ["approx.csv"], "rows": len(rows)}


# ---------------------------------------------------------------- simulate

SIM_HEADER = [
    "scenario", "formula", "x[money]", "t[time]", "p_hat[prob]", "std_err[prob]", "n[paths]", "hits[paths]",
    "seed", "t_star[time]", "delta[prob]",
]


def _truncation(cfg: RunConfig, default: float) -> float:
    return cfg.truncation_tol if cfg.truncation_tol is not None else default


def _mc_rows(cfg: RunConfig, threads: int) -> dict:
    """MCEstimates keyed by (x, t) for every cell of the grid."""
    scn = cfg.scenario
    xs = sorted(cfg.x_grid)
    finite = sorted(t for t in cfg.t_grid if math.isfinite(t))
    out = {}
    if finite:
        grid = mc.estimate_entrance_grid(scn, xs, finite, cfg.n, cfg.seed, threads)
        for i, x in enumerate(xs):
            for j, t in enumerate(finite):
                out[(x, t)] = grid[i][j]
    if any(math.isinf(t) for t in cfg.t_grid):
        tt = _truncation(cfg, 1e-3)
        for x in xs:
            out[(x, math.inf)] = mc.estimate_infinite_horizon(scn, x, cfg.n, cfg.seed, tt, threads)
    return out


def run_simulate(cfg: RunConfig, out: Path, threads: int) -> dict:
    rows = []
    flagged = 0
    for (x, t), e in sorted(_mc_rows(cfg, threads).items()):
        flagged += int(e.flagged)
        rows.append([cfg.scenario.name, "mc", x, t, e.p_hat, e.std_err, e.n, e.hits, e.seed, e.t_star, e.delta])
    write_csv(out / "simulate.csv", SIM_HEADER, rows)
    return {"files": ["simulate.csv"], "rows": len(rows), "truncation_flagged": flagged}


# ---------------------------------------------------------------- compare

CMP_HEADER = [
    "scenario", "formula", "x[money]", "t[time]", "p_hat[prob]", "std_err[prob]", "asym[prob]", "main[prob]",
    "delayed[prob]", "ratio", "ratio_ci_lo", "ratio_ci_hi", "n[paths]", "hits[paths]", "seed",
]
UNI_HEADER = ["scenario", "formula", "x[money]", "sup_abs_ratio_minus_1", "noise_1.96se", "t_count", "excluded_t[time]"]


def run_compare(cfg: RunConfig, out: Path, threads: int) -> dict:
    scn = cfg.scenario
    excluded = [t for t in cfg.t_grid if math.isfinite(t) and renewal_function(scn.renewal, t) <= 0]
    for t in excluded:
        log.warning("t=%r excluded: no arrivals with positive probability", t)
    cfg.t_grid = [t for t in cfg.t_grid if t not in excluded]
    if not cfg.t_grid:
        raise ConfigError("no horizon in t_grid has positive renewal function", field="t_grid")
    estimates = _mc_rows(cfg, threads)
    rows, uni = [], []
    by_x: dict = {}
    for (x, t), e in sorted(estimates.items()):
        f = _formula_for(scn, t, cfg.formulas)[0] if _formula_for(scn, t, cfg.formulas) else None
        if f is None:
            raise ConfigError(f"no requested formula applies to t={t}", field="formulas")
        row = mc.ComparisonRow.build(e, evaluate(cfg, f, x, t))
        rows.append([
            scn.name, f, x, t, e.p_hat, e.std_err, row.asym.value, row.asym.main, row.asym.delayed,
            row.ratio, row.ratio_ci[0], row.ratio_ci[1], e.n, e.hits, e.seed,
        ])
        by_x.setdefault(x, []).append((f, row))
    for x, items in sorted(by_x.items()):
        worst, noise, f = -1.0, 0.0, items[0][0]
        for fi, row in items:
            dev = abs(row.ratio - 1.0)
            if dev > worst:
                worst, noise, f = dev, 1.96 * row.mc.std_err / row.asym.value, fi
        uni.append([scn.name, f, x, worst, noise, len(items), ";".join(fmt(t) for t in excluded)])
    write_csv(out / "compare.csv", CMP_HEADER, rows)
    write_csv(out / "uniformity.csv", UNI_HEADER, uni)
    info = {"files": ["compare.csv", "uniformity.csv"], "rows": len(rows), "uniformity_rows": len(uni)}
    slow = sorted({m.kind for m in scn.F.marginals if isinstance(m, (ht.Lognormal, ht.Weibull))})
    if slow:
        info["convergence_note"] = (
            f"main claims include {'/'.join(slow)} marginals; second-order terms of these tails decay slowly, "
            "so ratios approach 1 much more slowly in x than for regularly varying claims"
        )
        log.warning(info["convergence_note"])
    return info


# ---------------------------------------------------------------- entrance time

ENT_HEADER = [
    "scenario", "formula", "x[money]", "t[time]", "cdf_empirical", "std_err", "cdf_bound_exponential", "accepted[paths]",
    "alpha", "r[1/time]",
]


def _tail_index(cfg: RunConfig) -> float:
    if cfg.alpha is not None:
        return cfg.alpha
    try:
        return MRVSpec.from_model(cfg.scenario.F, []).alpha
    except ModelError:
        raise ConfigError("entrance-time mode needs 'alpha' unless main claims share a Pareto index", field="alpha")


def run_entrance(cfg: RunConfig, out: Path, threads: int) -> dict:
    scn = cfg.scenario
    scn.require_discount()
    alpha = float(_tail_index(cfg))
    tt = _truncation(cfg, 1e-6)
    rows, stats = [], {}
    for x in sorted(cfg.x_grid):
        T = asy.truncation_horizon(scn, x, tt)
        times, _ = mc.entrance_times(scn, x, cfg.n, cfg.seed, T, threads)
        hit = np.sort(times[np.isfinite(times)])
        k = hit.size
        grid = np.linspace(T / 50, T, 50)
        bound = asy.entrance_time_bound(grid, alpha, scn.r)
        if k == 0:
            emp = np.zeros_like(grid)
            se = np.zeros_like(grid)
            ks = math.nan
        else:
            emp = np.searchsorted(hit, grid, side="right") / k
            se = np.sqrt(emp * (1 - emp) / k)
            lam = alpha * scn.r
            cdf_hi = -np.expm1(-lam * hit)
            i = np.arange(1, k + 1)
            ks = float(max(np.max(i / k - cdf_hi), np.max(cdf_hi - (i - 1) / k)))
        stats[fmt(x)] = {"accepted": int(k), "ks_exponential": ks, "t_star": T}
        tag = "entrance-" + ("i" if scn.regime == "equivalent" else "ii")
        for g, e, s, b in zip(grid, emp, se, bound):
            rows.append([scn.name, tag, x, float(g), float(e), float(s), float(b), k, alpha, scn.r])
    write_csv(out / "entrance_time.csv", ENT_HEADER, rows)
    return {"files": ["entrance_time.csv"], "rows": len(rows), "per_x": stats}


# ---------------------------------------------------------------- closure

CLOSURE_HEADER = ["property", "x", "ratio", "band_lo", "band_hi", "verdict"]


def _dist(spec, field):
    try:
        return ht.from_dict(spec)
    except (DelayRiskError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid law: {exc}", field=field) from None


def _need(c: dict, key: str, where: str):
    if key not in c:
        raise ConfigError(f"missing required field '{key}'", field=f"{where}.{key}")
    val = c[key]
    if key.endswith("_grid"):
        return _grid_spec(val, f"{where}.{key}")
    return val


def _grid_spec(val, field):
    """A literal list or ``{"geomspace" | "linspace": [lo, hi, n]}``."""
    if isinstance(val, dict) and len(val) == 1:
        (kind, args), = val.items()
        if kind in ("geomspace", "linspace") and isinstance(args, list) and len(args) == 3:
            return getattr(np, kind)(float(args[0]), float(args[1]), int(args[2]))
    if isinstance(val, list) and val and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        return np.asarray(val, dtype=float)
    raise ConfigError("grid must be a list of numbers or {'geomspace': [lo, hi, n]}", field=field)


def closure_report(c: dict, where: str) -> cl.ClosureReport:
    kind = c["type"]
    band = tuple(c["band"]) if "band" in c else None
    if kind in ("tail_additivity", "tail_negligible", "max_sum"):
        m1 = _dist(_need(c, "m1", where), where + ".m1")
        m2 = _dist(_need(c, "m2", where), where + ".m2")
        x = _need(c, "x_grid", where)
        if kind == "max_sum":
            return cl.check_max_sum_equivalence(m1, m2, x, band)
        return cl.check_tail_additivity(m1, m2, x, band, negligible=kind == "tail_negligible")
    if kind == "kesten":
        try:
            model = model_from_dict(_need(c, "model", where))
            A = rs.from_dict(_need(c, "rare_set", where))
        except (DelayRiskError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid block: {exc}", field=where) from None
        return cl.kesten_probe(
            model, A, float(c.get("eps", 0.5)), int(c.get("n_max", 8)), _need(c, "x_grid", where),
            n_mc=int(c.get("n_mc", 10**6)), seed=int(c.get("seed", 0)),
        )
    if kind == "product_convolution":
        m = _dist(_need(c, "m", where), where + ".m")
        w = _dist(_need(c, "w", where), where + ".w")
        return cl.product_convolution_check(
            m, w, _need(c, "v_grid", where), _need(c, "x_grid", where), float(c.get("slack", 0.02))
        )
    # karamata
    m = _dist(_need(c, "m", where), where + ".m")
    v = _need(c, "v_grid", where)
    rep = ht.estimate_karamata_lower(m.tail, v, _need(c, "x_grid", where))
    ratios = np.asarray(rep.diagnostics.get("limsup_ratios"), dtype=float)
    expected = c.get("expected_index")
    if expected is None:
        ok = rep.consistent_with_infinity or math.isinf(rep.karamata_lower)
    else:
        ok = abs(rep.karamata_lower - float(expected)) <= float(c.get("index_tol", 0.05))
    return cl.ClosureReport(
        "karamata_lower", v, ratios, (0.0, 1.0), ok,
        {"estimate": rep.karamata_lower, "consistent_with_infinity": rep.consistent_with_infinity},
    )


def run_closure(cfg: RunConfig, out: Path, threads: int) -> dict:
    files, verdicts = [], {}
    for i, c in enumerate(cfg.checks):
        rep = closure_report(c, f"checks[{i}]")
        name = f"closure_{i + 1:02d}_{c['type']}.csv"
        ratios = np.asarray(rep.ratios)
        rows = []
        if ratios.ndim == 2:  # kesten: one series per n
            for k in range(ratios.shape[0]):
                for x, r in zip(rep.x_grid, ratios[k]):
                    rows.append([f"{rep.prop}_n{k + 1}", float(x), float(r), rep.band[0], rep.band[1], rep.verdict])
        else:
            for x, r in zip(rep.x_grid, ratios):
                rows.append([rep.prop, float(x), float(r), rep.band[0], rep.band[1], rep.verdict])
        write_csv(out / name, CLOSURE_HEADER, rows)
        files.append(name)
        verdicts[name] = {"verdict": rep.verdict, "constants": _jsonable(rep.constants)}
    return {"files": files, "reports": verdicts}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


RUNNERS = {
    "simulate": run_simulate,
    "approx": run_approx,
    "compare": run_compare,
    "closure": run_closure,
    "entrance-time": run_entrance,
}


def _resolve_threads(flag: int | None, cfg: RunConfig) -> int:
    if flag is not None:
        return max(1, flag)
    if os.environ.get(mc.THREADS_ENV):
        return mc.default_threads()
    return max(1, cfg.threads or 1)


def run(config_path: str, out: str | None = None, threads: int | None = None, seed: int | None = None) -> int:
    """Execute one config and return the process exit code."""
    started = _dt.datetime.now(_dt.timezone.utc)
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg.seed = seed
        n_threads = _resolve_threads(threads, cfg)
        out_dir = Path(out or cfg.output or "delayrisk_out")
        out_dir.mkdir(parents=True, exist_ok=True)
        info = RUNNERS[cfg.mode](cfg, out_dir, n_threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = {
        "mode": cfg.mode,
        "config": str(config_path),
        "seed": cfg.seed,
        "threads": n_threads,
        "started": started.isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        **_jsonable(info),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="delayrisk", description="Entrance probabilities of discounted claim aggregates.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="execute a JSON run config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: config 'output' or ./delayrisk_out)")
    p.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
