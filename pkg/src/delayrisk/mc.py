"""Crude Monte Carlo for entrance probabilities and first entrance times.

Paths are numbered ``0 .. n-1`` and each path draws from its own counter-based
streams, so a result depends only on ``(scenario, x, t, n, seed)``.  Blocks of
paths are simulated independently and merged by summing hit counts, which
makes the thread count irrelevant to the output.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import asymptotics as asy
from . import rare_sets as rs
from .errors import ModelError, NumericalError
from .renewal import Scenario, aggregate_at, block_size, first_entrance_times, renewal_function, simulate_events
from .streams import CounterStream

log = logging.getLogger(__name__)

MIN_PATHS = 1000
_ZERO_HIT_UPPER = 3.689  # -log(0.025): exact one-sided 97.5% bound for zero hits
THREADS_ENV = "DELAYRISK_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ModelError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return 1


@dataclass(frozen=True)
class MCEstimate:
    p_hat: float
    std_err: float
    n: int
    hits: int
    ci95: tuple[float, float]
    seed: int
    horizon: float
    t_star: float | None = None
    delta: float | None = None
    flagged: bool = False

    @classmethod
    def from_hits(cls, hits: int, n: int, seed: int, horizon: float, **diag) -> "MCEstimate":
        p = hits / n
        se = math.sqrt(p * (1.0 - p) / n)
        ci = (p - 1.96 * se, p + 1.96 * se) if hits else (0.0, _ZERO_HIT_UPPER / n)
        return cls(p, se, n, int(hits), ci, seed, horizon, **diag)


def _validate(scn: Scenario, x_grid, n: int):
    if int(n) != n or n < MIN_PATHS:
        raise ModelError(f"n must be an integer >= {MIN_PATHS}, got {n}")
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if x.size == 0 or np.any(~(x > 0)) or np.any(~np.isfinite(x)):
        raise ModelError(f"x values must be finite and > 0, got {x_grid}")
    return x


def _blocks(n: int, size: int):
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def _run_blocks(fn, n: int, size: int, threads: int | None):
    """Apply ``fn(lo, hi)`` to every block and sum the integer results in block order."""
    blocks = _blocks(n, size)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(blocks) == 1:
        parts = [fn(lo, hi) for lo, hi in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: fn(*b), blocks))
    return sum(parts[1:], parts[0])


def hit_counts(scn: Scenario, x_grid, t_grid, n: int, seed: int, threads: int | None = None) -> np.ndarray:
    """Number of paths with ``D_r(t) in xA``, shape ``(len(x_grid), len(t_grid))``."""
    x = _validate(scn, x_grid, n)
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.size == 0 or np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise ModelError(f"horizons must be finite and > 0, got {t_grid}")
    stream = CounterStream(seed)
    horizon = float(t.max())
    A = scn.rare_set

    def block(lo, hi):
        ev = simulate_events(scn, stream, np.arange(lo, hi), horizon)
        g = rs.gauge(aggregate_at(ev, t), A)  # (len(t), paths)
        return np.stack([(g > xi).sum(axis=1) for xi in x]).astype(np.int64)

    return _run_blocks(block, n, block_size(scn, horizon), threads)


def estimate_entrance_prob(
    scn: Scenario, x: float, t: float, n: int, seed: int, threads: int | None = None
) -> MCEstimate:
    """Fraction of ``n`` paths whose discounted aggregate at time ``t`` lies in ``xA``."""
    if not (t > 0 and math.isfinite(t)):
        raise ModelError(f"t must be finite and > 0, got {t}")
    if renewal_function(scn.renewal, t) <= 0:
        raise ModelError(f"t={t} has no arrivals with positive probability")
    hits = hit_counts(scn, [x], [t], n, seed, threads)[0, 0]
    return MCEstimate.from_hits(int(hits), int(n), seed, float(t))


def estimate_entrance_grid(scn: Scenario, x_grid, t_grid, n: int, seed: int, threads: int | None = None):
    """MCEstimates on an (x, t) grid from one shared set of paths."""
    hits = hit_counts(scn, x_grid, t_grid, n, seed, threads)
    return [
        [MCEstimate.from_hits(int(hits[i, j]), int(n), seed, float(t)) for j, t in enumerate(np.atleast_1d(t_grid))]
        for i in range(hits.shape[0])
    ]


def estimate_infinite_horizon(
    scn: Scenario,
    x: float,
    n: int,
    seed: int,
    tol: float = 1e-3,
    threads: int | None = None,
    t_star: float | None = None,
) -> MCEstimate:
    """Entrance probability over ``[0, inf)`` from paths truncated at ``T*``.

    ``T*`` comes from the truncation rule of the infinite-horizon
    approximation at accuracy ``tol``; the same paths are also run to ``2 T*``
    and the difference is reported as ``delta``, flagged when above two
    standard errors.
    """
    scn.require_discount()
    _validate(scn, [x], n)
    T = float(t_star) if t_star is not None else asy.truncation_horizon(scn, x, tol)
    hits = hit_counts(scn, [x], [T, 2 * T], n, seed, threads)[0]
    est = MCEstimate.from_hits(int(hits[0]), int(n), seed, math.inf)
    delta = abs(hits[1] - hits[0]) / n
    flagged = delta > 2 * est.std_err
    if flagged:
        log.warning("truncation at T*=%.4g moves the estimate by %.3g (> 2 std errs)", T, delta)
    return MCEstimate.from_hits(int(hits[0]), int(n), seed, math.inf, t_star=T, delta=delta, flagged=bool(flagged))


def entrance_times(
    scn: Scenario, x: float, n: int, seed: int, t_star: float | None = None, threads: int | None = None
) -> tuple[np.ndarray, float]:
    """First entrance times of paths ``0..n-1`` into ``xA`` (``inf`` if none before ``T*``)."""
    scn.require_discount()
    _validate(scn, [x], max(n, MIN_PATHS))
    T = float(t_star) if t_star is not None else asy.truncation_horizon(scn, x)
    stream = CounterStream(seed)
    out = np.empty(n)

    def block(lo, hi):
        ev = simulate_events(scn, stream, np.arange(lo, hi), T)
        out[lo:hi] = first_entrance_times(ev, [x], scn.rare_set)[0]
        return 0

    _run_blocks(block, n, block_size(scn, T), threads)
    return out, T


def sample_entrance_time(
    scn: Scenario, x: float, stream: CounterStream, path: int = 0, t_star: float | None = None
) -> float | None:
    """First entrance time of one path, or ``None`` when it does not enter before ``T*``."""
    scn.require_discount()
    if not x > 0:
        raise ModelError(f"x must be > 0, got {x}")
    T = float(t_star) if t_star is not None else asy.truncation_horizon(scn, x)
    ev = simulate_events(scn, stream, np.array([path]), T)
    tau = float(first_entrance_times(ev, [x], scn.rare_set)[0, 0])
    return None if math.isinf(tau) else tau


@dataclass(frozen=True)
class ComparisonRow:
    x: float
    t: float
    mc: MCEstimate
    asym: asy.AsymptoticValue
    ratio: float
    ratio_ci: tuple[float, float]

    @classmethod
    def build(cls, mc: MCEstimate, asym: asy.AsymptoticValue) -> "ComparisonRow":
        v = asym.value
        if not v > 0:
            raise NumericalError("asymptotic value is zero; ratio undefined")
        return cls(asym.x, asym.t, mc, asym, mc.p_hat / v, (mc.ci95[0] / v, mc.ci95[1] / v))


@dataclass
class UniformityProfile:
    rows: list[ComparisonRow]
    sup_dev: dict = field(default_factory=dict)  # x -> sup_t |ratio - 1|
    sup_noise: dict = field(default_factory=dict)  # x -> 1.96 * ratio std err at the sup
    excluded_t: list = field(default_factory=list)


def uniformity_profile(
    scn: Scenario,
    x_grid,
    t_grid,
    n: int,
    seed: int,
    tol: float = asy.DEFAULT_TOL,
    threads: int | None = None,
) -> UniformityProfile:
    """MC / asymptotic ratios on an (x, t) grid and the sup over t of ``|ratio - 1|`` per x."""
    t_all = [float(t) for t in np.atleast_1d(t_grid)]
    t_ok = [t for t in t_all if renewal_function(scn.renewal, t) > 0]
    excluded = [t for t in t_all if t not in t_ok]
    for t in excluded:
        log.warning("t=%g excluded: no arrivals with positive probability", t)
    if not t_ok:
        raise ModelError("no horizon in the grid has positive renewal function")
    x_list = sorted(float(x) for x in np.atleast_1d(x_grid))
    t_ok.sort()
    grid = estimate_entrance_grid(scn, x_list, t_ok, n, seed, threads)
    prof = UniformityProfile([], excluded_t=excluded)
    for i, x in enumerate(x_list):
        worst, noise = -1.0, 0.0
        for j, t in enumerate(t_ok):
            row = ComparisonRow.build(grid[i][j], asy.approximate(scn, x, t, tol))
            prof.rows.append(row)
            dev = abs(row.ratio - 1.0)
            if dev > worst:
                worst, noise = dev, 1.96 * row.mc.std_err / row.asym.value
        prof.sup_dev[x], prof.sup_noise[x] = worst, noise
    return prof
