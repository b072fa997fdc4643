"""Renewal arrivals, delayed-claim counts and trajectories of the discounted aggregate.

Numerics: the renewal function, and integrals against its measure ``lambda(ds)``.
Simulation: a vectorized event kernel that turns a block of path ids into the
list of claim events ``(path, time, discounted amount)`` up to a horizon, with
every random number taken from a :class:`~delayrisk.streams.CounterStream`
position that depends only on the path and the event's place in it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, ClassVar

import numpy as np
from scipy import integrate, special

from . import heavy_tails as ht
from . import rare_sets as rs
from .claim_models import ClaimVectorModel
from .errors import DimensionMismatchError, ModelError, NumericalError
from .streams import CLAIM_X, CLAIM_Y, COUNT_M, DELAY, PAIR_SHIFT, THETA, CounterStream, pair_index

GRID_STEPS = 4096
_MAX_GRID_STEPS = 2**14
_MAX_DOUBLINGS = 40


# ------------------------------------------------------------------ count laws


class CountLaw:
    """Law of the number ``M`` of delayed claims triggered by one arrival."""

    kind: ClassVar[str] = ""
    n_uniforms: ClassVar[int] = 1

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def from_uniforms(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"type": self.kind, **{k: v for k, v in self.__dict__.items()}}


@dataclass(frozen=True)
class ZeroCount(CountLaw):
    kind: ClassVar[str] = "zero"
    n_uniforms: ClassVar[int] = 0

    @property
    def mean(self):
        return 0.0

    def from_uniforms(self, q):
        return np.zeros(np.shape(q), dtype=np.int64)


@dataclass(frozen=True)
class FixedCount(CountLaw):
    m: int
    kind: ClassVar[str] = "fixed"
    n_uniforms: ClassVar[int] = 0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise ModelError(f"FixedCount needs a nonnegative integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def mean(self):
        return float(self.m)

    def from_uniforms(self, q):
        return np.full(np.shape(q), self.m, dtype=np.int64)


@dataclass(frozen=True)
class GeometricCount(CountLaw):
    """``P(M = k) = p (1 - p)^k`` on ``k = 0, 1, ...``."""

    p: float
    kind: ClassVar[str] = "geometric"

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ModelError(f"Geometric p must lie in (0, 1], got {self.p}")

    @property
    def mean(self):
        return (1.0 - self.p) / self.p

    def from_uniforms(self, q):
        q = np.asarray(q, dtype=float)
        if self.p == 1:
            return np.zeros(q.shape, dtype=np.int64)
        return np.floor(np.log(q) / math.log1p(-self.p)).astype(np.int64)


@dataclass(frozen=True)
class PoissonCount(CountLaw):
    lam: float
    kind: ClassVar[str] = "poisson"

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ModelError(f"Poisson mean must be positive, got {self.lam}")

    @property
    def mean(self):
        return float(self.lam)

    def from_uniforms(self, q):
        # P(M > k) for k = 0..K until it vanishes; M = #{k : q <= P(M > k)}
        k = np.arange(int(self.lam + 40 * math.sqrt(self.lam) + 40))
        tails = special.pdtrc(k, self.lam)
        tails = tails[tails > 0]
        return np.searchsorted(-tails, -np.asarray(q, dtype=float), side="right").astype(np.int64)


_COUNTS = {c.kind: c for c in (ZeroCount, FixedCount, GeometricCount, PoissonCount)}


def count_from_dict(spec: dict) -> CountLaw:
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind not in _COUNTS:
        raise ModelError(f"unknown count law {kind!r}; expected one of {sorted(_COUNTS)}")
    try:
        return _COUNTS[kind](**spec)
    except TypeError as exc:
        raise ModelError(f"bad parameters for count law {kind}: {exc}") from None


# --------------------------------------------------------------- renewal specs

_INTERARRIVALS = (ht.Exponential, ht.Erlang, ht.Uniform)
_DELAYS = (ht.Exponential, ht.Uniform, ht.Deterministic)


@dataclass(frozen=True)
class RenewalSpec:
    interarrival: ht.Distribution

    def __post_init__(self):
        if not isinstance(self.interarrival, _INTERARRIVALS):
            raise ModelError(
                f"interarrival law must be exponential, Erlang or uniform, got {self.interarrival.kind}"
            )
        if isinstance(self.interarrival, ht.Uniform) and self.interarrival.b <= 0:
            raise ModelError("uniform interarrival times must be positive")

    @property
    def is_poisson(self) -> bool:
        return isinstance(self.interarrival, ht.Exponential)

    @property
    def rate(self) -> float:
        return 1.0 / self.interarrival.mean


@lru_cache(maxsize=64)
def _renewal_nodes(spec: RenewalSpec, T: float, n: int) -> np.ndarray:
    """``lambda`` at ``k T / n`` (k = 0..n), Richardson-extrapolated from steps ``h`` and ``h/2``."""

    def solve(m):
        F = spec.interarrival.cdf(np.linspace(0.0, T, m + 1))
        dF = np.diff(F)
        lam = np.zeros(m + 1)
        c = 1.0 - 0.5 * dF[0]
        for j in range(1, m + 1):
            acc = F[j] + 0.5 * lam[j - 1] * dF[0]
            if j >= 2:
                acc += 0.5 * np.dot(lam[j - 2::-1] + lam[j - 1:0:-1], dF[1:j])
            lam[j] = acc / c
        return lam

    coarse, fine = solve(n), solve(2 * n)[::2]
    return fine + (fine - coarse) / 3.0


def renewal_function(spec: RenewalSpec, t, n: int = GRID_STEPS):
    """Expected number of arrivals in ``[0, t]``.

    Exact for exponential interarrivals; otherwise the renewal equation is
    solved by product trapezoid integration on ``n`` steps up to ``max(t)``,
    with one Richardson halving, and interpolated linearly between nodes.
    """
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0) or np.any(~np.isfinite(ta)):
        raise ModelError(f"renewal function needs finite t >= 0, got {t}")
    if spec.is_poisson:
        out = spec.rate * ta
    else:
        T = float(ta.max()) if ta.size else 0.0
        if T == 0:
            out = np.zeros_like(ta)
        else:
            lam = _renewal_nodes(spec, T, n)
            out = np.interp(ta, np.linspace(0.0, T, n + 1), lam)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RenewalIntegral:
    value: float
    abs_err: float
    t_star: float | None = None


def _stieltjes(g: Callable, spec: RenewalSpec, T: float, n: int) -> float:
    s = np.linspace(0.0, T, n + 1)
    lam = _renewal_nodes(spec, T, n)
    gs = np.asarray(g(s), dtype=float)
    fine = np.sum(0.5 * (gs[:-1] + gs[1:]) * np.diff(lam))
    coarse = np.sum(0.5 * (gs[:-2:2] + gs[2::2]) * np.diff(lam[::2]))
    return fine + (fine - coarse) / 3.0


def _finite_integral(g: Callable, spec: RenewalSpec, T: float, tol: float, breakpoints=(), strict=True):
    if T <= 0:
        return 0.0, 0.0
    if spec.is_poisson:
        pts = sorted(p for p in breakpoints if 0 < p < T) or None
        fn = lambda s: float(np.ravel(g(np.asarray(s)))[0])  # noqa: E731
        val, err = integrate.quad(fn, 0.0, T, epsabs=0.0, epsrel=tol, limit=500, points=pts)
        if strict and err > max(tol * abs(val), 1e-300):
            raise NumericalError("renewal integral did not converge", achieved_tol=err / max(abs(val), 1e-300))
        return spec.rate * val, spec.rate * err
    # grid solution; the error is the change when the renewal grid is refined
    n = GRID_STEPS
    prev = _stieltjes(g, spec, T, n // 2)
    while True:
        val = _stieltjes(g, spec, T, n)
        err = abs(val - prev)
        if err <= tol * abs(val) or val == 0:
            return val, err
        if n >= _MAX_GRID_STEPS:
            if strict:
                raise NumericalError(
                    f"renewal Stieltjes sum not within tol {tol} at {n} steps", achieved_tol=err / abs(val)
                )
            return val, err
        prev, n = val, 2 * n


def integrate_against_renewal(
    g: Callable,
    spec: RenewalSpec,
    t_upper: float,
    tol: float = 1e-6,
    *,
    decay_rate: float | None = None,
    breakpoints=(),
    strict: bool = True,
) -> RenewalIntegral:
    """``int_0^t g(s) lambda(ds)`` for a nonnegative, vectorized integrand ``g``.

    For ``t_upper = inf`` the range is doubled until the last increment falls
    below ``tol`` times the running value and ``exp(-decay_rate T) < tol``;
    the value at ``2 T*`` is returned, which is the doubled re-check.
    With ``strict`` a quadrature that misses ``tol`` raises
    :class:`NumericalError`; otherwise its error estimate is returned.
    """
    if not tol > 0:
        raise ModelError("tol must be positive")
    if math.isfinite(t_upper):
        if t_upper < 0:
            raise ModelError(f"upper limit must be >= 0, got {t_upper}")
        v, e = _finite_integral(g, spec, float(t_upper), tol, breakpoints, strict)
        return RenewalIntegral(v, e, None)
    T = 8.0 * spec.interarrival.mean
    if decay_rate and decay_rate > 0 and math.isfinite(decay_rate):
        T = max(T, math.log(1.0 / tol) / decay_rate / 4.0)
    prev_val, prev_err = _finite_integral(g, spec, T, tol, breakpoints, strict)
    prev_inc = math.inf
    for _ in range(_MAX_DOUBLINGS):
        val, err = _finite_integral(g, spec, 2 * T, tol, breakpoints, strict)
        inc = val - prev_val
        noise = err + prev_err  # increments below this are quadrature noise
        decayed = decay_rate is None or math.isinf(decay_rate) or math.exp(-decay_rate * T) < tol
        settled = inc <= tol * val or (not strict and abs(inc) <= noise)
        if val == 0 or (settled and decayed):
            return RenewalIntegral(val, err + abs(inc), T)
        if inc > prev_inc * (1 + 1e-9) and inc > tol * val and inc > noise:
            raise NumericalError(
                "tail increments of the improper integral are not decreasing",
                achieved_tol=inc / val,
                t=2 * T,
            )
        prev_val, prev_err, prev_inc, T = val, err, inc, 2 * T
    raise NumericalError("improper renewal integral did not settle", achieved_tol=prev_inc / max(prev_val, 1e-300))


# --------------------------------------------------------------------- scenario


def _tail_key(model: ClaimVectorModel, A: rs.RareSet) -> tuple:
    used = A.index_points().max(axis=0) > 0
    keys = [ht.heaviness(m) for m, u in zip(model.marginals, used) if u]
    return max(keys) if keys else (-1,)


@dataclass(frozen=True)
class Scenario:
    """Full model: main claims ``F``, delayed claims ``G``, counts, delays, arrivals, rate, set."""

    F: ClaimVectorModel
    G: ClaimVectorModel
    count: CountLaw
    delay: ht.Distribution
    renewal: RenewalSpec
    r: float
    rare_set: rs.RareSet
    regime: str = "negligible"
    name: str = "scenario"

    def __post_init__(self):
        d = self.F.dim
        if self.G.dim != d:
            raise DimensionMismatchError(d, self.G.dim, "delayed claim vector")
        if self.rare_set.dim != d:
            raise DimensionMismatchError(d, self.rare_set.dim, "rare set")
        if not isinstance(self.count, CountLaw):
            raise ModelError("count law must be zero, fixed, geometric or poisson")
        if not isinstance(self.delay, _DELAYS):
            raise ModelError(f"delay law must be exponential, uniform or deterministic, got {self.delay.kind}")
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise ModelError(f"rate r must be finite and >= 0, got {self.r}")
        object.__setattr__(self, "r", float(self.r))
        if self.regime not in ("equivalent", "negligible"):
            raise ModelError(f"regime must be 'equivalent' or 'negligible', got {self.regime!r}")
        if isinstance(self.count, ZeroCount):
            return
        kf, kg = _tail_key(self.F, self.rare_set), _tail_key(self.G, self.rare_set)
        if self.regime == "equivalent" and kf != kg:
            raise ModelError("regime 'equivalent' needs delayed claims with the same tail class as main claims")
        if self.regime == "negligible" and not kg < kf:
            raise ModelError("regime 'negligible' needs delayed claims strictly lighter than main claims")

    @property
    def dim(self) -> int:
        return self.F.dim

    def has_delays(self) -> bool:
        return not isinstance(self.count, ZeroCount) and self.count.mean > 0

    def require_discount(self):
        if not self.r > 0:
            raise ModelError("infinite-horizon quantities need r > 0")


# ---------------------------------------------------------------- event kernel


@dataclass
class Events:
    """Claim events of a block of paths, ``path`` being the index within the block."""

    n_paths: int
    path: np.ndarray
    time: np.ndarray
    amount: np.ndarray


def _arrivals(spec: RenewalSpec, stream: CounterStream, paths: np.ndarray, horizon: float):
    """Arrival epochs up to ``horizon``: (block index, arrival number, time).

    Epochs are running sums accumulated left to right from the previous
    chunk's last epoch, so they do not depend on how the sequence is chunked.
    """
    law = spec.interarrival
    k = law.n_uniforms
    keys = stream.path_keys(THETA, paths)
    m = paths.size
    start = np.zeros(m)
    alive = np.arange(m)
    expected = horizon / law.mean
    c = int(min(4096, expected + 4.0 * math.sqrt(expected) + 4))
    out_p, out_i, out_t = [], [], []
    i0 = 0
    while alive.size:
        cols = (np.arange(i0, i0 + c)[:, None] * k + np.arange(k)).ravel()
        u = CounterStream.uniforms(np.repeat(keys[alive], c * k), np.tile(cols, alive.size))
        theta = law.from_uniforms(u.reshape(alive.size, c, k))
        times = np.cumsum(np.column_stack([start[alive], theta]), axis=1)[:, 1:]
        rows, js = np.nonzero(times <= horizon)
        out_p.append(alive[rows])
        out_i.append(js + i0)
        out_t.append(times[rows, js])
        last = times[:, -1]
        start[alive] = last
        alive = alive[last <= horizon]
        i0 += c
        c = max(8, c // 4)
    return np.concatenate(out_p), np.concatenate(out_i).astype(np.int64), np.concatenate(out_t)


def _discount(r: float, t: np.ndarray) -> np.ndarray:
    return np.ones_like(t) if r == 0 else np.exp(-r * t)


def simulate_events(scn: Scenario, stream: CounterStream, paths, horizon: float) -> Events:
    """All main and delayed claim events with time ``<= horizon`` for the given global path ids."""
    paths = np.asarray(paths, dtype=np.int64)
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ModelError(f"simulation horizon must be finite and > 0, got {horizon}")
    d = scn.dim
    pl, ai, at = _arrivals(scn.renewal, stream, paths, horizon)
    cd = np.arange(d, dtype=np.uint64)

    xk = stream.path_keys(CLAIM_X, paths)[pl]
    qx = CounterStream.uniforms(np.repeat(xk, d), (ai.astype(np.uint64)[:, None] * np.uint64(d) + cd).ravel())
    X = scn.F.from_uniforms(qx.reshape(-1, d)) * _discount(scn.r, at)[:, None]
    ev_p, ev_t, ev_a = [pl], [at], [X]

    if scn.has_delays() and pl.size:
        count = scn.count
        if count.n_uniforms:
            qm = CounterStream.uniforms(stream.path_keys(COUNT_M, paths)[pl], ai)
        else:
            qm = np.ones(pl.size)
        M = count.from_uniforms(qm)
        if M.size and M.max() >= 1 << PAIR_SHIFT:
            raise NumericalError("delayed-claim count exceeds the supported range")
        total = int(M.sum())
        if total:
            src = np.repeat(np.arange(pl.size), M)
            j = np.arange(total) - np.repeat(np.cumsum(M) - M, M)
            pair = pair_index(ai[src], j)
            dp = pl[src]
            if scn.delay.n_uniforms:
                qd = CounterStream.uniforms(stream.path_keys(DELAY, paths)[dp], pair)
                D = scn.delay.isf(qd)
            else:
                D = np.full(total, scn.delay.mean)
            tt = at[src] + D
            keep = tt <= horizon
            dp, tt, pair = dp[keep], tt[keep], pair[keep]
            yk = stream.path_keys(CLAIM_Y, paths)[dp]
            qy = CounterStream.uniforms(np.repeat(yk, d), (pair[:, None] * np.uint64(d) + cd).ravel())
            Y = scn.G.from_uniforms(qy.reshape(-1, d)) * _discount(scn.r, tt)[:, None]
            ev_p.append(dp), ev_t.append(tt), ev_a.append(Y)
    return Events(paths.size, np.concatenate(ev_p), np.concatenate(ev_t), np.concatenate(ev_a))


def aggregate_at(ev: Events, t_values) -> np.ndarray:
    """Discounted aggregates ``D_r(t)`` of every path, shape ``(len(t), n_paths, d)``."""
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    d = ev.amount.shape[1]
    out = np.zeros((t_values.size, ev.n_paths, d))
    for a, t in enumerate(t_values):
        mask = ev.time <= t
        p = ev.path[mask]
        amt = ev.amount[mask]
        for j in range(d):
            out[a, :, j] = np.bincount(p, weights=amt[:, j], minlength=ev.n_paths)
    return out


def first_entrance_times(ev: Events, x_values, A: rs.RareSet) -> np.ndarray:
    """First event time at which each path's running aggregate enters ``xA`` (``inf`` if never)."""
    x_values = np.atleast_1d(np.asarray(x_values, dtype=float))
    out = np.full((x_values.size, ev.n_paths), np.inf)
    if ev.path.size == 0:
        return out
    order = np.lexsort((ev.time, ev.path))
    p, t = ev.path[order], ev.time[order]
    cs = np.cumsum(ev.amount[order], axis=0)
    first = np.r_[True, p[1:] != p[:-1]]
    starts = np.flatnonzero(first)
    base = np.where(starts[:, None] > 0, cs[np.maximum(starts - 1, 0)], 0.0)
    running = cs - base[np.cumsum(first) - 1]
    g = rs.gauge(running, A)
    for a, x in enumerate(x_values):
        hit = np.flatnonzero(g > x)
        if hit.size:
            hp, pos = np.unique(p[hit], return_index=True)
            out[a, hp] = t[hit[pos]]
    return out


def simulate_arrivals(spec: RenewalSpec, t_max: float, stream: CounterStream, path: int = 0) -> np.ndarray:
    """Increasing arrival epochs in ``[0, t_max]`` of one path."""
    if not (t_max > 0 and math.isfinite(t_max)):
        raise ModelError(f"t_max must be finite and > 0, got {t_max}")
    _, _, t = _arrivals(spec, stream, np.array([path]), t_max)
    return t


def simulate_discounted_aggregate(scn: Scenario, t: float, stream: CounterStream, path: int = 0) -> np.ndarray:
    """One realization of ``D_r(t)`` (a d-vector) for global path id ``path``."""
    ev = simulate_events(scn, stream, np.array([path]), t)
    return aggregate_at(ev, [t])[0, 0]


def block_size(scn: Scenario, horizon: float, budget: int = 2**21) -> int:
    """Paths per simulation block, sized so a block holds about ``budget`` event values."""
    arrivals = horizon / scn.renewal.interarrival.mean + 1.0
    per_path = arrivals * (1.0 + scn.count.mean) * (scn.dim + 2)
    return int(min(2**16, max(64, budget // max(1, int(per_path)))))
