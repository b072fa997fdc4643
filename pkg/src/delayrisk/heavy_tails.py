"""One-dimensional laws: claim marginals, delay laws and interarrival laws.

All laws are supported on ``[0, inf)``.  Sampling is inverse transform from
*tail* uniforms ``q in (0, 1]`` via :meth:`Distribution.isf`, so the far tail is
resolved without cancellation.  Karamata/Matuszewska indexes are available in
closed form per family and empirically from any tail function.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, ClassVar

import numpy as np
from scipy import special

from .errors import ModelError, NumericalError, UnsupportedError

_UNDERFLOW = 1e-300


class Distribution:
    """Common interface; concrete laws are frozen dataclasses below."""

    kind: ClassVar[str] = ""
    n_uniforms: ClassVar[int] = 1  # tail uniforms consumed per variate
    bounded: ClassVar[bool] = False

    def tail(self, x):
        raise NotImplementedError

    def isf(self, q):
        raise NotImplementedError

    def cdf(self, x):
        return 1.0 - self.tail(x)

    def quantile(self, p):
        return self.isf(1.0 - np.asarray(p, dtype=float))

    def from_uniforms(self, q):
        """Map tail uniforms of shape ``(..., n_uniforms)`` to variates."""
        q = np.asarray(q, dtype=float)
        return self.isf(q[..., 0])

    def sample(self, rng: np.random.Generator, size=None):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        q = 1.0 - rng.random(shape + (self.n_uniforms,))
        out = self.from_uniforms(q)
        return float(out) if size is None else out

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def laplace(self, s: float) -> float:
        """``E[exp(-s X)]`` for ``s >= 0``."""
        raise UnsupportedError(f"no closed-form Laplace transform for {self.kind}")

    def to_dict(self) -> dict:
        return {"type": self.kind, **asdict(self)}


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ModelError(f"{name} must be a positive finite number, got {value}")


@dataclass(frozen=True)
class Pareto(Distribution):
    alpha: float
    scale: float = 1.0
    kind: ClassVar[str] = "pareto"

    def __post_init__(self):
        _positive("Pareto alpha", self.alpha)
        _positive("Pareto scale", self.scale)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x < self.scale, 1.0, (np.maximum(x, self.scale) / self.scale) ** -self.alpha)

    def isf(self, q):
        return self.scale * np.asarray(q, dtype=float) ** (-1.0 / self.alpha)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), self.scale)
        return -np.expm1(-self.alpha * np.log(x / self.scale))

    def quantile(self, p):
        return self.scale * np.exp(-np.log1p(-np.asarray(p, dtype=float)) / self.alpha)

    @property
    def mean(self):
        return self.alpha * self.scale / (self.alpha - 1.0) if self.alpha > 1 else math.inf


@dataclass(frozen=True)
class Lognormal(Distribution):
    mu: float = 0.0
    sigma: float = 1.0
    kind: ClassVar[str] = "lognormal"

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ModelError(f"Lognormal mu must be finite, got {self.mu}")
        _positive("Lognormal sigma", self.sigma)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(x > 0, x, 1.0)) - self.mu) / self.sigma
        return np.where(x > 0, special.ndtr(-z), 1.0)

    def isf(self, q):
        return np.exp(self.mu - self.sigma * special.ndtri(np.asarray(q, dtype=float)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(x > 0, x, 1.0)) - self.mu) / self.sigma
        return np.where(x > 0, special.ndtr(z), 0.0)

    def quantile(self, p):
        return np.exp(self.mu + self.sigma * special.ndtri(np.asarray(p, dtype=float)))

    @property
    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma**2)


@dataclass(frozen=True)
class Weibull(Distribution):
    """Heavy-tailed Weibull, ``P(X > x) = exp(-(x/scale)**shape)`` with shape in (0, 1)."""

    shape: float
    scale: float = 1.0
    kind: ClassVar[str] = "weibull"

    def __post_init__(self):
        if not 0 < self.shape < 1:
            raise ModelError(f"Weibull shape must lie in (0, 1), got {self.shape}")
        _positive("Weibull scale", self.scale)

    def tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.exp(-((x / self.scale) ** self.shape))

    def isf(self, q):
        return self.scale * (-np.log(np.asarray(q, dtype=float))) ** (1.0 / self.shape)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-((x / self.scale) ** self.shape))

    def quantile(self, p):
        return self.scale * (-np.log1p(-np.asarray(p, dtype=float))) ** (1.0 / self.shape)

    @property
    def mean(self):
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0
    kind: ClassVar[str] = "exponential"

    def __post_init__(self):
        _positive("Exponential rate", self.rate)

    def tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.exp(-self.rate * x)

    def isf(self, q):
        return -np.log(np.asarray(q, dtype=float)) / self.rate

    def cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(np.asarray(x, dtype=float), 0.0))

    def quantile(self, p):
        return -np.log1p(-np.asarray(p, dtype=float)) / self.rate

    @property
    def mean(self):
        return 1.0 / self.rate

    def laplace(self, s):
        return self.rate / (self.rate + s)


@dataclass(frozen=True)
class Erlang(Distribution):
    """Sum of ``k`` independent Exponential(rate) variables."""

    k: int
    rate: float = 1.0
    kind: ClassVar[str] = "erlang"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ModelError(f"Erlang k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        _positive("Erlang rate", self.rate)

    @property
    def n_uniforms(self):  # type: ignore[override]
        return self.k

    def tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return special.gammaincc(self.k, self.rate * x)

    def isf(self, q):
        return special.gammainccinv(self.k, np.asarray(q, dtype=float)) / self.rate

    def cdf(self, x):
        return special.gammainc(self.k, self.rate * np.maximum(np.asarray(x, dtype=float), 0.0))

    def quantile(self, p):
        return special.gammaincinv(self.k, np.asarray(p, dtype=float)) / self.rate

    def from_uniforms(self, q):
        q = np.asarray(q, dtype=float)
        return -np.log(q).sum(axis=-1) / self.rate

    @property
    def mean(self):
        return self.k / self.rate

    def laplace(self, s):
        return (self.rate / (self.rate + s)) ** self.k


@dataclass(frozen=True)
class Uniform(Distribution):
    a: float
    b: float
    kind: ClassVar[str] = "uniform"
    bounded: ClassVar[bool] = True

    def __post_init__(self):
        if not (0 <= self.a < self.b and math.isfinite(self.b)):
            raise ModelError(f"Uniform needs 0 <= a < b < inf, got a={self.a}, b={self.b}")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((self.b - x) / (self.b - self.a), 0.0, 1.0)

    def isf(self, q):
        return self.b - np.asarray(q, dtype=float) * (self.b - self.a)

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    def laplace(self, s):
        if s == 0:
            return 1.0
        return (math.exp(-s * self.a) - math.exp(-s * self.b)) / (s * (self.b - self.a))


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float = 0.0
    kind: ClassVar[str] = "deterministic"
    n_uniforms: ClassVar[int] = 0
    bounded: ClassVar[bool] = True

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ModelError(f"Deterministic value must be finite and >= 0, got {self.value}")

    def tail(self, x):
        return np.where(np.asarray(x, dtype=float) < self.value, 1.0, 0.0)

    def isf(self, q):
        return np.full(np.shape(q), self.value)

    def from_uniforms(self, q):
        return np.full(np.shape(q)[:-1], self.value)

    @property
    def mean(self):
        return self.value

    def laplace(self, s):
        return math.exp(-s * self.value)


MarginalModel = Distribution

_KINDS = {c.kind: c for c in (Pareto, Lognormal, Weibull, Exponential, Erlang, Uniform, Deterministic)}


def from_dict(spec: dict) -> Distribution:
    spec = dict(spec)
    kind = spec.pop("type", None)
    cls = _KINDS.get(kind)
    if cls is None:
        raise ModelError(f"unknown distribution type {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return cls(**spec)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {kind}: {exc}") from None


def heaviness(m: Distribution) -> tuple:
    """Sort key for tail heaviness; equal keys mean weakly equivalent tails.

    Larger keys are heavier.  Distinct keys of the same family are ordered by
    the parameter that governs the tail decay.
    """
    if isinstance(m, Pareto):
        return (5, -m.alpha)
    if isinstance(m, Lognormal):
        return (4, m.sigma)
    if isinstance(m, Weibull):
        return (3, -m.shape, m.scale)
    if isinstance(m, Erlang):
        return (2, -m.rate)
    if isinstance(m, Exponential):
        return (2, -m.rate)
    if isinstance(m, Deterministic) and m.value == 0:
        return (-1,)
    return (0,)


@dataclass
class IndexReport:
    """Lower Karamata and Matuszewska indexes with how they were obtained."""

    karamata_lower: float
    matuszewska_lower: float
    method: str
    consistent_with_infinity: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        k, j = self.karamata_lower, self.matuszewska_lower
        if math.isfinite(k) and math.isfinite(j) and k > j + 1e-12:
            raise ModelError(f"Karamata index {k} exceeds Matuszewska index {j}")


def karamata_lower_analytic(m: Distribution) -> IndexReport:
    if m.bounded:
        raise ModelError(f"{m.kind} law has a finite right endpoint; indexes are undefined")
    if isinstance(m, Pareto):
        return IndexReport(m.alpha, m.alpha, "analytic")
    # lognormal, heavy Weibull, exponential and Erlang tails vary rapidly
    return IndexReport(math.inf, math.inf, "analytic")


def empirical_limsup_ratio(tail_fn: Callable, v: float, x_grid) -> float:
    """Max of ``tail(v x) / tail(x)`` over the upper half of ``x_grid``."""
    if not v > 1:
        raise ModelError(f"v must exceed 1, got {v}")
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 32 or np.any(np.diff(x) <= 0):
        raise ModelError("x_grid must be increasing with at least 32 points")
    upper = x[x.size // 2:]
    base = np.asarray(tail_fn(upper), dtype=float)
    if np.any(base <= 0):
        usable = x[np.asarray(tail_fn(x)) > 0]
        largest = float(usable[-1]) if usable.size else None
        raise NumericalError(
            f"tail underflows on the grid; largest usable x is {largest}", largest_usable_x=largest
        )
    return float(np.max(np.asarray(tail_fn(v * upper), dtype=float) / base))


def _slope_through_origin(v_grid, ratios) -> float:
    lv = np.log(v_grid)
    return float(np.dot(lv, -np.log(ratios)) / np.dot(lv, lv))


def estimate_karamata_lower(tail_fn: Callable, v_grid, x_grid) -> IndexReport:
    """Empirical lower Karamata index as the least-squares slope of ``-log B*(v)`` on ``log v``.

    Reports ``+inf`` when some empirical ``B*(v)`` falls below the floating
    point underflow threshold.  The estimate is flagged as consistent with
    ``+inf`` when it keeps growing as the x grid is extended, which is what a
    rapidly varying tail does and a regularly varying one does not.
    """
    v = np.asarray(v_grid, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    if v.size < 4 or np.any(v <= 1) or np.any(v > 1.2 + 1e-12) or np.unique(v).size != v.size:
        raise ModelError("v_grid needs at least 4 distinct points in (1, 1.2]")
    usable = np.asarray(tail_fn(x), dtype=float) > _UNDERFLOW
    diag: dict = {"v_grid": v.tolist()}
    if not usable.all():
        # rapidly varying tails can underflow before the grid ends; keep the usable part
        diag["requested_x_max"] = float(x[-1])
        x = x[usable]
        if x.size < 32:
            raise NumericalError("fewer than 32 grid points with a representable tail", largest_usable_x=float(x[-1]) if x.size else None)
    ratios = np.array([empirical_limsup_ratio(tail_fn, vi, x) for vi in v])
    diag.update(limsup_ratios=ratios.tolist(), x_max=float(x[-1]))
    if np.any(ratios < _UNDERFLOW):
        return IndexReport(math.inf, math.inf, "empirical", True, diag)
    est = _slope_through_origin(v, ratios)
    cut = x[: max(32, (3 * x.size) // 4)]
    flagged = False
    if cut.size < x.size:
        r_cut = np.array([empirical_limsup_ratio(tail_fn, vi, cut) for vi in v])
        est_cut = _slope_through_origin(v, r_cut) if np.all(r_cut >= _UNDERFLOW) else math.inf
        diag["estimate_on_shorter_grid"] = est_cut
        flagged = est > 1.05 * est_cut
    # the Matuszewska index is not estimated empirically; K- <= J- holds with J- = inf
    return IndexReport(est, math.inf, "empirical", flagged, diag)
