"""Numerical probes of heavy-tail closure properties.

Every probe computes a ratio series along an ``x`` grid and certifies
*consistency* with an asymptotic statement: the final ratio lies in a band and
the last three ratios approach 1 monotonically.  Nothing here proves class
membership.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import heavy_tails as ht
from . import rare_sets as rs
from ._grid import DEFAULT_POINTS, sum_tail, tabulate
from .claim_models import ClaimVectorModel, ProbValue, exact_entrance_prob, sample_claim_vector
from .errors import ModelError, NumericalError

log = logging.getLogger(__name__)

DEFAULT_BAND = (0.95, 1.05)
WIDE_BAND = (0.8, 1.25)
_MIN_HITS = 100


@dataclass
class ClosureReport:
    prop: str
    x_grid: np.ndarray
    ratios: np.ndarray
    band: tuple[float, float]
    passed: bool
    constants: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=float)
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise NumericalError(f"{self.prop}: ratios must be positive and finite, got {r}")

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def rows(self) -> list[dict]:
        lo, hi = self.band
        return [
            {"property": self.prop, "x": float(x), "ratio": float(r), "band_lo": lo, "band_hi": hi, "verdict": self.verdict}
            for x, r in zip(self.x_grid, np.ravel(self.ratios))
        ]


def default_band(*models) -> tuple[float, float]:
    """Wider band when a lognormal or Weibull law is involved (slow second-order terms)."""
    if any(isinstance(m, (ht.Lognormal, ht.Weibull)) for m in models):
        return WIDE_BAND
    return DEFAULT_BAND


def approaches_one(ratios, band, slack: float = 1e-9) -> bool:
    """Final ratio in ``band`` and ``|r - 1|`` nonincreasing over the last three points."""
    r = np.asarray(ratios, dtype=float)
    if r.size == 0 or not band[0] <= r[-1] <= band[1]:
        return False
    dev = np.abs(r[-3:] - 1.0)
    return bool(np.all(np.diff(dev) <= slack))


def _x_grid(x_grid) -> np.ndarray:
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size == 0 or np.any(np.diff(x) <= 0) or np.any(x <= 0):
        raise ModelError("x_grid must be a nonempty increasing grid of positive levels")
    return x


def convolution_tail(m1: ht.Distribution, m2: ht.Distribution, x, n: int = DEFAULT_POINTS) -> ProbValue:
    """``P(Z1 + Z2 > x)`` for independent nonnegative ``Z1 ~ m1``, ``Z2 ~ m2``."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~(xa > 0)):
        raise ModelError("convolution levels must be > 0")
    model = ClaimVectorModel((m1, m2))
    pv = exact_entrance_prob(model, xa, rs.HalfSpaceSum((0.5, 0.5), 0.5), n_grid=n)
    if np.ndim(x) == 0:
        return ProbValue(float(pv.value[0]), float(pv.error[0]), pv.method)
    return pv


def _require_unbounded(*models):
    for m in models:
        if m.bounded:
            raise ModelError(f"{m.kind} law has a finite right endpoint; tail closure checks need unbounded support")


def check_tail_additivity(
    m1: ht.Distribution, m2: ht.Distribution, x_grid, band=None, negligible: bool = False
) -> ClosureReport:
    """Ratio of the convolution tail to ``tail1 + tail2`` (or to ``tail1`` alone when ``negligible``)."""
    _require_unbounded(m1, m2)
    x = _x_grid(x_grid)
    band = band or default_band(m1, m2)
    conv = convolution_tail(m1, m2, x)
    denom = m1.tail(x) if negligible else m1.tail(x) + m2.tail(x)
    ratios = conv.value / denom
    prop = "tail_additivity_negligible" if negligible else "tail_additivity"
    return ClosureReport(
        prop, x, ratios, band, approaches_one(ratios, band), diagnostics={"grid_error": np.asarray(conv.error).tolist()}
    )


def check_max_sum_equivalence(m1: ht.Distribution, m2: ht.Distribution, x_grid, band=None) -> ClosureReport:
    """``P(max(Z1, Z2) > x) / (tail1 + tail2)`` for independent components, in closed form."""
    x = _x_grid(x_grid)
    band = band or DEFAULT_BAND
    t1, t2 = m1.tail(x), m2.tail(x)
    ratios = 1.0 - t1 * t2 / (t1 + t2)
    return ClosureReport("max_sum_equivalence", x, ratios, band, approaches_one(ratios, band))


def _nfold_tails_1d(m: ht.Distribution, w: float, n_max: int, x: np.ndarray):
    """``P(w S_k > x)`` for ``k = 1..n_max`` by repeated grid convolution, with error estimates."""
    base = lambda u: m.tail(u / w)  # noqa: E731
    lo, hi = float(x[-1]) * 1e-12, float(x[-1])
    values = [np.asarray(base(x), dtype=float)]
    errors = [np.zeros_like(x)]
    prev = base
    for _ in range(2, n_max + 1):
        v, e = sum_tail(base, prev, x)
        values.append(v)
        errors.append(e)
        tab_fn = prev

        def next_tail(u, _p=tab_fn):
            return sum_tail(base, _p, u, DEFAULT_POINTS // 4)[0]

        prev = tabulate(next_tail, lo, hi, 1536)
    return np.array(values), np.array(errors)


def kesten_probe(
    model: ClaimVectorModel,
    A: rs.RareSet,
    eps: float,
    n_max: int,
    x_grid,
    *,
    n_mc: int = 10**6,
    seed: int = 0,
) -> ClosureReport:
    """Ratios ``P(S_n in xA) / P(Z in xA)`` and the smallest ``C`` with ratio <= C (1 + eps)^n.

    One-dimensional problems use repeated grid convolution; otherwise paths of
    partial sums are simulated and ``x`` levels with too few hits are dropped.
    ``ratios`` has shape ``(n_max, len(x_grid))``.
    """
    if not eps > 0:
        raise ModelError("eps must be > 0")
    if not 1 <= n_max <= 10:
        raise ModelError("n_max must lie in 1..10")
    x = _x_grid(x_grid)
    if model.dim != A.dim:
        raise ModelError("model and set dimensions differ")
    w = rs.sum_weights(A)
    diag: dict = {}
    if model.dim == 1 and w is not None:
        probs, errs = _nfold_tails_1d(model.marginals[0], float(w[0]), n_max, x)
        method = "convolution"
        diag["grid_error"] = errs.tolist()
    else:
        rng = np.random.default_rng(seed)
        hits = np.zeros((n_max, x.size), dtype=np.int64)
        chunk = max(1, 2**20 // (model.dim * n_max))
        for lo in range(0, n_mc, chunk):
            m = min(chunk, n_mc - lo)
            z = sample_claim_vector(model, rng, m * n_max).reshape(m, n_max, model.dim)
            g = rs.gauge(np.cumsum(z, axis=1), A)  # (m, n)
            hits += (g[:, :, None] > x).sum(axis=0)
        keep = hits[0] >= _MIN_HITS
        if not keep.all():
            dropped = x[~keep].tolist()
            log.warning("kesten probe: too few hits, dropping x levels %s", dropped)
            diag["dropped_x"] = dropped
        if not keep.any():
            raise NumericalError("kesten probe: no x level has enough hits")
        x, probs = x[keep], hits[:, keep] / n_mc
        method = "monte-carlo"
    ratios = probs / probs[0]
    n = np.arange(1, n_max + 1)[:, None]
    C = float(np.max(ratios / (1.0 + eps) ** n))
    per_n = ratios[:, -1] / n[:, 0]
    band = DEFAULT_BAND
    converging = all(approaches_one(ratios[k] / (k + 1), (0.0, math.inf)) for k in range(n_max))
    passed = math.isfinite(C) and converging and bool(np.all((band[0] <= per_n) & (per_n <= band[1])))
    diag.update(method=method, ratio_over_n_at_largest_x=per_n.tolist())
    report = ClosureReport("kesten", x, ratios, band, passed, {"C_eps": C, "eps": eps}, diag)
    return report


def _mixture_tail(m: ht.Distribution, w: ht.Distribution):
    if isinstance(w, ht.Deterministic):
        c = w.value
        return lambda x: m.tail(np.asarray(x, dtype=float) / c)
    a, b = w.a, w.b

    def q(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            val, _ = integrate.quad(lambda u: float(m.tail(xi / u)), max(a, 1e-300), b, epsabs=0.0, epsrel=1e-12, limit=200)
            out[i] = val / (b - a)
        return out

    return q


def product_convolution_check(
    m: ht.Distribution, w: ht.Distribution, v_grid, x_grid, slack: float = 0.02
) -> ClosureReport:
    """Compare ``Q*(v)`` of ``W Z`` with ``B*(v)`` of ``Z`` for a weight ``W`` in ``[0, 1]``.

    ``ratios`` holds ``Q*(v) / B*(v)`` per ``v``; the check passes when all of
    them are at most ``1 + slack``.
    """
    if isinstance(w, ht.Deterministic):
        if not 0 < w.value <= 1:
            raise ModelError("deterministic weight must lie in (0, 1]")
    elif isinstance(w, ht.Uniform):
        if w.b > 1:
            raise ModelError("uniform weight must be supported in [0, 1]")
    else:
        raise ModelError("weight law must be deterministic or uniform on a subset of [0, 1]")
    v = np.asarray(v_grid, dtype=float)
    x = _x_grid(x_grid)
    Q = _mixture_tail(m, w)
    q_star = np.array([ht.empirical_limsup_ratio(Q, vi, x) for vi in v])
    b_star = np.array([ht.empirical_limsup_ratio(m.tail, vi, x) for vi in v])
    ratios = q_star / b_star
    passed = bool(np.all(ratios <= 1.0 + slack))
    consts = {"Q_star": q_star.tolist(), "B_star": b_star.tolist(), "slack": slack}
    diag: dict = {}
    if v.size >= 4:
        kq = ht.estimate_karamata_lower(Q, v, x).karamata_lower
        kb = ht.estimate_karamata_lower(m.tail, v, x).karamata_lower
        consts.update(karamata_Q=kq, karamata_B=kb)
        diag["index_order_consistent"] = bool(kq >= kb - 0.05 or math.isinf(kq))
    return ClosureReport("product_convolution", v, ratios, (0.0, 1.0 + slack), passed, consts, diag)
