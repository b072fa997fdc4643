"""Asymptotic approximations of entrance probabilities.

Each evaluator returns the main-claim term and the delayed-claim term
separately.  The general forms integrate the exact gauge tails of the claim
laws against the renewal measure (and the delay law); the regularly varying
forms replace those tails by limit measure times reference tail, which turns
the integrals into Laplace transforms.

Formula tags:

``thm31i`` / ``thm31ii``
    finite horizon, with / without the delayed term;
``thm41i`` / ``thm41ii``
    infinite horizon, with / without the delayed term;
``cor31i`` / ``cor31ii``, ``cor41i`` / ``cor41ii``
    the regularly varying closed forms of the same four quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import heavy_tails as ht
from .claim_models import ClaimVectorModel, GaugeTail, MRVSpec
from .errors import ModelError, NumericalError
from .rare_sets import RareSet
from .renewal import Scenario, integrate_against_renewal, renewal_function

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class AsymptoticValue:
    value: float
    formula: str
    achieved_tol: float
    main: float
    delayed: float
    x: float
    t: float
    t_star: float | None = None

    def as_row(self) -> dict:
        return {
            "formula": self.formula,
            "x": self.x,
            "t": self.t,
            "value": self.value,
            "main": self.main,
            "delayed": self.delayed,
            "achieved_tol": self.achieved_tol,
        }


@lru_cache(maxsize=32)
def gauge_tail(model: ClaimVectorModel, A: RareSet) -> GaugeTail:
    return GaugeTail(model, A, per_decade=128)


def _decay_index(model: ClaimVectorModel, A: RareSet) -> float:
    """Smallest lower Karamata index among the components the set looks at."""
    used = A.index_points().max(axis=0) > 0
    idx = [ht.karamata_lower_analytic(m).karamata_lower for m, u in zip(model.marginals, used) if u and not m.bounded]
    return min(idx) if idx else math.inf


MIN_TOL = 1e-12


def _check_tol(tol):
    if not tol > 0:
        raise ModelError(f"tol must be > 0, got {tol}")
    if tol < MIN_TOL:
        raise NumericalError(f"tol {tol:.3g} is below the attainable quadrature accuracy {MIN_TOL:.0e}", achieved_tol=MIN_TOL)


def _check_x(x):
    if not (x > 0 and math.isfinite(x)):
        raise ModelError(f"x must be finite and > 0, got {x}")


def _check_t(scn: Scenario, t):
    if not (t >= 0 and math.isfinite(t)):
        raise ModelError(f"horizon t must be finite and >= 0, got {t}")
    if t > 0 and renewal_function(scn.renewal, t) <= 0:
        raise ModelError(f"t={t} lies outside the support of the renewal measure")


def _rel(err, val):
    return 0.0 if err == 0 else (err / val if val > 0 else math.inf)


def _delay_integral(f, H: ht.Distribution, upper: float, tol: float) -> tuple[float, float]:
    """``int_[0, upper] f(y) H(dy)`` for a scalar integrand and a delay law."""
    if upper < 0:
        return 0.0, 0.0
    if isinstance(H, ht.Deterministic):
        return (float(f(H.value)), 0.0) if H.value <= upper else (0.0, 0.0)
    if isinstance(H, ht.Uniform):
        lo, hi = H.a, min(H.b, upper)
        if hi <= lo:
            return 0.0, 0.0
        v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=tol, limit=200)
        w = 1.0 / (H.b - H.a)
        return v * w, e * w
    if isinstance(H, ht.Exponential):
        eta = H.rate
        v, e = integrate.quad(lambda y: f(y) * eta * math.exp(-eta * y), 0.0, upper, epsabs=0.0, epsrel=tol, limit=200)
        return v, e
    raise ModelError(f"unsupported delay law {H.kind}")


def _delay_breaks(H: ht.Distribution, t: float):
    if isinstance(H, ht.Deterministic):
        return (t - H.value,)
    if isinstance(H, ht.Uniform):
        return (t - H.b, t - H.a)
    return ()


def _growth(u: float) -> float:
    return math.exp(u) if u < 700.0 else math.inf


class _Terms:
    """Exact-tail integrands of one scenario and level ``x``."""

    def __init__(self, scn: Scenario, x: float):
        self.scn, self.x = scn, x
        self.pX = gauge_tail(scn.F, scn.rare_set)
        self.pY = gauge_tail(scn.G, scn.rare_set) if scn.has_delays() else None

    def main_integrand(self, s):
        with np.errstate(over="ignore"):
            return self.pX(self.x * np.exp(self.scn.r * np.asarray(s, dtype=float)))

    def delayed_inner(self, s: float, t: float, tol: float) -> tuple[float, float]:
        r, x = self.scn.r, self.x
        pY = self.pY
        return _delay_integral(lambda y: float(pY(x * _growth(r * (s + y)))), self.scn.delay, t - s, tol)

    def delayed_integrand(self, t: float, tol: float, errs: list):
        def g(s):
            s = np.atleast_1d(np.asarray(s, dtype=float))
            out = np.empty_like(s)
            for i, si in enumerate(s):
                out[i], e = self.delayed_inner(float(si), t, tol)
                errs.append(_rel(e, out[i]))
            return out

        return g


def _main(scn, terms, t, tol):
    decay = scn.r * _decay_index(scn.F, scn.rare_set) if math.isinf(t) else None
    res = integrate_against_renewal(terms.main_integrand, scn.renewal, t, tol, decay_rate=decay)
    return res.value, _rel(res.abs_err, res.value) + terms.pX.rel_error, res.t_star


def _delayed(scn, terms, t, tol):
    if terms.pY is None:
        return 0.0, 0.0, None
    errs: list = []
    g = terms.delayed_integrand(t, tol, errs)
    decay = scn.r * _decay_index(scn.G, scn.rare_set) if math.isinf(t) else None
    brk = () if math.isinf(t) else _delay_breaks(scn.delay, t)
    res = integrate_against_renewal(g, scn.renewal, t, tol, decay_rate=decay, breakpoints=brk)
    inner = max(errs, default=0.0)
    value = scn.count.mean * res.value
    return value, _rel(res.abs_err, res.value) + inner + terms.pY.rel_error, res.t_star


def _finish(main, delayed, formula, x, t, tol, t_star=None):
    (m, em), (dv, ed) = main, delayed
    value = m + dv
    achieved = (m * em + dv * ed) / value if value > 0 else max(em, ed)
    if achieved > tol:
        raise NumericalError(f"{formula}: achieved relative error {achieved:.3g} exceeds tol {tol:.3g}", achieved_tol=achieved)
    return AsymptoticValue(value, formula, achieved, m, dv, x, t, t_star)


def finite_horizon_equivalent(scn: Scenario, x: float, t: float, tol: float = DEFAULT_TOL) -> AsymptoticValue:
    """Main plus delayed term over ``[0, t]`` (delayed claims as heavy as main claims)."""
    _check_tol(tol)
    _check_x(x)
    _check_t(scn, t)
    terms = _Terms(scn, x)
    m, em, _ = _main(scn, terms, t, tol / 2)
    dv, ed, _ = _delayed(scn, terms, t, tol / 2)
    return _finish((m, em), (dv, ed), "thm31i", x, t, tol)


def finite_horizon_negligible(scn: Scenario, x: float, t: float, tol: float = DEFAULT_TOL) -> AsymptoticValue:
    """Main term only over ``[0, t]`` (delayed claims of lighter tail)."""
    _check_tol(tol)
    _check_x(x)
    _check_t(scn, t)
    m, em, _ = _main(scn, _Terms(scn, x), t, tol)
    return _finish((m, em), (0.0, 0.0), "thm31ii", x, t, tol)


def infinite_horizon_equivalent(scn: Scenario, x: float, tol: float = DEFAULT_TOL) -> AsymptoticValue:
    scn.require_discount()
    _check_tol(tol)
    _check_x(x)
    terms = _Terms(scn, x)
    m, em, t1 = _main(scn, terms, math.inf, tol / 2)
    dv, ed, t2 = _delayed(scn, terms, math.inf, tol / 2)
    t_star = max(v for v in (t1, t2) if v is not None)
    return _finish((m, em), (dv, ed), "thm41i", x, math.inf, tol, t_star)


def infinite_horizon_negligible(scn: Scenario, x: float, tol: float = DEFAULT_TOL) -> AsymptoticValue:
    scn.require_discount()
    _check_tol(tol)
    _check_x(x)
    m, em, t1 = _main(scn, _Terms(scn, x), math.inf, tol)
    return _finish((m, em), (0.0, 0.0), "thm41ii", x, math.inf, tol, t1)


def approximate(scn: Scenario, x: float, t: float, tol: float = DEFAULT_TOL) -> AsymptoticValue:
    """Evaluator matching the scenario's regime, finite or infinite ``t``."""
    both = scn.regime == "equivalent" and scn.has_delays()
    if math.isinf(t):
        return (infinite_horizon_equivalent if both else infinite_horizon_negligible)(scn, x, tol)
    return (finite_horizon_equivalent if both else finite_horizon_negligible)(scn, x, t, tol)


# ----------------------------------------------------------- regularly varying


def discounted_delay_cdf(H: ht.Distribution, a: float, u: float) -> float:
    """``E[exp(-a D) 1{D <= u}]`` in closed form."""
    if u < 0:
        return 0.0
    if isinstance(H, ht.Deterministic):
        return math.exp(-a * H.value) if H.value <= u else 0.0
    if isinstance(H, ht.Exponential):
        eta = H.rate
        return eta * -math.expm1(-(eta + a) * u) / (eta + a)
    if isinstance(H, ht.Uniform):
        lo, hi = H.a, min(H.b, u)
        if hi <= lo:
            return 0.0
        width = H.b - H.a
        if a == 0:
            return (hi - lo) / width
        return (math.exp(-a * lo) - math.exp(-a * hi)) / (a * width)
    raise ModelError(f"unsupported delay law {H.kind}")


def _mrv_parts(mrv: MRVSpec, A: RareSet, x: float) -> float:
    return mrv.mu(A) * float(mrv.reference_tail.tail(x))


def mrv_finite(
    scn: Scenario, x: float, t: float, mrvF: MRVSpec, mrvG: MRVSpec | None = None, tol: float = DEFAULT_TOL
) -> AsymptoticValue:
    """Regularly varying form over ``[0, t]``; the delayed term needs ``mrvG``."""
    _check_tol(tol)
    _check_x(x)
    _check_t(scn, t)
    if mrvF is None:
        raise ModelError("a regular-variation spec for the main claims is required")
    A, r = scn.rare_set, scn.r
    aF = mrvF.alpha * r
    res = integrate_against_renewal(lambda s: np.exp(-aF * np.asarray(s)), scn.renewal, t, tol / 2)
    main = _mrv_parts(mrvF, A, x) * res.value
    em = _rel(res.abs_err, res.value)
    delayed, ed = 0.0, 0.0
    if mrvG is not None and scn.has_delays():
        aG = mrvG.alpha * r
        H = scn.delay

        def g(s):
            s = np.atleast_1d(np.asarray(s, dtype=float))
            return np.array([math.exp(-aG * si) * discounted_delay_cdf(H, aG, t - si) for si in s])

        res = integrate_against_renewal(g, scn.renewal, t, tol / 2, breakpoints=_delay_breaks(H, t))
        delayed = _mrv_parts(mrvG, A, x) * scn.count.mean * res.value
        ed = _rel(res.abs_err, res.value)
    formula = "cor31i" if mrvG is not None else "cor31ii"
    return _finish((main, em), (delayed, ed), formula, x, t, tol)


def mrv_infinite(scn: Scenario, x: float, mrvF: MRVSpec, mrvG: MRVSpec | None = None) -> AsymptoticValue:
    """Closed form through Laplace transforms of the interarrival and delay laws."""
    scn.require_discount()
    _check_x(x)
    if mrvF is None:
        raise ModelError("a regular-variation spec for the main claims is required")
    A, r, theta = scn.rare_set, scn.r, scn.renewal.interarrival

    def geometric_factor(alpha):
        phi = theta.laplace(alpha * r)
        return phi / (1.0 - phi)

    main = _mrv_parts(mrvF, A, x) * geometric_factor(mrvF.alpha)
    delayed = 0.0
    if mrvG is not None and scn.has_delays():
        aG = mrvG.alpha
        delayed = (
            _mrv_parts(mrvG, A, x) * scn.count.mean * scn.delay.laplace(aG * r) * geometric_factor(aG)
        )
    formula = "cor41i" if mrvG is not None else "cor41ii"
    return AsymptoticValue(main + delayed, formula, 0.0, main, delayed, x, math.inf, None)


def entrance_time_bound(t, alpha: float, r: float):
    """``1 - exp(-alpha r t)``: upper bound on the conditional entrance-time distribution."""
    if not alpha * r > 0:
        raise ModelError("entrance-time bound needs alpha * r > 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ModelError("t must be >= 0")
    out = -np.expm1(-alpha * r * t)
    return float(out) if out.ndim == 0 else out


def truncation_horizon(scn: Scenario, x: float, tol: float = 1e-3) -> float:
    """Horizon ``T*`` beyond which the infinite-horizon approximation gains less than ``tol``."""
    both = scn.has_delays()
    fn = infinite_horizon_equivalent if both else infinite_horizon_negligible
    try:
        return fn(scn, x, tol).t_star
    except NumericalError as exc:
        raise NumericalError(f"could not fix a truncation horizon: {exc}", achieved_tol=exc.achieved_tol) from exc
