"""Claim-vector laws: marginals plus an independence or FGM copula.

Besides sampling, this module evaluates gauge tails ``P(Z in yA)`` exactly
where the structure allows it: a product formula for max-form sets, a grid
convolution for sum-form sets in low dimension, and a Monte Carlo fallback
otherwise.  Every value carries a method tag and an error estimate.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import heavy_tails as ht
from . import rare_sets as rs
from ._grid import DEFAULT_POINTS, TabulatedTail, sum_tail, sum_tail_values, tabulate
from .errors import DimensionMismatchError, ModelError, UnsupportedError
from .rare_sets import RareSet

MC_FALLBACK_N = 10**6
_TABLE_PER_DECADE = 64


@dataclass(frozen=True)
class Independent:
    kind = "independent"

    def to_dict(self):
        return {"type": "independent"}


@dataclass(frozen=True)
class FGM:
    """Farlie-Gumbel-Morgenstern copula.

    ``theta`` lists the pairwise parameters ``theta_ij`` (i < j) in
    lexicographic order; a bare number is accepted for ``d = 2``.  The copula
    density ``1 + sum theta_ij (1 - 2u_i)(1 - 2u_j)`` must be nonnegative.
    """

    theta: tuple[float, ...]
    kind = "fgm"

    def __post_init__(self):
        th = self.theta
        th = (float(th),) if np.isscalar(th) else tuple(float(v) for v in th)
        object.__setattr__(self, "theta", th)
        if any(not -1.0 <= v <= 1.0 for v in th):
            raise ModelError(f"FGM parameters must lie in [-1, 1], got {th}")
        d = self.dim
        if d * (d - 1) // 2 != len(th):
            raise ModelError(f"FGM needs d(d-1)/2 pairwise parameters, got {len(th)}")
        mat = self.matrix()
        # density at the corners of the cube; it is multilinear so these bound it
        for eps in itertools.product((-1.0, 1.0), repeat=d):
            e = np.asarray(eps)
            if 1.0 + 0.5 * e @ mat @ e < -1e-12:
                raise ModelError(f"FGM parameters {th} give a negative copula density")

    @property
    def dim(self) -> int:
        return int(round((1 + math.sqrt(1 + 8 * len(self.theta))) / 2))

    def matrix(self) -> np.ndarray:
        d = self.dim
        m = np.zeros((d, d))
        m[np.triu_indices(d, 1)] = self.theta
        return m + m.T

    def to_dict(self):
        return {"type": "fgm", "theta": list(self.theta)}


Dependence = Union[Independent, FGM]


def fgm_transform(q: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Map i.i.d. uniforms (last axis = d) to an FGM-distributed vector.

    Conditional inverse transform, one coordinate at a time.  The FGM copula
    is radially symmetric, so the same map works on tail uniforms.
    """
    q = np.asarray(q, dtype=float)
    v = np.empty_like(q)
    v[..., 0] = q[..., 0]
    d = q.shape[-1]
    s = 1.0 - 2.0 * v[..., :1]  # (1 - 2v_i) for coordinates placed so far
    norm = np.ones(q.shape[:-1])
    for k in range(1, d):
        lin = s @ theta[:k, k]
        b = lin / norm
        w = q[..., k]
        root = np.sqrt(np.maximum((1.0 + b) ** 2 - 4.0 * b * w, 0.0))
        vk = 2.0 * w / ((1.0 + b) + root)
        v[..., k] = vk
        sk = 1.0 - 2.0 * vk
        norm = norm + lin * sk
        s = np.concatenate([s, sk[..., None]], axis=-1)
    return v


@dataclass(frozen=True)
class ClaimVectorModel:
    marginals: tuple[ht.Distribution, ...]
    dependence: Dependence = field(default_factory=Independent)

    def __post_init__(self):
        margs = tuple(self.marginals)
        object.__setattr__(self, "marginals", margs)
        if not margs:
            raise ModelError("a claim vector needs at least one marginal")
        if all(isinstance(m, ht.Deterministic) and m.value == 0 for m in margs):
            raise ModelError("claim vector is almost surely zero")
        if isinstance(self.dependence, FGM) and self.dependence.dim != len(margs):
            raise DimensionMismatchError(len(margs), self.dependence.dim, "FGM parameter set")

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def from_uniforms(self, q: np.ndarray) -> np.ndarray:
        """Claim vectors from tail uniforms of shape ``(..., d)``, one per component."""
        q = np.asarray(q, dtype=float)
        if isinstance(self.dependence, FGM) and self.dim > 1:
            q = fgm_transform(q, self.dependence.matrix())
        out = np.empty(q.shape)
        for j, m in enumerate(self.marginals):
            out[..., j] = m.isf(q[..., j])
        return out

    def to_dict(self) -> dict:
        return {
            "marginals": [m.to_dict() for m in self.marginals],
            "dependence": self.dependence.to_dict(),
        }


def model_from_dict(spec: dict) -> ClaimVectorModel:
    dep = spec.get("dependence", {"type": "independent"})
    kind = dep.get("type")
    if kind == "independent":
        dependence: Dependence = Independent()
    elif kind == "fgm":
        dependence = FGM(dep["theta"])
    else:
        raise ModelError(f"unknown dependence type {kind!r}")
    return ClaimVectorModel(tuple(ht.from_dict(m) for m in spec["marginals"]), dependence)


def sample_claim_vector(model: ClaimVectorModel, rng: np.random.Generator, size=None):
    """Draw claim vectors; ``size=None`` gives a single d-vector.

    Independent components are drawn one marginal at a time, so a
    one-dimensional model consumes the stream exactly like its marginal.
    """
    n = 1 if size is None else int(size)
    if isinstance(model.dependence, FGM) and model.dim > 1:
        out = model.from_uniforms(1.0 - rng.random((n, model.dim)))
    else:
        out = np.column_stack([np.atleast_1d(m.sample(rng, n)) for m in model.marginals])
    return out[0] if size is None else out


# ---------------------------------------------------------------- exact tails


@dataclass(frozen=True)
class ProbValue:
    value: float | np.ndarray
    error: float | np.ndarray
    method: str


def _is_zero(m) -> bool:
    return isinstance(m, ht.Deterministic) and m.value == 0


def _check_dim(model: ClaimVectorModel, A: RareSet):
    if model.dim != A.dim:
        raise DimensionMismatchError(model.dim, A.dim, "rare set")


def _product_tail(model, w, y):
    """``P(max_j w_j Z_j > y)`` for independent or FGM components."""
    y = np.asarray(y, dtype=float)
    active = [j for j, wj in enumerate(w) if wj > 0]
    if len(active) == 1:
        j = active[0]
        return np.asarray(model.marginals[j].tail(y / w[j]), dtype=float)
    t = np.zeros(y.shape + (model.dim,))
    for j in active:
        t[..., j] = model.marginals[j].tail(y / w[j])
    with np.errstate(divide="ignore"):
        p_none = -np.expm1(np.sum(np.log1p(-np.minimum(t, 1.0)), axis=-1))
    if isinstance(model.dependence, FGM):
        th = model.dependence.matrix()
        quad = 0.5 * np.einsum("...i,ij,...j->...", t, th, t)
        # 1 - prod(1 - t) * (1 + sum theta_ij t_i t_j), kept cancellation-free
        return np.clip(p_none - (1.0 - p_none) * quad, 0.0, 1.0)
    return p_none


def _scaled_tail(m, wj):
    return lambda u: m.tail(u / wj)


def _convolution_plan(model, w):
    """Continuous terms, deterministic shift and FGM parameter of a weighted sum, or None."""
    active = [j for j, wj in enumerate(w) if wj > 0 and not _is_zero(model.marginals[j])]
    shift = sum(w[j] * model.marginals[j].value for j in active if isinstance(model.marginals[j], ht.Deterministic))
    cont = [j for j in active if not isinstance(model.marginals[j], ht.Deterministic)]
    theta = 0.0
    if isinstance(model.dependence, FGM) and len(cont) > 1:
        if len(cont) > 2:
            return None
        theta = model.dependence.matrix()[cont[0], cont[1]]
    if len(cont) > 3:
        return None
    return cont, shift, theta


def _sum_tail_direct(model, w, y, plan, n=DEFAULT_POINTS):
    """``P(sum_j w_j Z_j > y)`` and its grid error for every level in ``y``."""
    cont, shift, theta = plan
    y = np.atleast_1d(np.asarray(y, dtype=float))
    s = y - shift
    value = np.zeros_like(y)
    err = np.zeros_like(y)
    if not cont:
        value[:] = shift > y
        return value, err
    tails = [_scaled_tail(model.marginals[j], w[j]) for j in cont]
    neg = s < 0
    value[neg] = 1.0
    zero = s == 0
    if np.any(zero):
        value[zero] = -np.expm1(sum(np.log1p(-np.minimum(f(np.array(0.0)), 1.0)) for f in tails))
    pos = s > 0
    if not np.any(pos):
        return value, err
    sp = s[pos]
    if len(cont) == 1:
        value[pos] = tails[0](sp)
    elif len(cont) == 2:
        value[pos], err[pos] = sum_tail(tails[0], tails[1], sp, n, theta)
    else:
        # inner pair tabulated once over the needed range, then one more convolution
        hi = float(sp.max())
        inner_fine = tabulate(lambda u: sum_tail_values(tails[1], tails[2], u, n // 4), hi * 1e-12, hi, 1536)
        inner_coarse = tabulate(lambda u: sum_tail_values(tails[1], tails[2], u, n // 8), hi * 1e-12, hi, 768)
        fine = sum_tail_values(tails[0], inner_fine, sp, n)
        coarse = sum_tail_values(tails[0], inner_coarse, sp, n // 2)
        value[pos], err[pos] = fine, np.abs(fine - coarse)
    return value, err


def _mc_tail(model, A, y, n=MC_FALLBACK_N, seed=0):
    rng = np.random.default_rng(seed)
    g = np.empty(n)
    chunk = 2**18
    for lo in range(0, n, chunk):
        m = min(chunk, n - lo)
        g[lo:lo + m] = rs.gauge(sample_claim_vector(model, rng, m), A)
    g.sort()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    p = (n - np.searchsorted(g, y, side="right")) / n
    return p, np.sqrt(p * (1 - p) / n)


def _scalar_or_array(y, a):
    return float(a[0]) if np.ndim(y) == 0 else a


def exact_entrance_prob(
    model: ClaimVectorModel, y, A: RareSet, *, n_grid: int = DEFAULT_POINTS, mc_n: int = MC_FALLBACK_N, seed: int = 0
) -> ProbValue:
    """``P(Z in yA)`` with a method tag and an error estimate.

    ``product`` is exact to rounding, ``convolution`` reports the difference
    between two grid resolutions and ``mc-fallback`` reports a standard error.
    """
    _check_dim(model, A)
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(~(ya > 0)):
        raise ModelError(f"level y must be > 0, got {y}")
    w = rs.axis_weights(A)
    if w is not None:
        v = _product_tail(model, w, ya)
        return ProbValue(_scalar_or_array(y, v), _scalar_or_array(y, np.zeros_like(v)), "product")
    w = rs.sum_weights(A)
    plan = None if w is None else _convolution_plan(model, w)
    if plan is not None:
        v, e = _sum_tail_direct(model, w, ya, plan, n_grid)
        return ProbValue(_scalar_or_array(y, v), _scalar_or_array(y, e), "convolution")
    v, e = _mc_tail(model, A, ya, mc_n, seed)
    return ProbValue(_scalar_or_array(y, v), _scalar_or_array(y, e), "mc-fallback")


class GaugeTail:
    """Fast evaluator of ``y -> P(Z in yA)`` for use inside quadrature.

    Product forms are evaluated directly.  Convolution forms are tabulated
    lazily on a log grid with ``64`` nodes per decade and interpolated
    monotonically in log-log space; ``rel_error`` bounds the grid error plus
    the interpolation error observed at interval midpoints.
    """

    def __init__(self, model: ClaimVectorModel, A: RareSet, per_decade: int = _TABLE_PER_DECADE):
        _check_dim(model, A)
        self.model, self.A = model, A
        self.per_decade = per_decade
        self.rel_error = 0.0
        self._lock = threading.Lock()
        w = rs.axis_weights(A)
        if w is not None:
            self.method, self._w = "product", w
            return
        w = rs.sum_weights(A)
        plan = None if w is None else _convolution_plan(model, w)
        if plan is not None:
            self.method, self._w, self._plan = "convolution", w, plan
        else:
            self.method = "mc-fallback"
            self._mc = np.sort(rs.gauge(sample_claim_vector(model, np.random.default_rng(0), MC_FALLBACK_N), A))
            self.rel_error = math.inf
        self._lo = self._hi = None
        self._table = None

    def _levels(self, i0, i1):
        return 10.0 ** (np.arange(i0, i1 + 1) / self.per_decade)

    def _compute(self, i0, i1):
        """Table values on nodes ``i0..i1``; updates the running error bound."""
        levels = self._levels(i0, i1)
        v, e = _sum_tail_direct(self.model, self._w, levels, self._plan)
        ok = v > 1e-280
        grid_err = np.max(e[ok] / v[ok], initial=0.0)
        mids = np.sqrt(levels[:-1:8] * levels[1::8])
        vm, _ = _sum_tail_direct(self.model, self._w, mids, self._plan)
        return v, grid_err, mids, vm

    def _ensure(self, y):
        pos = y[y > 0]
        if pos.size == 0:
            return
        i0 = int(math.floor(math.log10(pos.min()) * self.per_decade)) - 3
        i1 = int(math.ceil(math.log10(pos.max()) * self.per_decade)) + 3
        if self._lo is not None and i0 >= self._lo and i1 <= self._hi:
            return
        pieces = []
        if self._lo is None:
            lo, hi = i0, i1
            pieces.append(self._compute(lo, hi))
            vals = pieces[0][0]
        else:
            lo, hi = min(i0, self._lo), max(i1, self._hi)
            vals = self._vals
            if lo < self._lo:
                pieces.append(self._compute(lo, self._lo - 1))
                vals = np.concatenate([pieces[-1][0], vals])
            if hi > self._hi:
                pieces.append(self._compute(self._hi + 1, hi))
                vals = np.concatenate([vals, pieces[-1][0]])
        table = TabulatedTail(self._levels(lo, hi), vals)
        for _, grid_err, mids, vm in pieces:
            ok = vm > 1e-280
            interp_err = np.max(np.abs(table(mids[ok]) / vm[ok] - 1.0), initial=0.0)
            self.rel_error = max(self.rel_error, float(grid_err) + float(interp_err))
        self._lo, self._hi, self._vals, self._table = lo, hi, vals, table

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.method == "product":
            return _product_tail(self.model, self._w, y)
        if self.method == "mc-fallback":
            n = self._mc.size
            return (n - np.searchsorted(self._mc, y, side="right")) / n
        flat = np.atleast_1d(y).ravel()
        finite = np.isfinite(flat)
        with self._lock:
            self._ensure(flat[finite])
            table = self._table
        if finite.all():
            return table(y)
        out = np.zeros(flat.shape)
        out[finite] = table(flat[finite])
        return out.reshape(np.shape(y))


# ------------------------------------------------------- asymptotic tail forms


def marginal_sum_tail(model: ClaimVectorModel, y, A: RareSet):
    """Sum of the one-dimensional exceedance probabilities behind a single big jump."""
    _check_dim(model, A)
    y = np.asarray(y, dtype=float)
    if isinstance(A, rs.HalfSpaceSum):
        scale = [A.threshold / l if l > 0 else None for l in A.weights]
    elif isinstance(A, rs.ComponentExceed):
        scale = list(A.thresholds)
    else:
        raise UnsupportedError("marginal-sum tails are defined for half-space and component sets only")
    total = np.zeros(y.shape)
    for m, c in zip(model.marginals, scale):
        if c is not None:
            total = total + m.tail(y * c)
    return float(total) if total.ndim == 0 else total


def _common_pareto(model: ClaimVectorModel):
    paretos = [m for m in model.marginals if not _is_zero(m)]
    if not all(isinstance(m, ht.Pareto) for m in paretos):
        raise UnsupportedError("limit measures need Pareto marginals (zero components allowed)")
    alphas = {m.alpha for m in paretos}
    if len(alphas) != 1:
        raise UnsupportedError(f"limit measures need one common tail index, got {sorted(alphas)}")
    return paretos, alphas.pop()


def limit_measure(model: ClaimVectorModel, A: RareSet, reference: ht.Pareto | None = None) -> float:
    """``mu(A) = lim P(Z in yA) / Bbar(y)`` for asymptotically independent Pareto components.

    Independence and FGM both put no mass off the axes, so only the largest
    index-point coordinate per axis matters.
    """
    _check_dim(model, A)
    if not isinstance(model.dependence, (Independent, FGM)):
        raise UnsupportedError("limit measure needs independent or FGM dependence")
    paretos, alpha = _common_pareto(model)
    ref = reference if reference is not None else paretos[0]
    if not isinstance(ref, ht.Pareto) or ref.alpha != alpha:
        raise UnsupportedError("reference tail must be Pareto with the common tail index")
    top = A.index_points().max(axis=0)
    mu = 0.0
    for m, p in zip(model.marginals, top):
        if not _is_zero(m) and p > 0:
            mu += (m.scale * p / ref.scale) ** alpha
    if not mu > 0:
        raise ModelError("limit measure of the set vanishes")
    return mu


@dataclass(frozen=True)
class MRVSpec:
    """Regular-variation data of a claim law: index, reference tail, limit measures."""

    alpha: float
    reference_tail: ht.Distribution
    limit_measure_A: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        for A, v in self.limit_measure_A.items():
            if not 0 < v < math.inf:
                raise ModelError(f"limit measure of {A} must lie in (0, inf), got {v}")

    @classmethod
    def from_model(cls, model: ClaimVectorModel, sets) -> "MRVSpec":
        paretos, alpha = _common_pareto(model)
        ref = paretos[0]
        return cls(alpha, ref, {A: limit_measure(model, A, ref) for A in sets})

    def mu(self, A: RareSet) -> float:
        try:
            return self.limit_measure_A[A]
        except KeyError:
            raise ModelError(f"no limit measure registered for {A}") from None
