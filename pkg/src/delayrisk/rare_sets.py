"""Rare sets described by a finite index set and their gauge functional.

Every set handled here is of the form ``{z : max_{p in I} p.z > 1}`` for a
finite index set ``I`` of nonnegative, nonzero vectors.  The gauge of a claim
vector is then ``max_{p in I} p.z`` and ``z`` lies in ``x*A`` exactly when the
gauge exceeds ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionMismatchError, ModelError

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class HalfSpaceSum:
    """``{y : sum_j l_j y_j > c}`` with nonnegative weights summing to one."""

    weights: tuple[float, ...]
    threshold: float

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "threshold", float(self.threshold))
        if not w:
            raise ModelError("HalfSpaceSum needs at least one weight")
        if any(v < 0 or not np.isfinite(v) for v in w):
            raise ModelError(f"HalfSpaceSum weights must be finite and >= 0, got {w}")
        if abs(sum(w) - 1.0) > _SUM_TOL:
            raise ModelError(f"HalfSpaceSum weights must sum to 1, got sum {sum(w)!r}")
        if not (self.threshold > 0 and np.isfinite(self.threshold)):
            raise ModelError(f"HalfSpaceSum threshold must be > 0, got {self.threshold}")

    @property
    def dim(self) -> int:
        return len(self.weights)

    def index_points(self) -> np.ndarray:
        return np.asarray([self.weights], dtype=float) / self.threshold

    def scaled(self, k: float) -> "HalfSpaceSum":
        return HalfSpaceSum(self.weights, self.threshold * k)


@dataclass(frozen=True)
class ComponentExceed:
    """``{y : y_j > c_j for some j}``."""

    thresholds: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "thresholds", c)
        if not c:
            raise ModelError("ComponentExceed needs at least one threshold")
        if any(not (v > 0 and np.isfinite(v)) for v in c):
            raise ModelError(f"ComponentExceed thresholds must be > 0, got {c}")

    @property
    def dim(self) -> int:
        return len(self.thresholds)

    def index_points(self) -> np.ndarray:
        # scaled basis vectors e_j / c_j reproduce the max form exactly
        return np.diag(1.0 / np.asarray(self.thresholds))

    def scaled(self, k: float) -> "ComponentExceed":
        return ComponentExceed(tuple(c * k for c in self.thresholds))


@dataclass(frozen=True)
class IndexSet:
    """Set given directly by its finite index set of nonnegative vectors."""

    points: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ModelError("IndexSet needs at least one point")
        d = len(pts[0])
        if d == 0 or any(len(p) != d for p in pts):
            raise ModelError("IndexSet points must share one positive dimension")
        for p in pts:
            if any(v < 0 or not np.isfinite(v) for v in p):
                raise ModelError(f"IndexSet point {p} has a negative or non-finite entry")
            if not any(v > 0 for v in p):
                raise ModelError(f"IndexSet point {p} has no positive coordinate")

    @property
    def dim(self) -> int:
        return len(self.points[0])

    def index_points(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def scaled(self, k: float) -> "IndexSet":
        return IndexSet(tuple(tuple(v / k for v in p) for p in self.points))


RareSet = Union[HalfSpaceSum, ComponentExceed, IndexSet]


def gauge(z, A: RareSet) -> np.ndarray | float:
    """Gauge ``sup{u : z in u*A}`` of one vector or a stack of vectors (last axis = d)."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1] if z.ndim else 1
    if d != A.dim:
        raise DimensionMismatchError(A.dim, d, "claim vector")
    if isinstance(A, HalfSpaceSum):
        g = z @ np.asarray(A.weights) / A.threshold
    elif isinstance(A, ComponentExceed):
        g = np.max(z / np.asarray(A.thresholds), axis=-1)
    else:
        g = np.max(z @ A.index_points().T, axis=-1)
    return float(g) if np.ndim(g) == 0 else g


def member(z, x: float, A: RareSet):
    """Whether ``z`` lies in the open set ``x*A`` (boundary excluded)."""
    if not x > 0:
        raise ModelError(f"scale x must be > 0, got {x}")
    # test the defining inequalities directly so boundary points do not depend on gauge rounding
    z = np.asarray(z, dtype=float)
    if isinstance(A, HalfSpaceSum):
        if (z.shape[-1] if z.ndim else 1) != A.dim:
            raise DimensionMismatchError(A.dim, z.shape[-1] if z.ndim else 1, "claim vector")
        out = np.sum(z * np.asarray(A.weights), axis=-1) > x * A.threshold
    elif isinstance(A, ComponentExceed):
        if (z.shape[-1] if z.ndim else 1) != A.dim:
            raise DimensionMismatchError(A.dim, z.shape[-1] if z.ndim else 1, "claim vector")
        out = np.any(z > x * np.asarray(A.thresholds), axis=-1)
    else:
        out = gauge(z, A) > x
    return bool(out) if np.ndim(out) == 0 else out


def axis_weights(A: RareSet) -> np.ndarray | None:
    """Weights ``w`` with ``gauge(z) = max_j w_j z_j`` when such a form exists."""
    P = A.index_points()
    if np.all(np.count_nonzero(P, axis=1) == 1):
        return P.max(axis=0)
    return None


def sum_weights(A: RareSet) -> np.ndarray | None:
    """Weights ``w`` with ``gauge(z) = sum_j w_j z_j`` when such a form exists."""
    P = A.index_points()
    if P.shape[0] == 1:
        return P[0].copy()
    return None


def to_dict(A: RareSet) -> dict:
    if isinstance(A, HalfSpaceSum):
        return {"type": "half_space_sum", "weights": list(A.weights), "threshold": A.threshold}
    if isinstance(A, ComponentExceed):
        return {"type": "component_exceed", "thresholds": list(A.thresholds)}
    return {"type": "index_set", "points": [list(p) for p in A.points]}


def from_dict(spec: dict) -> RareSet:
    kind = spec.get("type")
    if kind == "half_space_sum":
        return HalfSpaceSum(tuple(spec["weights"]), spec["threshold"])
    if kind == "component_exceed":
        return ComponentExceed(tuple(spec["thresholds"]))
    if kind == "index_set":
        return IndexSet(tuple(tuple(p) for p in spec["points"]))
    raise ModelError(f"unknown rare set type {kind!r}")
