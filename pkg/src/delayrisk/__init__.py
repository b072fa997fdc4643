"""Entrance probabilities of discounted aggregate claims with delayed settlements.

The package covers rare sets in claim space, heavy-tailed marginal laws,
claim vectors with optional FGM dependence, a renewal simulation engine,
crude Monte Carlo, numerical asymptotic approximations, and numerical
probes of heavy-tail closure properties.
"""

from .asymptotics import (
    AsymptoticValue,
    approximate,
    entrance_time_bound,
    finite_horizon_equivalent,
    finite_horizon_negligible,
    infinite_horizon_equivalent,
    infinite_horizon_negligible,
    mrv_finite,
    mrv_infinite,
    truncation_horizon,
)
from .claim_models import (
    FGM,
    ClaimVectorModel,
    GaugeTail,
    Independent,
    MRVSpec,
    exact_entrance_prob,
    limit_measure,
    sample_claim_vector,
)
from .closure_lab import (
    ClosureReport,
    check_max_sum_equivalence,
    check_tail_additivity,
    convolution_tail,
    kesten_probe,
    product_convolution_check,
)
from .errors import ConfigError, DelayRiskError, DimensionMismatchError, ModelError, NumericalError, UnsupportedError
from .heavy_tails import (
    Deterministic,
    Erlang,
    Exponential,
    IndexReport,
    Lognormal,
    Pareto,
    Uniform,
    Weibull,
    estimate_karamata_lower,
    karamata_lower_analytic,
)
from .mc import (
    ComparisonRow,
    MCEstimate,
    UniformityProfile,
    entrance_times,
    estimate_entrance_prob,
    estimate_infinite_horizon,
    sample_entrance_time,
    uniformity_profile,
)
from .rare_sets import ComponentExceed, HalfSpaceSum, IndexSet, gauge, member
from .renewal import (
    FixedCount,
    GeometricCount,
    PoissonCount,
    RenewalSpec,
    Scenario,
    ZeroCount,
    renewal_function,
    simulate_arrivals,
    simulate_discounted_aggregate,
)
from .streams import CounterStream

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
