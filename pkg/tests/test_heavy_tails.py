import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayrisk import heavy_tails as ht
from delayrisk.errors import ModelError, NumericalError

CONTINUOUS = [
    ht.Pareto(2.0, 1.0),
    ht.Pareto(0.8, 3.0),
    ht.Lognormal(0.0, 1.0),
    ht.Lognormal(1.0, 0.5),
    ht.Weibull(0.5, 1.0),
    ht.Exponential(2.0),
    ht.Erlang(2, 2.0),
    ht.Uniform(0.5, 1.5),
]


def test_tail_examples():
    assert ht.Pareto(2, 1).tail(10.0) == pytest.approx(0.01, rel=1e-15)
    assert ht.Lognormal(0, 1).tail(1.0) == pytest.approx(0.5, rel=1e-15)
    assert ht.Weibull(0.5, 1).tail(4.0) == pytest.approx(math.exp(-2), rel=1e-14)


def test_deterministic_sampling():
    rng = np.random.default_rng(1)
    assert np.all(ht.Deterministic(3.5).sample(rng, 10) == 3.5)


def test_pareto_sample_tail():
    rng = np.random.default_rng(2)
    z = ht.Pareto(2, 1).sample(rng, 10**6)
    p = np.mean(z > 10)
    assert abs(p - 0.01) <= 4 * math.sqrt(0.01 * 0.99 / 1e6)


def test_exponential_sample_mean():
    rng = np.random.default_rng(3)
    assert abs(ht.Exponential(1).sample(rng, 10**6).mean() - 1.0) <= 0.004


def test_same_seed_same_draws():
    a = ht.Lognormal(0, 1).sample(np.random.default_rng(9), 5)
    b = ht.Lognormal(0, 1).sample(np.random.default_rng(9), 5)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("m", CONTINUOUS, ids=lambda m: m.kind)
def test_quantile_round_trip(m):
    lo, hi = (0.6, 1.4) if m.bounded else (1e-3, 1e3)
    x = np.geomspace(lo, hi, 100)
    t, c = m.tail(x), m.cdf(x)
    upper = (t > 1e-300) & (t <= 0.5)
    lower = (c > 1e-300) & (c < 0.5)
    # each direction is inverted where it is well conditioned
    np.testing.assert_allclose(m.isf(t[upper]), x[upper], rtol=1e-9)
    np.testing.assert_allclose(m.quantile(c[lower]), x[lower], rtol=1e-9)
    assert upper.sum() + lower.sum() >= 0.9 * np.sum((t > 1e-300) & (t < 1))


@pytest.mark.parametrize("m", CONTINUOUS, ids=lambda m: m.kind)
def test_tail_shape(m):
    x = np.linspace(0, 50, 501)
    t = m.tail(x)
    assert np.all(np.diff(t) <= 0)
    assert m.tail(0.0) == pytest.approx(1.0)
    assert m.tail(1e9) < 1e-6


@pytest.mark.parametrize("bad", [lambda: ht.Weibull(1.0, 1.0), lambda: ht.Pareto(0, 1), lambda: ht.Lognormal(0, -1),
                                 lambda: ht.Exponential(0), lambda: ht.Uniform(1, 1), lambda: ht.Deterministic(-1)])
def test_invalid_parameters(bad):
    with pytest.raises(ModelError):
        bad()


def test_dict_round_trip():
    for m in CONTINUOUS + [ht.Deterministic(2.0)]:
        assert ht.from_dict(m.to_dict()) == m


def test_analytic_indexes():
    assert ht.karamata_lower_analytic(ht.Pareto(2, 1)).karamata_lower == 2
    assert math.isinf(ht.karamata_lower_analytic(ht.Lognormal(0, 1)).karamata_lower)
    assert math.isinf(ht.karamata_lower_analytic(ht.Weibull(0.5, 1)).karamata_lower)
    with pytest.raises(ModelError):
        ht.karamata_lower_analytic(ht.Deterministic(1.0))


def test_index_report_ordering():
    with pytest.raises(ModelError):
        ht.IndexReport(3.0, 2.0, "analytic")


def test_limsup_ratio_pareto_exact():
    x = np.geomspace(10, 1e4, 64)
    assert ht.empirical_limsup_ratio(ht.Pareto(2, 1).tail, 1.5, x) == pytest.approx(1.5**-2, rel=1e-12)


def test_limsup_ratio_lognormal_decreases_with_grid():
    m = ht.Lognormal(0, 1)
    vals = [ht.empirical_limsup_ratio(m.tail, 1.1, np.geomspace(1, hi, 64)) for hi in (1e1, 1e2, 1e3)]
    assert vals[0] > vals[1] > vals[2]


def test_limsup_ratio_exponential_envelope():
    m = ht.Exponential(1)
    vals = []
    for hi in (100, 300, 700):
        x = np.linspace(10, hi, 64)
        vals.append(ht.empirical_limsup_ratio(m.tail, 1.01, x))
        assert vals[-1] == pytest.approx(math.exp(-0.01 * x[32]), rel=1e-9)
    assert vals[0] > vals[1] > vals[2]


def test_limsup_ratio_underflow_reports_usable_x():
    with pytest.raises(NumericalError) as info:
        ht.empirical_limsup_ratio(ht.Exponential(1).tail, 1.1, np.linspace(10, 2000, 64))
    assert info.value.info["largest_usable_x"] < 800


def test_limsup_ratio_rejects_bad_input():
    with pytest.raises(ModelError):
        ht.empirical_limsup_ratio(ht.Pareto(2).tail, 1.0, np.geomspace(1, 10, 64))
    with pytest.raises(ModelError):
        ht.empirical_limsup_ratio(ht.Pareto(2).tail, 1.1, np.geomspace(1, 10, 8))


V = np.array([1.02, 1.05, 1.1, 1.15, 1.2])


@pytest.mark.parametrize("alpha", [0.8, 2.0, 3.0])
def test_karamata_estimate_pareto(alpha):
    rep = ht.estimate_karamata_lower(ht.Pareto(alpha, 1).tail, V, np.geomspace(10, 1e4, 256))
    assert abs(rep.karamata_lower - alpha) <= 0.05
    assert not rep.consistent_with_infinity


def test_karamata_estimate_lognormal_flagged():
    rep = ht.estimate_karamata_lower(ht.Lognormal(0, 1).tail, V, np.geomspace(10, 1e6, 256))
    assert rep.karamata_lower >= 5 and rep.consistent_with_infinity


def test_karamata_estimate_degenerate_grid():
    with pytest.raises(ModelError):
        ht.estimate_karamata_lower(ht.Pareto(2).tail, [1.1, 1.1, 1.2, 1.05], np.geomspace(10, 1e4, 64))
    with pytest.raises(ModelError):
        ht.estimate_karamata_lower(ht.Pareto(2).tail, [1.1, 1.2, 1.3], np.geomspace(10, 1e4, 64))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.3, 5), st.floats(1.001, 3), st.floats(1, 1e3))
def test_pareto_limsup_is_power(alpha, v, lo):
    x = np.geomspace(lo, lo * 1e3, 40)
    assert ht.empirical_limsup_ratio(ht.Pareto(alpha, 1).tail, v, x) == pytest.approx(v**-alpha, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(CONTINUOUS), st.floats(1e-12, 1 - 1e-12))
def test_quantile_tail_consistency(m, p):
    x = m.quantile(p)
    assert m.cdf(x) == pytest.approx(p, rel=1e-8, abs=1e-12)
