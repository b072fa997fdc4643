import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayrisk import heavy_tails as ht
from delayrisk import rare_sets as rs
from delayrisk.claim_models import (
    FGM,
    ClaimVectorModel,
    GaugeTail,
    Independent,
    MRVSpec,
    exact_entrance_prob,
    limit_measure,
    marginal_sum_tail,
    model_from_dict,
    sample_claim_vector,
)
from delayrisk.errors import DimensionMismatchError, ModelError, UnsupportedError

P2 = ht.Pareto(2.0, 1.0)
PP = ClaimVectorModel((P2, P2))
A1 = rs.HalfSpaceSum((0.5, 0.5), 1.0)
A2 = rs.ComponentExceed((1.0, 1.0))
A2b = rs.ComponentExceed((1.0, 2.0))


def test_joint_exceedance_independent():
    z = sample_claim_vector(PP, np.random.default_rng(11), 10**7)
    p = np.mean((z[:, 0] > 10) & (z[:, 1] > 10))
    assert abs(p - 1e-4) <= 4 * math.sqrt(1e-4 / 1e7)


def test_fgm_copula_value():
    model = ClaimVectorModel((ht.Uniform(0, 1), ht.Uniform(0, 1)), FGM(1.0))
    n = 10**6
    z = sample_claim_vector(model, np.random.default_rng(5), n)
    c = np.mean((z[:, 0] <= 0.5) & (z[:, 1] <= 0.5))
    assert abs(c - 0.3125) <= 4 * math.sqrt(0.3125 * 0.6875 / n)


@pytest.mark.parametrize("theta", [-1.0, 0.5, 1.0])
def test_fgm_marginals_preserved(theta):
    from scipy import stats

    model = ClaimVectorModel((ht.Exponential(1), ht.Pareto(2)), FGM(theta))
    z = sample_claim_vector(model, np.random.default_rng(8), 20000)
    assert stats.kstest(z[:, 0], lambda x: ht.Exponential(1).cdf(x)).pvalue > 1e-3
    assert stats.kstest(z[:, 1], lambda x: P2.cdf(x)).pvalue > 1e-3


def test_fgm_three_dimensional_validity():
    FGM((0.3, 0.3, 0.3))
    with pytest.raises(ModelError):
        FGM((1.0, 1.0, -1.0))
    with pytest.raises(ModelError):
        FGM(1.5)
    with pytest.raises(DimensionMismatchError):
        ClaimVectorModel((P2, P2, P2), FGM(0.5))


def test_d1_sampler_matches_marginal_stream():
    a = sample_claim_vector(ClaimVectorModel((ht.Lognormal(0, 1),)), np.random.default_rng(4), 50)[:, 0]
    b = ht.Lognormal(0, 1).sample(np.random.default_rng(4), 50)
    np.testing.assert_array_equal(a, b)


def test_zero_vector_rejected():
    with pytest.raises(ModelError):
        ClaimVectorModel((ht.Deterministic(0.0), ht.Deterministic(0.0)))
    ClaimVectorModel((ht.Deterministic(0.0), P2))


def test_samples_nonnegative():
    z = sample_claim_vector(ClaimVectorModel((ht.Weibull(0.5), ht.Exponential(3)), FGM(-0.7)), np.random.default_rng(0), 1000)
    assert np.all(z >= 0)


def test_product_example():
    pv = exact_entrance_prob(PP, 10.0, A2)
    assert pv.method == "product"
    assert pv.value == pytest.approx(1 - 0.99**2, rel=1e-14)


def test_convolution_against_mc():
    pv = exact_entrance_prob(PP, 50.0, A1)
    assert pv.method == "convolution"
    n = 10**7
    z = sample_claim_vector(PP, np.random.default_rng(21), n)
    p = np.mean(z.sum(axis=1) > 100.0)
    assert abs(p - pv.value) <= 4 * math.sqrt(p * (1 - p) / n)
    assert pv.error < 1e-3 * pv.value


def test_one_dimensional_reduction():
    m = ClaimVectorModel((P2,))
    for y in (2.0, 10.0, 1e3):
        assert exact_entrance_prob(m, y, rs.ComponentExceed((1.0,))).value == P2.tail(y)


def test_exponential_sum_closed_form():
    m = ClaimVectorModel((ht.Exponential(1), ht.Exponential(1)))
    pv = exact_entrance_prob(m, 2.5, A1)  # P(Z1 + Z2 > 5)
    assert abs(pv.value - 6 * math.exp(-5)) < 1e-6


def test_fgm_sum_falls_back_for_three_components():
    m = ClaimVectorModel((P2, P2, P2), FGM((0.2, 0.2, 0.2)))
    pv = exact_entrance_prob(m, 10.0, rs.HalfSpaceSum((1 / 3, 1 / 3, 1 / 3), 1.0), mc_n=10**5)
    assert pv.method == "mc-fallback" and pv.error > 0


def test_fgm_product_form_against_mc():
    m = ClaimVectorModel((P2, P2), FGM(0.8))
    pv = exact_entrance_prob(m, 5.0, A2)
    n = 10**6
    z = sample_claim_vector(m, np.random.default_rng(3), n)
    p = np.mean(z.max(axis=1) > 5.0)
    assert abs(p - pv.value) <= 4 * math.sqrt(p * (1 - p) / n)


def test_level_must_be_positive():
    with pytest.raises(ModelError):
        exact_entrance_prob(PP, 0.0, A2)


def test_marginal_sum_examples():
    assert marginal_sum_tail(PP, 100.0, A1) == pytest.approx(5e-5, rel=1e-14)
    assert marginal_sum_tail(PP, 100.0, A2b) == pytest.approx(1.25e-4, rel=1e-14)
    with pytest.raises(UnsupportedError):
        marginal_sum_tail(PP, 100.0, rs.IndexSet(((1.0, 0.0),)))


def test_zero_weight_contributes_nothing():
    A = rs.HalfSpaceSum((1.0, 0.0), 1.0)
    assert marginal_sum_tail(PP, 10.0, A) == P2.tail(10.0)


@pytest.mark.parametrize("dep", [Independent(), FGM(0.5)], ids=["independent", "fgm"])
@pytest.mark.parametrize("A", [A1, A2b], ids=["A1", "A2"])
def test_single_big_jump(dep, A):
    m = ClaimVectorModel((P2, P2), dep)
    y = np.array([1e2, 1e3, 1e4])
    pv = exact_entrance_prob(m, y, A)
    ratio = pv.value / marginal_sum_tail(m, y, A)
    dev = np.abs(ratio - 1)
    slack = pv.error / pv.value + 1e-12
    assert np.all(np.diff(dev) <= slack[1:])
    assert dev[-1] < 2e-3


def test_limit_measure_examples():
    assert limit_measure(PP, A2b) == pytest.approx(1.25)
    assert limit_measure(PP, A1) == pytest.approx(0.5)
    y = 1e4
    assert y**2 * exact_entrance_prob(PP, y, A2b).value == pytest.approx(1.25, rel=1e-4)
    assert y**2 * exact_entrance_prob(PP, y, A1).value == pytest.approx(0.5, rel=1e-3)


@pytest.mark.parametrize("k", [0.5, 2.0, 10.0])
def test_limit_measure_homogeneity(k):
    for A in (A1, A2b):
        assert limit_measure(PP, A.scaled(k)) == pytest.approx(k**-2 * limit_measure(PP, A), rel=1e-12)


def test_limit_measure_requires_common_pareto():
    with pytest.raises(UnsupportedError):
        limit_measure(ClaimVectorModel((P2, ht.Pareto(3.0))), A2)
    with pytest.raises(UnsupportedError):
        limit_measure(ClaimVectorModel((P2, ht.Lognormal())), A2)


def test_mrv_spec():
    spec = MRVSpec.from_model(PP, [A1, A2b])
    assert spec.alpha == 2 and spec.mu(A2b) == pytest.approx(1.25)
    with pytest.raises(ModelError):
        spec.mu(rs.ComponentExceed((3.0, 3.0)))
    with pytest.raises(ModelError):
        MRVSpec(2.0, P2, {A1: 0.0})


def test_gauge_tail_table_matches_direct():
    gt = GaugeTail(PP, A1, per_decade=64)
    y = np.array([3.3, 47.0, 512.0])
    direct = exact_entrance_prob(PP, y, A1).value
    np.testing.assert_allclose(gt(y), direct, rtol=1e-5)
    assert gt(np.inf) == 0.0


def test_model_dict_round_trip():
    m = ClaimVectorModel((P2, ht.Weibull(0.4, 2.0)), FGM(-0.3))
    assert model_from_dict(m.to_dict()) == m
    with pytest.raises(ModelError):
        model_from_dict({"marginals": [P2.to_dict()], "dependence": {"type": "gumbel"}})


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 1e5), st.floats(0.1, 10), st.floats(0.1, 10))
def test_product_formula_identity(y, c1, c2):
    m = ClaimVectorModel((P2, ht.Lognormal(0.5, 1.2)))
    A = rs.ComponentExceed((c1, c2))
    want = 1 - (1 - P2.tail(y * c1)) * (1 - ht.Lognormal(0.5, 1.2).tail(y * c2))
    assert exact_entrance_prob(m, y, A).value == pytest.approx(want, rel=1e-15, abs=4e-16)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 1e3))
def test_convolution_symmetric_in_components(y):
    a = exact_entrance_prob(ClaimVectorModel((P2, ht.Exponential(1))), y, A1)
    b = exact_entrance_prob(ClaimVectorModel((ht.Exponential(1), P2)), y, A1)
    assert abs(a.value - b.value) <= 2 * (a.error + b.error) + 1e-12 * a.value
