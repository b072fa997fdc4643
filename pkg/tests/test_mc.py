import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from delayrisk import heavy_tails as ht
from delayrisk import mc
from delayrisk import rare_sets as rs
from delayrisk.claim_models import ClaimVectorModel
from delayrisk.errors import ModelError
from delayrisk.renewal import RenewalSpec, ZeroCount, simulate_arrivals
from delayrisk.streams import CLAIM_X, CounterStream

from conftest import P2, make_scenario


def panjer_compound_poisson_tail(lam, tail, x, h):
    """``P(S > x)`` for compound Poisson with severity tail ``tail`` on a lattice of step ``h``.

    Severities are rounded up and down to the lattice; the two results bracket
    the true value and their mean is returned with half their spread.
    """
    k = int(round(x / h))
    grid = np.arange(k + 1) * h
    out = []
    for shift in (0.0, 1.0):
        # rounding up puts mass tail(j-1) - tail(j) at j; rounding down at j-1
        cdf_pts = 1.0 - tail(grid + shift * h)
        f = np.diff(np.r_[0.0, cdf_pts])
        fs = np.zeros(k + 1)
        fs[0] = math.exp(-lam * (1.0 - f[0]))
        j = np.arange(1, k + 1)
        for n in range(1, k + 1):
            fs[n] = lam / n * np.dot(j[:n] * f[1 : n + 1], fs[n - 1 :: -1][:n])
        out.append(1.0 - fs.sum())
    return 0.5 * (out[0] + out[1]), 0.5 * abs(out[0] - out[1])


def test_compound_poisson_oracle(scenario_plain):
    scn = make_scenario(F=ClaimVectorModel((P2,)), count=ZeroCount(), A=rs.ComponentExceed((1.0,)), r=0.0)
    est = mc.estimate_entrance_prob(scn, 10.0, 1.0, 10**6, seed=1)
    oracle, spread = panjer_compound_poisson_tail(1.0, P2.tail, 10.0, 0.005)
    assert spread < est.std_err
    assert abs(est.p_hat - oracle) <= 4 * est.std_err + spread


def test_zero_hits_convention(scenario_ii):
    est = mc.estimate_entrance_prob(scenario_ii, 1e12, 1.0, 2000, seed=0)
    assert est.hits == 0 and est.p_hat == 0.0
    assert est.ci95 == (0.0, pytest.approx(3.689 / 2000))


def test_bit_identical_reruns(scenario_ii):
    a = mc.estimate_entrance_prob(scenario_ii, 20.0, 5.0, 5000, seed=3)
    b = mc.estimate_entrance_prob(scenario_ii, 20.0, 5.0, 5000, seed=3)
    assert a == b


def test_thread_count_irrelevant(scenario_ii):
    a = mc.hit_counts(scenario_ii, [10.0, 30.0], [2.0, 8.0], 40000, seed=5, threads=1)
    b = mc.hit_counts(scenario_ii, [10.0, 30.0], [2.0, 8.0], 40000, seed=5, threads=4)
    np.testing.assert_array_equal(a, b)


def test_pathwise_monotonicity(scenario_ii):
    h = mc.hit_counts(scenario_ii, [5.0, 10.0, 20.0, 40.0], [1.0, 3.0, 6.0, 10.0], 20000, seed=2)
    assert np.all(np.diff(h, axis=1) >= 0)  # t
    assert np.all(np.diff(h, axis=0) <= 0)  # x


def test_input_validation(scenario_ii):
    with pytest.raises(ModelError):
        mc.estimate_entrance_prob(scenario_ii, 10.0, 1.0, 999, seed=0)
    with pytest.raises(ModelError):
        mc.estimate_entrance_prob(scenario_ii, -1.0, 1.0, 1000, seed=0)
    late = make_scenario(renewal=RenewalSpec(ht.Uniform(1.0, 2.0)))
    with pytest.raises(ModelError):
        mc.estimate_entrance_prob(late, 10.0, 0.5, 1000, seed=0)
    with pytest.raises(ModelError):
        mc.estimate_infinite_horizon(make_scenario(r=0.0), 10.0, 1000, seed=0)


def test_estimate_invariants(scenario_ii):
    e = mc.estimate_entrance_prob(scenario_ii, 15.0, 4.0, 3000, seed=9)
    assert 0 <= e.p_hat <= 1
    assert e.std_err == pytest.approx(math.sqrt(e.p_hat * (1 - e.p_hat) / e.n))
    assert e.ci95 == (pytest.approx(e.p_hat - 1.96 * e.std_err), pytest.approx(e.p_hat + 1.96 * e.std_err))


def test_infinite_horizon_self_consistency(scenario_i):
    e = mc.estimate_infinite_horizon(scenario_i, 200.0, 20000, seed=4)
    assert e.delta <= 4 * e.std_err
    finite = mc.estimate_entrance_prob(scenario_i, 200.0, 10.0, 20000, seed=4)
    assert e.hits >= finite.hits


def test_no_delay_matches_reference():
    scn = make_scenario(F=ClaimVectorModel((P2, ht.Lognormal(0, 1))), count=ZeroCount(), r=0.1)
    other = make_scenario(F=scn.F, G=ClaimVectorModel((ht.Exponential(3.0),) * 2), count=ZeroCount(),
                          delay=ht.Uniform(0, 1), r=0.1)
    x, t, n, seed = 8.0, 6.0, 3000, 13
    a = mc.estimate_entrance_prob(scn, x, t, n, seed)
    b = mc.estimate_entrance_prob(other, x, t, n, seed)
    assert a == b
    # plain reference: arrivals, then claims drawn at index (arrival, component)
    stream = CounterStream(seed)
    hits = 0
    for p in range(n):
        tau = simulate_arrivals(scn.renewal, t, stream, p)
        keys = stream.path_keys(CLAIM_X, np.array([p]))
        total = np.zeros(2)
        for i, ti in enumerate(tau):
            q = CounterStream.uniforms(np.repeat(keys, 2), np.array([2 * i, 2 * i + 1], dtype=np.uint64))
            total += scn.F.from_uniforms(q[None, :])[0] * math.exp(-0.1 * ti)
        hits += rs.gauge(total, scn.rare_set) > x
    assert hits == a.hits


def test_entrance_time_near_zero_level():
    scn = make_scenario(renewal=RenewalSpec(ht.Erlang(2, 2.0)), r=0.5)
    x = 1e-6 * 2.0
    times, T = mc.entrance_times(scn, x, 10**5, seed=7, t_star=20.0)
    ks = stats.kstest(times, lambda s: ht.Erlang(2, 2.0).cdf(s)).statistic
    assert ks < 0.01


def test_sample_entrance_time_matches_batch(scenario_ii):
    times, T = mc.entrance_times(scenario_ii, 5.0, 1000, seed=2, t_star=30.0)
    s = CounterStream(2)
    for p in (0, 17, 999):
        one = mc.sample_entrance_time(scenario_ii, 5.0, s, p, t_star=30.0)
        assert (one is None and math.isinf(times[p])) or one == times[p]


def test_uniformity_profile_degenerate(scenario_ii):
    prof = mc.uniformity_profile(scenario_ii, [30.0], [5.0], 2000, seed=1)
    assert len(prof.rows) == 1
    row = prof.rows[0]
    assert row.ratio == row.mc.p_hat / row.asym.value
    assert prof.sup_dev[30.0] == abs(row.ratio - 1)


def test_uniformity_profile_excludes_empty_horizons(caplog):
    scn = make_scenario(renewal=RenewalSpec(ht.Uniform(1.0, 2.0)))
    with caplog.at_level(logging.WARNING):
        prof = mc.uniformity_profile(scn, [30.0, 60.0], [0.5, 3.0, 6.0], 2000, seed=1)
    assert prof.excluded_t == [0.5] and len(prof.rows) == 4
    assert "excluded" in caplog.text


def test_comparison_row_ci_propagates_mc_only(scenario_ii):
    prof = mc.uniformity_profile(scenario_ii, [20.0], [4.0], 2000, seed=6)
    r = prof.rows[0]
    assert r.ratio_ci == (pytest.approx(r.mc.ci95[0] / r.asym.value), pytest.approx(r.mc.ci95[1] / r.asym.value))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_block_layout_irrelevant(seed, threads):
    scn = make_scenario()
    a = mc.hit_counts(scn, [10.0], [3.0], 1500, seed, threads=threads)
    b = mc.hit_counts(scn, [10.0], [3.0], 1500, seed, threads=1)
    np.testing.assert_array_equal(a, b)
