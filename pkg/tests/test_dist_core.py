import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nhfa.ars import ArsSampler, ArsTarget, ars_sample, diagnostics, sample_truncated_beta, slice_step
from nhfa.rng import RngStream
from nhfa.special import (DegenerateDistributionError, StirlingTable, harmonic_and_tail_sums, log_beta_draw,
                          log_rising_factorial, log_stirling1, sample_discrete_log, stirling_table,
                          table_count_log_pmf)


# --- RngStream ------------------------------------------------------------------

def test_stream_reproducible_bytes():
    a = RngStream(11, 2).uniform(size=50)
    b = RngStream(11, 2).uniform(size=50)
    assert a.tobytes() == b.tobytes()


def test_streams_with_different_ids_differ():
    a = RngStream(11, 0).uniform(size=20)
    b = RngStream(11, 1).uniform(size=20)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(RngStream(5, 0).normal(size=20000), RngStream(5, 1).normal(size=20000))[0, 1]) < 0.04


def test_gamma_is_shape_rate():
    x = RngStream(1).gamma(2.0, 3.0, size=100_000)
    se = math.sqrt(2.0) / 3.0 / math.sqrt(x.size)
    assert abs(x.mean() - 2.0 / 3.0) < 3 * se


def test_binomial_mean():
    x = RngStream(2).binomial(10, 0.5, size=100_000)
    assert abs(x.mean() - 5.0) < 3 * math.sqrt(2.5 / x.size)


def test_multinomial_conserves():
    rng = RngStream(3)
    for _ in range(20):
        p = rng.uniform(size=5)
        assert rng.multinomial(7, p / p.sum()).sum() == 7


@pytest.mark.parametrize("call", [
    lambda r: r.gamma(0.0, 1.0),
    lambda r: r.gamma(1.0, -1.0),
    lambda r: r.beta(0.0, 1.0),
    lambda r: r.binomial(3, 1.5),
    lambda r: r.poisson(-1.0),
    lambda r: r.multinomial(3, [0.5, 0.6]),
])
def test_invalid_parameters_raise(call):
    with pytest.raises(ValueError):
        call(RngStream(0))


def test_state_roundtrip():
    r = RngStream(9)
    r.uniform(size=3)
    s = r.get_state()
    a = r.uniform(size=4)
    r.set_state(s)
    assert np.array_equal(a, r.uniform(size=4))


# --- Stirling numbers -----------------------------------------------------------

@pytest.mark.parametrize("n,k,expect", [(0, 0, 0.0), (3, 2, math.log(3)), (4, 2, math.log(11)),
                                        (2, 0, -math.inf), (5, 5, 0.0), (5, 1, math.log(24))])
def test_log_stirling_values(n, k, expect):
    assert log_stirling1(n, k) == pytest.approx(expect, abs=1e-12)


def _cycle_counts(n):
    """Brute-force c(n, k) by counting permutations by number of cycles."""
    import itertools
    out = [0] * (n + 1)
    for perm in itertools.permutations(range(n)):
        seen, cycles = set(), 0
        for s in range(n):
            if s not in seen:
                cycles += 1
                while s not in seen:
                    seen.add(s)
                    s = perm[s]
        out[cycles] += 1
    return out


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_stirling_matches_permutation_enumeration(n):
    counts = _cycle_counts(n)
    for k in range(n + 1):
        want = math.log(counts[k]) if counts[k] else -math.inf
        assert log_stirling1(n, k) == pytest.approx(want, abs=1e-12)


def test_stirling_out_of_range():
    with pytest.raises(ValueError):
        log_stirling1(3, 4)
    with pytest.raises(ValueError):
        StirlingTable(5).log_c(6, 1)


def test_stirling_recurrence_whole_table():
    tab = StirlingTable(300)
    for n in range(1, 300):
        row, nxt = tab.row(n), tab.row(n + 1)
        for k in range(1, n + 1):
            want = np.logaddexp(math.log(n) + row[k], row[k - 1])
            assert abs(nxt[k] - want) <= 1e-10 * max(1.0, abs(want))


@given(n=st.integers(0, 20), x=st.sampled_from([1.0, 2.0, 0.5]))
def test_rising_factorial_identity(n, x):
    row = stirling_table(n).row(n)
    lhs = np.logaddexp.reduce(row + np.arange(n + 1) * math.log(x))
    assert lhs == pytest.approx(log_rising_factorial(x, n), rel=1e-8, abs=1e-12)


def test_table_grows_and_is_shared():
    t = stirling_table(500)
    assert t.max_n >= 500
    assert stirling_table(10) is stirling_table(20)
    with pytest.raises(ValueError):
        t.row(0)[0] = 1.0


def test_table_count_pmf_normalized_and_mean():
    lp = table_count_log_pmf(30, 2.0)
    p = np.exp(lp)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    # expected table count of a CRP is sum_i theta / (theta + i)
    assert np.dot(np.arange(31), p) == pytest.approx(sum(2.0 / (2.0 + i) for i in range(30)), rel=1e-10)


# --- discrete sampling ----------------------------------------------------------

def test_discrete_single_point():
    rng = RngStream(0)
    assert all(sample_discrete_log([0.0], rng) == 0 for _ in range(100))


def test_discrete_balanced():
    rng = RngStream(1)
    n = 100_000
    c = sum(sample_discrete_log([math.log(0.5), math.log(0.5)], rng) == 0 for _ in range(n))
    assert abs(c / n - 0.5) < 3 * math.sqrt(0.25 / n)


def test_discrete_dominated():
    rng = RngStream(2)
    n = 10_000
    assert sum(sample_discrete_log([-1000.0, 0.0], rng) for _ in range(n)) / n > 0.999


def test_discrete_all_neg_inf():
    with pytest.raises(DegenerateDistributionError):
        sample_discrete_log([-np.inf, -np.inf], RngStream(0))


@settings(max_examples=5, deadline=None)
@given(w=st.lists(st.floats(-5.0, 5.0), min_size=5, max_size=5), seed=st.integers(0, 2**31))
def test_discrete_frequencies_five_points(w, seed):
    rng = RngStream(seed)
    n = 100_000
    p = np.exp(np.array(w) - max(w))
    p /= p.sum()
    counts = np.bincount([sample_discrete_log(w, rng) for _ in range(n)], minlength=5)
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) <= 4 * se + 1e-12)


# --- harmonic / tail sums ---------------------------------------------------------

@pytest.mark.parametrize("u,b,expect", [(1, 0.3, (1.0, 0.3)), (3, 0.0, (11 / 6, 0.0)), (2, 0.5, (1.5, 0.625)),
                                        (0, 0.7, (0.0, 0.0))])
def test_harmonic_and_tail(u, b, expect):
    assert harmonic_and_tail_sums(u, b) == pytest.approx(expect, abs=1e-15)


# --- ARS ------------------------------------------------------------------------

def test_ars_exponential_mean():
    rng = RngStream(4)
    xs = ArsSampler(ArsTarget(lambda x: -x, lambda x: -1.0, 0.0, math.inf), [0.5, 2.0]).sample_many(rng, 10_000)
    assert abs(xs.mean() - 1.0) < 3 / math.sqrt(xs.size)


def test_ars_uniform_mean():
    rng = RngStream(5)
    xs = ArsSampler(ArsTarget(lambda x: 0.0, lambda x: 0.0, 0.0, 1.0), [0.3, 0.7]).sample_many(rng, 10_000)
    assert abs(xs.mean() - 0.5) < 3 * math.sqrt(1 / 12 / xs.size)


def test_ars_beta23_ks():
    rng = RngStream(6)
    t = ArsTarget(lambda x: math.log(x) + 2 * math.log1p(-x), lambda x: 1 / x - 2 / (1 - x), 0.0, 1.0)
    xs = np.array([ars_sample(t, [0.1, 0.5, 0.9], rng) for _ in range(2000)])
    assert stats.kstest(xs, stats.beta(2, 3).cdf).pvalue > 0.01


def test_ars_finite_difference_derivative():
    rng = RngStream(7)
    t = ArsTarget(lambda x: -0.5 * (x - 3.0) ** 2, None, 0.0, math.inf)
    xs = ArsSampler(t).sample_many(rng, 5000)
    assert abs(xs.mean() - 3.0) < 4 / math.sqrt(5000)


def test_ars_nonconcave_falls_back_to_slice():
    rng = RngStream(8)
    # bimodal mixture: not log-concave
    t = ArsTarget(lambda x: np.logaddexp(-50 * (x - 0.2) ** 2, -50 * (x - 0.8) ** 2), None, 0.0, 1.0)
    before = diagnostics["ars_fallback"]
    s = ArsSampler(t, [0.1, 0.2, 0.5, 0.8, 0.9])
    x = s.sample(rng, x_current=0.5)
    assert 0.0 < x < 1.0
    assert s.fallbacks == 1 and diagnostics["ars_fallback"] == before + 1


def test_slice_step_stays_in_support():
    rng = RngStream(9)
    x = 0.5
    for _ in range(1000):
        x = slice_step(lambda v: 2 * math.log(v) + math.log1p(-v), x, 0.2, 0.7, rng)
        assert 0.2 <= x <= 0.7


def test_truncated_beta_ks():
    rng = RngStream(10)
    xs = np.array([sample_truncated_beta(3.0, 2.0, 0.2, 0.7, rng) for _ in range(5000)])
    d = stats.beta(3, 2)
    lo, hi = d.cdf(0.2), d.cdf(0.7)
    assert stats.kstest(xs, lambda v: (d.cdf(v) - lo) / (hi - lo)).pvalue > 0.01


def test_truncated_beta_zero_shape_uses_log_scale():
    rng = RngStream(11)
    # beta(0, 3) on [0.01, 0.5]: density ~ x^-1 (1-x)^2
    xs = np.array([sample_truncated_beta(0.0, 3.0, 0.01, 0.5, rng) for _ in range(4000)])
    grid = np.linspace(0.01, 0.5, 20001)
    dens = (1 - grid) ** 2 / grid
    cdf = np.concatenate([[0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
    cdf /= cdf[-1]
    assert stats.kstest(xs, lambda v: np.interp(v, grid, cdf)).pvalue > 0.01


def test_truncated_beta_bad_interval():
    with pytest.raises(ValueError):
        sample_truncated_beta(1.0, 1.0, 0.5, 0.5, RngStream(0))


def test_log_beta_draw_matches_beta():
    rng = RngStream(12)
    lw = log_beta_draw(2.0, 3.0, rng, size=20_000)
    assert stats.ks_2samp(np.exp(lw), RngStream(13).beta(2.0, 3.0, size=20_000)).pvalue > 0.01


def test_log_beta_draw_tiny_shape_is_finite():
    lw = log_beta_draw(1e-4, 50.0, RngStream(14), size=1000)
    assert np.all(np.isfinite(lw)) and np.all(lw < 0)
