import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from cbranch import rngkit
from cbranch.errors import DomainError
from cbranch.rngkit import make_stream, split

from conftest import assert_within


def draws(s, n=8):
    return [s.uniform() for _ in range(n)]


def test_same_seed_same_sequence():
    assert draws(make_stream(42)) == draws(make_stream(42))


def test_distinct_seeds_differ():
    assert make_stream(42).uniform() != make_stream(43).uniform()


def test_split_independent_of_call_order():
    a = make_stream(1)
    first = draws(split(a, 7))
    a.uniform()
    split(a, 3).uniform()
    assert draws(split(a, 7)) == first
    assert draws(split(make_stream(1), 7)) == first


def test_consecutive_uniforms_differ():
    # regression: the scalar stream once replayed its previous draw
    u = draws(make_stream(5), 50)
    assert len(set(u)) == 50


def test_batch_matches_scalar_streams():
    root = make_stream(9)
    batch = root.spawn(5)
    rows = np.stack([batch.uniform() for _ in range(3)], axis=1)
    for i in range(5):
        s = split(root, i)
        assert rows[i].tolist() == draws(s, 3)


def test_take_keeps_stream_positions():
    batch = make_stream(3).spawn(4)
    sub = batch.take([1, 3])
    assert sub.uniform().tolist() == batch.uniform()[[1, 3]].tolist()


@given(st.integers(0, 2**40), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_uniform_in_open_unit_interval(seed, i):
    u = draws(split(make_stream(seed), i), 4)
    assert all(0.0 < x < 1.0 for x in u)


def test_uniforms_are_uniform():
    u = rngkit.sample_uniform(make_stream(0).spawn(100_000))
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_normal_moments():
    z = rngkit.sample_normal(make_stream(1).spawn(200_000))
    assert_within(z, 0.0)
    assert_within(z**2, 1.0)


def test_poisson_zero_mean():
    assert rngkit.sample_poisson(make_stream(2), 0.0) == 0


def test_poisson_mean_and_zero_mass():
    x = rngkit.sample_poisson(make_stream(2).spawn(1_000_000), 4.0)
    assert abs(x.mean() - 4.0) < 3 * 2 / 1000
    assert_within(x == 0, math.exp(-4.0))


def test_poisson_large_mean():
    x = rngkit.sample_poisson(make_stream(3).spawn(200_000), 250.0)
    assert_within(x, 250.0)
    assert_within((x - 250.0) ** 2, 250.0)


def test_gamma_exponential_case():
    x = rngkit.sample_gamma(make_stream(4).spawn(200_000), 1.0, 1.0)
    assert_within(np.exp(-x), 0.5)


def test_gamma_mean_and_laplace():
    x = rngkit.sample_gamma(make_stream(5).spawn(1_000_000), 2.0, 3.0)
    assert_within(x, 2.0 / 3.0, k=3)
    assert_within(np.exp(-x), 0.5625)


def test_gamma_small_shape():
    x = rngkit.sample_gamma(make_stream(6).spawn(200_000), 0.3, 1.0)
    assert_within(np.exp(-x), 2.0**-0.3)


def test_binomial_moments():
    x = rngkit.sample_binomial(make_stream(7).spawn(200_000), 20, 0.3)
    assert_within(x, 6.0)
    assert np.all((x >= 0) & (x <= 20))


def test_half_stable_cdf():
    x = rngkit.sample_one_sided_stable(make_stream(8).spawn(100_000), 0.5, 1.0)
    # density (1/(2 sqrt(pi))) x^{-3/2} exp(-1/(4x)) has cdf erfc(1/(2 sqrt x))
    cdf = lambda v: special.erfc(0.5 / np.sqrt(v))
    assert stats.kstest(x, cdf).pvalue > 1e-3
    assert_within(np.exp(-x), math.exp(-1.0))


def test_one_sided_stable_laplace():
    x = rngkit.sample_one_sided_stable(make_stream(9).spawn(200_000), 0.9, 2.0)
    assert_within(np.exp(-x), math.exp(-2.0))


def test_one_sided_stable_rejects_alpha():
    with pytest.raises(DomainError):
        rngkit.sample_one_sided_stable(make_stream(0), 1.5, 1.0)


def test_spectrally_positive_increment_laplace():
    x = rngkit.sample_spectrally_positive_stable_increment(make_stream(10).spawn(200_000), 1.5, 1.0)
    assert_within(np.exp(-x), math.exp(special.gamma(-1.5)))
    assert_within(x, 0.0)


def test_spectrally_positive_increment_self_similar():
    a = rngkit.sample_spectrally_positive_stable_increment(make_stream(11).spawn(20_000), 1.5, 0.01)
    b = rngkit.sample_spectrally_positive_stable_increment(make_stream(12).spawn(20_000), 1.5, 1.0)
    assert stats.ks_2samp(a, b * 0.01 ** (1 / 1.5)).pvalue > 0.05
