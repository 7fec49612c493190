import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from cbranch.errors import DomainError
from cbranch.measures import (
    Atoms,
    ExponentialJump,
    InfDivPair,
    NullMeasure,
    StableBranching,
    StableImmigration,
    TAIL_KINDS,
    complete_monotone_check,
    empirical_laplace,
    inf_div_exponent,
    tail_integral,
)
from cbranch.rngkit import make_stream, sample_exponential


def half_stable():
    return StableImmigration(0.5 / special.gamma(0.5), 0.5)


def test_pure_drift_exponent():
    assert inf_div_exponent(InfDivPair(1.0, NullMeasure()), 3.0) == 3.0


@pytest.mark.parametrize("exact", [False, True])
def test_half_stable_exponent_is_sqrt(exact):
    val = inf_div_exponent(InfDivPair(0.0, half_stable()), 4.0, exact=exact)
    assert abs(val - 2.0) < 1e-8


def test_atom_exponent():
    val = inf_div_exponent(InfDivPair(0.0, Atoms(((1.0, 1.0),))), 1.0)
    assert abs(val - (1 - math.exp(-1))) < 1e-15


def test_exponent_rejects_negative_lambda():
    with pytest.raises(DomainError):
        inf_div_exponent(InfDivPair(1.0, NullMeasure()), -1.0)


def test_inf_div_pair_needs_finite_small_jumps():
    with pytest.raises(DomainError):
        InfDivPair(0.0, StableBranching(1.0, 1.5))
    with pytest.raises(DomainError):
        InfDivPair(-1.0, NullMeasure())


@pytest.mark.parametrize(
    "f, ok",
    [(lambda x: math.exp(-x), True), (lambda x: 1.0 / (1.0 + x), True), (lambda x: x, False)],
)
def test_complete_monotone(f, ok):
    passed, bad = complete_monotone_check(f, [0.0, 0.5, 1.0, 2.0], [0.1, 0.5, 1.0], 6)
    assert passed is ok
    if not ok:
        assert bad[2] == 1


@given(st.floats(0.05, 0.95), st.floats(0.1, 5.0))
@settings(max_examples=25, deadline=None)
def test_stable_laplace_is_completely_monotone(alpha, c):
    f = lambda lam: math.exp(-c * lam**alpha)
    assert complete_monotone_check(f, np.linspace(0, 3, 7), [0.25, 1.0], 5)[0]


@pytest.mark.parametrize("kind", TAIL_KINDS)
def test_null_tails_vanish(kind):
    assert tail_integral(NullMeasure(), kind) == 0.0


def test_stable_log_tail():
    assert abs(tail_integral(StableBranching(1.0, 1.5), "u_log_tail") - 4.0) < 1e-8


def test_atom_tail():
    assert tail_integral(Atoms(((2.0, 3.0),)), "one_wedge_u") == 3.0


def test_tail_divergence_reported_as_inf():
    assert tail_integral(StableBranching(1.0, 1.5), "one_wedge_u") == math.inf


def test_unknown_tail_kind():
    with pytest.raises(DomainError):
        tail_integral(NullMeasure(), "bogus")


@pytest.mark.parametrize(
    "mu",
    [StableBranching(0.7, 1.3), ExponentialJump(2.0, 1.5)],
)
@pytest.mark.parametrize("z", [0.01, 0.7, 5.0, 80.0])
def test_phi_kernel_matches_quadrature(mu, z):
    quad = mu.integrate(lambda u: math.expm1(-z * u) + z * u, breakpoints=(1.0 / z,))
    assert abs(mu.phi_kernel(z) - quad) <= 1e-8 * max(1.0, abs(quad))


@pytest.mark.parametrize("mu", [StableImmigration(1.0, 0.5), ExponentialJump(1.0, 2.0)])
def test_truncated_sampler_mean(mu):
    eps = 0.05
    u = np.random.default_rng(0).random(200_000)
    x = mu.sample_above(eps, u)
    assert np.all(x > eps)
    target = mu.moment_above(eps, 1) / mu.mass_above(eps)
    if isinstance(mu, StableImmigration):
        # mean of an alpha=0.5 tail is infinite; compare the exp(-x) mean instead
        num = mu.integrate(lambda v: math.exp(-v) if v > eps else 0.0, breakpoints=(eps,))
        target, x = num / mu.mass_above(eps), np.exp(-x)
    assert abs(x.mean() - target) < 4 * x.std() / math.sqrt(x.size)


def test_empirical_laplace_degenerate():
    est = empirical_laplace(np.zeros(10), 5.0)
    assert est.mean == 1.0 and est.stderr == 0.0
    assert empirical_laplace([1, 1, 1, 1], 0.0).mean == 1.0


def test_empirical_laplace_exponential():
    x = sample_exponential(make_stream(0).spawn(1_000_000))
    est = empirical_laplace(x, 1.0)
    assert abs(est.mean - 0.5) < 4 * est.stderr


def test_empirical_laplace_rejects_empty():
    with pytest.raises(DomainError):
        empirical_laplace([], 1.0)
