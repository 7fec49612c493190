import math

import numpy as np
import pytest
from scipy import special, stats

from cbranch.cumulant import q_b_alpha, transition_laplace, v_solve
from cbranch.errors import DomainError, NumericError
from cbranch.measures import Atoms, ExponentialJump
from cbranch.mechanism import BranchingMechanism, ImmigrationMechanism, stable_phi
from cbranch.paths import (
    PATH_HEADER,
    SamplePath,
    StateFn,
    TimeFn,
    excursion_reconstruct_feller,
    feller_entrance,
    immigration_reconstruct_feller,
    lamperti_forward,
    lamperti_forward_values,
    lamperti_inverse,
    simulate_cbi,
    simulate_feller_exact,
    simulate_levy,
    simulate_stable_cbi,
    write_path_csv,
)
from cbranch.rngkit import make_stream, split

from conftest import assert_within

FELLER = BranchingMechanism(0, 1)


def det_path(t, x, absorbed_at=None):
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (x[1:] + x[:-1]))])
    return SamplePath(t, x, cum, absorbed_at)


# -- Euler schemes -----------------------------------------------------------


def test_drift_only_path():
    p = simulate_cbi(BranchingMechanism(1, 0), None, None, 1.0, 1.0, 1e-3, 1e-3, make_stream(0))
    assert abs(p.values[-1] - math.exp(-1)) < 1e-3
    assert p.extinct_at is None


def test_feller_euler_mean_and_laplace():
    b = simulate_cbi(FELLER, None, None, 1.0, 1.0, 1e-2, 1e-3, make_stream(1).spawn(20_000))
    assert_within(b.at(1.0), 1.0)
    assert_within(np.exp(-b.at(1.0)), math.exp(-0.5), bias=3e-2)


def test_batch_rows_follow_their_streams():
    root = make_stream(2)
    phi = BranchingMechanism(0.2, 0.5, Atoms(((1.0, 1.0),)))
    b = simulate_cbi(phi, ImmigrationMechanism(0.5), None, 1.0, 0.5, 1e-2, 1e-3, root.spawn(4))
    one = simulate_cbi(phi, ImmigrationMechanism(0.5), None, 1.0, 0.5, 1e-2, 1e-3, split(root, 2))
    np.testing.assert_array_equal(b.values[2], one.values)


def test_save_times_subset():
    b = simulate_cbi(FELLER, None, None, 1.0, 1.0, 0.01, 1e-3, make_stream(3).spawn(5), save_times=[0.25, 1.0])
    assert b.t_grid.tolist() == [0.25, 1.0]


def test_time_dependent_rate_matches_oracle():
    psi = ImmigrationMechanism(0.5, ExponentialJump(1.0, 2.0))
    phi = BranchingMechanism(1.0, 1.0)
    rho = lambda t: 1.0 + t
    b = simulate_cbi(phi, psi, TimeFn(rho), 0.5, 1.0, 1e-2, 1e-3, make_stream(4).spawn(20_000))
    target = transition_laplace(phi, psi, 0.5, 1.0, 1.0, rate=rho)
    assert_within(np.exp(-b.at(1.0)), target, bias=3e-2)


def test_state_dependent_rate_mean():
    # q(y) = 1 + y/2 gives m' = beta (1 + m/2) - b m
    beta, bb, x0, T = 1.0, 1.0, 0.5, 1.0
    rate = StateFn(lambda y: 1.0 + 0.5 * y, 0.5)
    b = simulate_cbi(BranchingMechanism(bb, 1.0), ImmigrationMechanism(beta), rate, x0, T, 1e-2, 1e-3, make_stream(5).spawn(20_000))
    k = bb - 0.5 * beta
    target = x0 * math.exp(-k * T) + beta * (1 - math.exp(-k * T)) / k
    assert_within(b.at(T), target, bias=2e-2)


def test_state_rate_checks_lipschitz_bound():
    with pytest.raises(DomainError):
        StateFn(lambda y: 3.0 * y, 1.0)


def test_stable_scheme_without_stable_part_is_feller():
    s = make_stream(6).spawn(50)
    a = simulate_stable_cbi(1.0, 0.0, 1.5, 0.3, ImmigrationMechanism(0.7), 1.0, 0.5, 1e-2, s)
    b = simulate_cbi(BranchingMechanism(0.3, 1.0), ImmigrationMechanism(0.7), None, 1.0, 0.5, 1e-2, 1e-3, make_stream(6).spawn(50))
    np.testing.assert_array_equal(a.values, b.values)


def test_stable_scheme_mean_is_conserved():
    phi = stable_phi(1.5)
    b = simulate_stable_cbi(0.0, phi.m.sigma, 1.5, 0.0, None, 1.0, 1.0, 1e-2, make_stream(7).spawn(20_000))
    y = b.at(1.0)
    # heavy tail: compare a bounded functional with the oracle and the mean loosely
    assert_within(np.exp(-y), math.exp(-v_solve(phi, 1.0, 1.0).v), bias=2e-2)
    assert abs(y.mean() - 1.0) < 0.1


# -- exact Feller sampler ----------------------------------------------------


def test_feller_exact_extinction_and_laplace():
    b = simulate_feller_exact(1.0, 0.0, 0.0, 1.0, [0.0, 1.0], make_stream(8).spawn(50_000))
    y = b.at(1.0)
    assert_within(y == 0, math.exp(-1))
    assert_within(np.exp(-y), math.exp(-0.5))
    assert np.all(np.isnan(b.extinct_at) == (y > 0))


def test_feller_exact_stationary():
    b = simulate_feller_exact(1.0, 1.0, 1.0, 0.0, [0.0, 15.0], make_stream(9).spawn(50_000))
    assert_within(np.exp(-b.at(15.0)), 0.5)


def test_feller_exact_rejects_bad_grid():
    with pytest.raises(DomainError):
        simulate_feller_exact(1.0, 0.0, 0.0, 1.0, [0.5, 1.0], make_stream(0))


# -- Levy paths --------------------------------------------------------------


def test_levy_pure_drift_hits_zero():
    p = simulate_levy(BranchingMechanism(1, 0), 1.0, 2.0, 0.01, 1e-3, make_stream(0))
    assert abs(p.extinct_at - 1.0) < 1e-9
    assert p.values[-1] == 0.0


def test_levy_gaussian_laplace():
    b = simulate_levy(FELLER, 50.0, 1.0, 0.05, 1e-3, make_stream(10).spawn(50_000))
    assert_within(np.exp(-0.5 * (b.at(1.0) - 50.0)), math.exp(0.25))


def test_levy_stable_laplace():
    b = simulate_levy(stable_phi(1.5), 100.0, 1.0, 0.05, 1e-3, make_stream(11).spawn(50_000))
    assert_within(np.exp(-(b.at(1.0) - 100.0)), math.e)


def test_levy_compound_laplace():
    phi = BranchingMechanism(0.5, 0.0, ExponentialJump(1.0, 2.0))
    b = simulate_levy(phi, 100.0, 1.0, 0.05, 1e-3, make_stream(12).spawn(50_000))
    assert_within(np.exp(-(b.at(1.0) - 100.0)), math.exp(phi.phi(1.0)))


# -- Lamperti transforms -----------------------------------------------------


def test_forward_exponential_decay():
    t = np.linspace(0, 12, 12001)
    p = det_path(t, np.exp(-t))
    z = lamperti_forward(p, 1e-3)
    inside = z.t_grid < 0.99
    assert np.max(np.abs(z.values[inside] - (1 - z.t_grid[inside]))) < 1e-5


def test_forward_constant():
    t = np.linspace(0, 2, 201)
    z = lamperti_forward(det_path(t, np.full(t.size, 3.0)), 0.01)
    np.testing.assert_allclose(z.values, 3.0)
    assert abs(z.t_grid[-1] - 6.0) < 1e-12


def test_inverse_linear_decay_is_absorbed():
    s = np.linspace(0, 1, 1001)
    x = lamperti_inverse(det_path(s, 1 - s, absorbed_at=1.0), 1e-3)
    inside = x.t_grid < 5
    assert np.max(np.abs(x.values[inside] - np.exp(-x.t_grid[inside]))) < 1e-9


def test_inverse_constant():
    s = np.linspace(0, 2, 201)
    x = lamperti_inverse(det_path(s, np.full(s.size, 2.0)), 0.01)
    np.testing.assert_allclose(x.values, 2.0)


def test_round_trip():
    t = np.linspace(0, 3, 3001)
    x = 1 + 0.5 * np.sin(3 * t)
    back = lamperti_inverse(lamperti_forward(det_path(t, x), 1e-4), 1e-3)
    n = min(back.t_grid.size, t.size)
    assert np.max(np.abs(back.values[:n] - x[:n])) < 1e-6


def test_inverse_refuses_near_zero_interior():
    s = np.linspace(0, 1, 11)
    z = np.ones(11)
    z[5] = 1e-14
    with pytest.raises(NumericError):
        lamperti_inverse(det_path(s, z))


def test_batch_forward_matches_single():
    b = simulate_feller_exact(1.0, 0.0, 0.0, 1.0, np.linspace(0, 2, 201), make_stream(13).spawn(5))
    vals = lamperti_forward_values(b, [0.3])
    for i in range(5):
        z = lamperti_forward(b.path(i), 0.01)
        if z.t_grid[-1] >= 0.3:
            assert abs(vals[i, 0] - z.value_at(0.3)) < 1e-9


# -- excursion and immigration reconstructions ------------------------------


def test_excursion_from_zero():
    b = excursion_reconstruct_feller(1.0, 0.0, 0.0, 0.5, 1.0, make_stream(0).spawn(10))
    assert np.all(b.values == 0)


def test_entrance_values():
    vbar, m = feller_entrance(1.0, 0.0, 1.0)
    assert vbar == 1.0 and m == 1.0


def test_excursion_marginals():
    b = excursion_reconstruct_feller(1.0, 0.0, 1.0, 1.0, 2.0, make_stream(14).spawn(20_000), t_grid=[1.0, 2.0])
    assert_within(np.exp(-b.at(1.0)), math.exp(-0.5))
    assert_within(np.exp(-b.at(2.0)), transition_laplace(FELLER, None, 1.0, 2.0, 1.0))
    assert_within(b.jump_counts, 1.0)


def test_immigration_without_psi_is_zero():
    b = immigration_reconstruct_feller(1.0, 1.0, ImmigrationMechanism(), 1.0, 0.1, make_stream(0).spawn(10))
    assert np.all(b.values == 0)


def test_immigration_marginal():
    b = immigration_reconstruct_feller(1.0, 1.0, ImmigrationMechanism(1.0), 3.0, 0.1, make_stream(15).spawn(20_000), t_grid=[3.0])
    assert_within(np.exp(-b.at(3.0)), 1 / (1 + q_b_alpha(1.0, 1.0, 3.0)))


def test_immigration_arrival_counts():
    psi = ImmigrationMechanism(0.0, Atoms(((1.0, 0.5),)))
    b = immigration_reconstruct_feller(1.0, 1.0, psi, 4.0, 0.1, make_stream(16).spawn(20_000))
    assert_within(b.jump_counts, 2.0)
    assert stats.chisquare(np.bincount(b.jump_counts, minlength=8)[:8], stats.poisson(2.0).pmf(np.arange(8)) * b.jump_counts.size, sum_check=False).pvalue > 1e-3


# -- output ------------------------------------------------------------------


def test_path_csv(tmp_path):
    p = simulate_feller_exact(1.0, 0.0, 0.0, 0.1, [0.0, 0.5, 1.0], make_stream(17))
    write_path_csv(p, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == ",".join(PATH_HEADER)
    assert lines[1] == "0,0.1,0,0"
    assert len(lines) == 4
