import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from cbranch.errors import DomainError
from cbranch.measures import Atoms, ExponentialJump, NullMeasure, StableBranching, StableImmigration
from cbranch.mechanism import (
    BranchingMechanism,
    Criticality,
    ImmigrationMechanism,
    classify,
    grey_check,
    largest_root,
    measure_from_dict,
    measure_to_dict,
    phi_eval,
    phi_prime_eval,
    psi_eval,
    psi_prime0,
    stable_phi,
)

STABLE_SIGMA = 1.5 * 0.5 / special.gamma(0.5)


def test_pure_quadratic():
    assert phi_eval(BranchingMechanism(0, 1), 2.0) == 4.0


def test_stable_sigma_gives_power():
    phi = BranchingMechanism(0, 0, StableBranching(STABLE_SIGMA, 1.5))
    assert abs(phi_eval(phi, 1.0) - 1.0) < 1e-8
    assert abs(phi_prime_eval(phi, 1.0) - 1.5) < 1e-7
    assert stable_phi(1.5).m == phi.m


def test_root_of_supercritical_quadratic():
    assert phi_eval(BranchingMechanism(-1, 1), 1.0) == 0.0


def test_derivatives():
    assert phi_prime_eval(BranchingMechanism(0, 1), 1.0) == 2.0
    assert phi_prime_eval(BranchingMechanism(3, 0), 7.0) == 3.0


def test_phi_rejects_negative_argument():
    with pytest.raises(DomainError):
        phi_eval(BranchingMechanism(0, 1), -1.0)


def test_invalid_mechanisms():
    with pytest.raises(DomainError):
        BranchingMechanism(0, -1)
    with pytest.raises(DomainError):
        BranchingMechanism(math.nan, 1)


def test_psi_linear():
    psi = ImmigrationMechanism(2.0)
    assert psi_eval(psi, 3.0) == 6.0
    assert psi_prime0(psi) == 2.0


def test_psi_atoms():
    psi = ImmigrationMechanism(0.0, Atoms(((1.0, 1.0),)))
    assert abs(psi_eval(psi, 1.0) - (1 - math.exp(-1))) < 1e-15
    assert psi_prime0(psi) == 1.0


def test_psi_half_stable():
    psi = ImmigrationMechanism(0.0, StableImmigration(0.5 / special.gamma(0.5), 0.5))
    assert abs(psi_eval(psi, 4.0) - 2.0) < 1e-8
    with pytest.raises(DomainError):
        psi_prime0(psi)


@pytest.mark.parametrize(
    "phi, ok",
    [
        (BranchingMechanism(0, 1), True),
        (BranchingMechanism(1, 0), False),
        (stable_phi(1.5), True),
        (BranchingMechanism(0, 0, ExponentialJump(1.0, 1.0)), False),
    ],
)
def test_grey(phi, ok):
    assert grey_check(phi) is ok


@pytest.mark.parametrize("b, root", [(0, 0.0), (-1, 1.0), (-2, 2.0)])
def test_largest_root(b, root):
    assert abs(largest_root(BranchingMechanism(b, 1)) - root) < 1e-12


def test_largest_root_with_jumps():
    phi = BranchingMechanism(-2, 0.5, ExponentialJump(1.0, 1.0))
    r = largest_root(phi)
    assert r > 0 and abs(phi.phi(r)) < 1e-10


@pytest.mark.parametrize(
    "b, kind", [(0, Criticality.CRITICAL), (0.5, Criticality.SUBCRITICAL), (-0.5, Criticality.SUPERCRITICAL)]
)
def test_classify(b, kind):
    assert classify(BranchingMechanism(b, 1)) is kind


mechanisms = st.builds(
    BranchingMechanism,
    st.floats(-2, 2),
    st.floats(0, 2),
    st.one_of(
        st.just(NullMeasure()),
        st.builds(StableBranching, st.floats(0.1, 2), st.floats(1.05, 1.95)),
        st.builds(ExponentialJump, st.floats(0.1, 3), st.floats(0.2, 3)),
        st.builds(lambda z, w: Atoms(((z, w),)), st.floats(0.1, 5), st.floats(0.1, 3)),
    ),
)


@given(mechanisms, st.floats(0, 20), st.floats(0, 20))
@settings(max_examples=60, deadline=None)
def test_phi_convex_and_vanishes_at_zero(phi, z1, z2):
    assert phi.phi(0.0) == 0.0
    mid = phi.phi(0.5 * (z1 + z2))
    assert mid <= 0.5 * (phi.phi(z1) + phi.phi(z2)) + 1e-9 * (1 + abs(mid))


@given(mechanisms, st.floats(0.01, 20))
@settings(max_examples=60, deadline=None)
def test_closed_kernels_match_quadrature(phi, z):
    assert math.isclose(phi.phi(z), phi.phi_quad(z), rel_tol=1e-7, abs_tol=1e-9)
    assert math.isclose(phi.phi_prime(z), phi.phi_prime_quad(z), rel_tol=1e-7, abs_tol=1e-9)


@given(mechanisms)
@settings(max_examples=30, deadline=None)
def test_dict_round_trip(phi):
    assert BranchingMechanism.from_dict(phi.to_dict()) == phi
    assert measure_from_dict(measure_to_dict(phi.m)) == phi.m


def test_unknown_measure_kind():
    with pytest.raises(DomainError):
        measure_from_dict({"kind": "wiggly"})
