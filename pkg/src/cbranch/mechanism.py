"""Branching and immigration mechanisms.

``phi(z) = b z + c z**2 + int (exp(-z u) - 1 + z u) m(du)`` and
``psi(z) = beta z + int (1 - exp(-z u)) n(du)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import DomainError
from .measures import (
    Atoms,
    ExponentialJump,
    LevyMeasure,
    NullMeasure,
    StableBranching,
    StableImmigration,
    em1x_scalar,
    tail_integral,
)

__all__ = [
    "BranchingMechanism",
    "ImmigrationMechanism",
    "Criticality",
    "phi_eval",
    "phi_prime_eval",
    "psi_eval",
    "psi_prime0",
    "grey_check",
    "largest_root",
    "classify",
    "measure_from_dict",
    "measure_to_dict",
    "stable_phi",
]

ROOT_TOL = 1e-13


@dataclass(frozen=True)
class BranchingMechanism:
    b: float = 0.0
    c: float = 0.0
    m: LevyMeasure = field(default_factory=NullMeasure)

    def __post_init__(self):
        if not (math.isfinite(self.b) and math.isfinite(self.c)):
            raise DomainError("b and c must be finite")
        if self.c < 0:
            raise DomainError("c must be nonnegative")
        if not math.isfinite(tail_integral(self.m, "u_wedge_u2")):
            raise DomainError("branching measure needs finite int (u ^ u^2) m(du)")

    def phi(self, z: float) -> float:
        if z < 0:
            raise DomainError("phi is defined on z >= 0")
        if z == 0:
            return 0.0
        return self.b * z + self.c * z * z + self.m.phi_kernel(z)

    def phi0(self, z: float) -> float:
        """``phi(z) - b z``."""
        if z == 0:
            return 0.0
        return self.c * z * z + self.m.phi_kernel(z)

    def phi_prime(self, z: float) -> float:
        if z < 0:
            raise DomainError("phi' is defined on z >= 0")
        return self.b + self.phi0_prime(z)

    def phi0_prime(self, z: float) -> float:
        """``phi'(z) - b``, nonnegative and increasing."""
        if z == 0:
            return 0.0
        return 2.0 * self.c * z + self.m.phi_kernel_prime(z)

    def phi_quad(self, z: float) -> float:
        """``phi`` with the Levy part by quadrature (independent of the closed forms)."""
        if z == 0:
            return 0.0
        jump = self.m.integrate(lambda u: em1x_scalar(z * u), breakpoints=(1.0 / z,))
        return self.b * z + self.c * z * z + jump

    def phi_prime_quad(self, z: float) -> float:
        if z == 0:
            return self.b
        jump = self.m.integrate(lambda u: -u * math.expm1(-z * u), breakpoints=(1.0 / z,))
        return self.b + 2.0 * self.c * z + jump

    @property
    def is_zero(self) -> bool:
        return self.b == 0 and self.c == 0 and self.m.is_null

    def to_dict(self) -> dict:
        return {"b": self.b, "c": self.c, "m": measure_to_dict(self.m)}

    @classmethod
    def from_dict(cls, d: dict) -> "BranchingMechanism":
        _check_keys(d, {"b", "c", "m"}, "mechanism")
        return cls(float(d.get("b", 0.0)), float(d.get("c", 0.0)), measure_from_dict(d.get("m")))


@dataclass(frozen=True)
class ImmigrationMechanism:
    beta: float = 0.0
    n: LevyMeasure = field(default_factory=NullMeasure)

    def __post_init__(self):
        if not math.isfinite(self.beta) or self.beta < 0:
            raise DomainError("beta must be finite and nonnegative")
        if not math.isfinite(tail_integral(self.n, "one_wedge_u")):
            raise DomainError("immigration measure needs finite int (1 ^ u) n(du)")

    def psi(self, z: float) -> float:
        if z < 0:
            raise DomainError("psi is defined on z >= 0")
        if z == 0:
            return 0.0
        return self.beta * z + self.n.psi_kernel(z)

    def psi_quad(self, z: float) -> float:
        if z == 0:
            return 0.0
        jump = self.n.integrate(lambda u: -math.expm1(-z * u), breakpoints=(1.0 / z,))
        return self.beta * z + jump

    def prime0(self) -> float:
        """``psi'(0) = beta + int u n(du)``."""
        first = self.n.moment_above(0.0, 1)
        if not math.isfinite(first):
            raise DomainError("psi'(0) diverges: int u n(du) is infinite")
        return self.beta + first

    @property
    def is_zero(self) -> bool:
        return self.beta == 0 and self.n.is_null

    def to_dict(self) -> dict:
        return {"beta": self.beta, "n": measure_to_dict(self.n)}

    @classmethod
    def from_dict(cls, d: dict | None) -> "ImmigrationMechanism":
        if d is None:
            return cls()
        _check_keys(d, {"beta", "n"}, "immigration")
        return cls(float(d.get("beta", 0.0)), measure_from_dict(d.get("n")))


class Criticality(str, Enum):
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"
    SUPERCRITICAL = "supercritical"


def stable_phi(alpha: float, scale: float = 1.0, b: float = 0.0, c: float = 0.0) -> BranchingMechanism:
    """Mechanism ``b z + c z**2 + scale * z**alpha`` for 1 < alpha < 2."""
    sigma = scale * alpha * (alpha - 1.0) / math.gamma(2.0 - alpha)
    return BranchingMechanism(b, c, StableBranching(sigma, alpha))


def phi_eval(phi: BranchingMechanism, z: float) -> float:
    return phi.phi(z)


def phi_prime_eval(phi: BranchingMechanism, z: float) -> float:
    return phi.phi_prime(z)


def psi_eval(psi: ImmigrationMechanism, z: float) -> float:
    return psi.psi(z)


def psi_prime0(psi: ImmigrationMechanism) -> float:
    return psi.prime0()


def grey_check(phi: BranchingMechanism) -> bool:
    """Whether ``phi`` is eventually positive with ``int^inf dz / phi(z) < inf``.

    ``phi(z) / z`` tends to ``b + 2c * inf + int u m(du)``; the integral can
    only converge when this is infinite, which for the supported measures
    happens exactly when ``c > 0`` or ``m`` has a stable component, and in
    both cases ``phi`` grows at least like ``z**alpha`` with ``alpha > 1``.
    """
    if phi.is_zero:
        raise DomainError("grey_check needs a mechanism that is not identically zero")
    return phi.c > 0 or isinstance(phi.m, StableBranching)


def largest_root(phi: BranchingMechanism) -> float:
    """Largest zero of ``phi``; 0 unless ``b < 0``.

    ``phi(z) / z`` is increasing and starts at ``b``, so bisection on its sign
    brackets the unique positive root.
    """
    if phi.b >= 0:
        return 0.0
    if not grey_check(phi):
        raise DomainError("Grey's condition fails: the largest root is infinite")
    hi = 1.0
    while phi.phi(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError("no positive root found")
    lo = 0.0
    while hi - lo > ROOT_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi.phi(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def classify(phi: BranchingMechanism) -> Criticality:
    if phi.b == 0:
        return Criticality.CRITICAL
    return Criticality.SUBCRITICAL if phi.b > 0 else Criticality.SUPERCRITICAL


# -- config serialization -------------------------------------------------------

_MEASURE_KINDS = {
    "null": (NullMeasure, ()),
    "stable_branching": (StableBranching, ("sigma", "alpha")),
    "stable_immigration": (StableImmigration, ("sigma", "alpha")),
    "exponential": (ExponentialJump, ("a", "theta")),
    "atoms": (Atoms, ("points",)),
}


def _check_keys(d, allowed, what):
    if not isinstance(d, dict):
        raise DomainError(f"{what} must be a mapping")
    extra = set(d) - set(allowed)
    if extra:
        raise DomainError(f"unknown {what} keys: {sorted(extra)}")


def measure_from_dict(d: dict | None) -> LevyMeasure:
    """``{"kind": "atoms", "points": [[z, w], ...]}`` and similar."""
    if d is None:
        return NullMeasure()
    if not isinstance(d, dict) or "kind" not in d:
        raise DomainError("measure needs a 'kind'")
    kind = d["kind"]
    if kind not in _MEASURE_KINDS:
        raise DomainError(f"unknown measure kind {kind!r}")
    cls, names = _MEASURE_KINDS[kind]
    _check_keys(d, set(names) | {"kind"}, "measure")
    missing = [k for k in names if k not in d]
    if missing:
        raise DomainError(f"measure {kind!r} is missing {missing}")
    if kind == "atoms":
        return Atoms(tuple(tuple(p) for p in d["points"]))
    return cls(*(float(d[k]) for k in names))


def measure_to_dict(mu: LevyMeasure) -> dict:
    for kind, (cls, names) in _MEASURE_KINDS.items():
        if type(mu) is cls:
            out = {"kind": kind}
            for k in names:
                v = getattr(mu, k)
                out[k] = [list(p) for p in v] if k == "points" else v
            return out
    raise DomainError(f"cannot serialize {type(mu).__name__}")
