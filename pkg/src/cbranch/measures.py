"""Measures on the half line: Levy measures, infinitely divisible exponents,
complete monotonicity and empirical Laplace transforms.

A :class:`LevyMeasure` carries both closed-form kernel integrals (used on hot
paths) and a generic quadrature, ``integrate``, that splits at ``u = 1`` and
substitutes ``u = exp(-s)`` on ``(0, 1)`` to tame ``u**(-1-alpha)`` poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate

from .errors import DomainError, NumericError
from .estimate import MCEstimate

__all__ = [
    "LevyMeasure",
    "NullMeasure",
    "StableBranching",
    "StableImmigration",
    "ExponentialJump",
    "Atoms",
    "InfDivPair",
    "TAIL_KINDS",
    "tail_integral",
    "inf_div_exponent",
    "complete_monotone_check",
    "empirical_laplace",
    "em1x",
    "em1x_scalar",
]

QUAD_RTOL = 1e-10
_S_MAX = 150.0 * math.log(10.0)
TAIL_KINDS = ("one_wedge_u", "u_wedge_u2", "log_tail", "u_log_tail")


def em1x(x):
    """``exp(-x) - 1 + x`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs * xs * (0.5 - xs * (1.0 / 6.0 - xs * (1.0 / 24.0 - xs / 120.0)))
    return np.where(small, series, np.expm1(-x) + x)


def em1x_scalar(x: float) -> float:
    """Scalar ``exp(-x) - 1 + x`` (stable near 0)."""
    if abs(x) < 1e-3:
        return x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    return math.expm1(-x) + x


def _quad(fn, a, b, rtol):
    val, err = _integrate.quad(fn, a, b, epsabs=0.0, epsrel=rtol, limit=400)
    if not np.isfinite(val) or err > max(100 * rtol * abs(val), 1e-14):
        raise NumericError(f"quadrature did not converge on [{a}, {b}]", residual=err)
    return val, err


class LevyMeasure:
    """Base class; subclasses are immutable parameter records."""

    has_density = False

    def density(self, u):
        raise NotImplementedError

    def _density_u(self, u):
        return self.density(u) * u

    # kernels: psi-type int (1-e^{-zu}), phi-type int (e^{-zu}-1+zu),
    # and its derivative int u(1-e^{-zu})
    def psi_kernel(self, z: float) -> float:
        raise NotImplementedError

    def phi_kernel(self, z: float) -> float:
        raise NotImplementedError

    def phi_kernel_prime(self, z: float) -> float:
        raise NotImplementedError

    def integrate(self, fn: Callable[[float], float], breakpoints: Sequence[float] = (), rtol: float = QUAD_RTOL) -> float:
        """``int fn(u) mu(du)`` by adaptive quadrature (density variants)."""
        if not self.has_density:
            raise NotImplementedError
        pts = sorted({float(p) for p in breakpoints if p > 0 and np.isfinite(p)} | {1.0})
        low = [p for p in pts if p < 1.0]
        high = [p for p in pts if p > 1.0]
        total = 0.0
        # (0, 1] in s = -log u, cut at u = 1e-150 where the remaining mass of
        # any admissible integrand is far below the quadrature tolerance
        s_edges = [0.0] + sorted(-math.log(p) for p in low if p > 1e-150) + [_S_MAX]

        def g(s):
            u = math.exp(-s)
            return fn(u) * self._density_u(u)

        for a, b in zip(s_edges[:-1], s_edges[1:]):
            total += _quad(g, a, b, rtol)[0]
        u_edges = [1.0] + high + [math.inf]
        h = lambda u: fn(u) * self.density(u)
        for a, b in zip(u_edges[:-1], u_edges[1:]):
            total += _quad(h, a, b, rtol)[0]
        return total

    # truncation helpers for jump simulation
    def mass_above(self, eps: float) -> float:
        raise NotImplementedError

    def moment_above(self, eps: float, k: int) -> float:
        raise NotImplementedError

    def moment_below(self, eps: float, k: int) -> float:
        raise NotImplementedError

    def sample_above(self, eps: float, u: np.ndarray, u2: np.ndarray | None = None) -> np.ndarray:
        """Jump sizes from ``mu`` restricted to ``(eps, inf)``, driven by uniforms ``u``."""
        raise NotImplementedError

    def tail(self, kind: str) -> float:
        raise NotImplementedError

    @property
    def total_mass(self) -> float:
        return self.mass_above(0.0)

    @property
    def is_null(self) -> bool:
        return False


@dataclass(frozen=True)
class NullMeasure(LevyMeasure):
    def psi_kernel(self, z):
        return 0.0

    def phi_kernel(self, z):
        return 0.0

    def phi_kernel_prime(self, z):
        return 0.0

    def integrate(self, fn, breakpoints=(), rtol=QUAD_RTOL):
        return 0.0

    def mass_above(self, eps):
        return 0.0

    def moment_above(self, eps, k):
        return 0.0

    def moment_below(self, eps, k):
        return 0.0

    def sample_above(self, eps, u, u2=None):
        return np.zeros_like(u)

    def tail(self, kind):
        return 0.0

    @property
    def is_null(self):
        return True


@dataclass(frozen=True)
class _PowerLaw(LevyMeasure):
    sigma: float
    alpha: float
    has_density = True

    def density(self, u):
        return self.sigma * u ** (-1.0 - self.alpha)

    def _density_u(self, u):
        return self.sigma * u ** (-self.alpha)

    def mass_above(self, eps):
        if eps <= 0:
            return math.inf
        return self.sigma * eps ** (-self.alpha) / self.alpha

    def moment_above(self, eps, k):
        if k >= self.alpha:
            return math.inf
        if eps <= 0 and k <= self.alpha:
            return math.inf
        return self.sigma * eps ** (k - self.alpha) / (self.alpha - k)

    def moment_below(self, eps, k):
        if k <= self.alpha:
            return math.inf
        return self.sigma * eps ** (k - self.alpha) / (k - self.alpha)

    def sample_above(self, eps, u, u2=None):
        return eps * u ** (-1.0 / self.alpha)

    def tail(self, kind):
        s, a = self.sigma, self.alpha
        if kind == "one_wedge_u":
            return s / (1.0 - a) + s / a if a < 1 else math.inf
        if kind == "u_wedge_u2":
            return s / (2.0 - a) + s / (a - 1.0) if 1 < a < 2 else math.inf
        if kind == "log_tail":
            return s / a**2
        if kind == "u_log_tail":
            return s / (a - 1.0) ** 2 if a > 1 else math.inf
        raise DomainError(f"unknown tail kind {kind!r}")


@dataclass(frozen=True)
class StableBranching(_PowerLaw):
    """``sigma * z**(-1-alpha) dz`` with 1 < alpha < 2 (branching role)."""

    def __post_init__(self):
        if not self.sigma > 0 or not 1.0 < self.alpha < 2.0:
            raise DomainError("StableBranching needs sigma > 0 and 1 < alpha < 2")

    @property
    def coefficient(self) -> float:
        """``K`` in ``phi_kernel(z) = K z**alpha``."""
        a = self.alpha
        return self.sigma * math.gamma(2.0 - a) / (a * (a - 1.0))

    def psi_kernel(self, z):
        if z == 0:
            return 0.0
        return math.inf

    def phi_kernel(self, z):
        return self.coefficient * z**self.alpha

    def phi_kernel_prime(self, z):
        return self.coefficient * self.alpha * z ** (self.alpha - 1.0)


@dataclass(frozen=True)
class StableImmigration(_PowerLaw):
    """``sigma * z**(-1-alpha) dz`` with 0 < alpha < 1 (immigration role)."""

    def __post_init__(self):
        if not self.sigma > 0 or not 0.0 < self.alpha < 1.0:
            raise DomainError("StableImmigration needs sigma > 0 and 0 < alpha < 1")

    @property
    def coefficient(self) -> float:
        """``K`` in ``psi_kernel(z) = K z**alpha``."""
        return self.sigma * math.gamma(1.0 - self.alpha) / self.alpha

    def psi_kernel(self, z):
        return self.coefficient * z**self.alpha

    def phi_kernel(self, z):
        if z == 0:
            return 0.0
        return math.inf

    def phi_kernel_prime(self, z):
        return math.inf


@dataclass(frozen=True)
class ExponentialJump(LevyMeasure):
    """``a * exp(-theta z) dz``; finite total mass ``a / theta``."""

    a: float
    theta: float
    has_density = True

    def __post_init__(self):
        if self.a < 0 or not self.theta > 0:
            raise DomainError("ExponentialJump needs a >= 0 and theta > 0")

    def density(self, u):
        return self.a * math.exp(-self.theta * u)

    def psi_kernel(self, z):
        return self.a * z / (self.theta * (self.theta + z))

    def phi_kernel(self, z):
        return self.a * z * z / (self.theta**2 * (self.theta + z))

    def phi_kernel_prime(self, z):
        th = self.theta
        return self.a * z * (z + 2.0 * th) / (th**2 * (th + z) ** 2)

    def mass_above(self, eps):
        return self.a / self.theta * math.exp(-self.theta * max(eps, 0.0))

    def moment_above(self, eps, k):
        eps = max(eps, 0.0)
        val, _ = _quad(lambda u: u**k * self.density(u), eps, math.inf, 1e-12)
        return val

    def moment_below(self, eps, k):
        if eps <= 0:
            return 0.0
        val, _ = _quad(lambda u: u**k * self.density(u), 0.0, eps, 1e-12)
        return val

    def sample_above(self, eps, u, u2=None):
        return max(eps, 0.0) - np.log(u) / self.theta

    def tail(self, kind):
        if self.a == 0:
            return 0.0
        if kind == "one_wedge_u":
            f = lambda u: min(1.0, u)
        elif kind == "u_wedge_u2":
            f = lambda u: min(u, u * u)
        elif kind == "log_tail":
            f = lambda u: math.log(u) if u > 1 else 0.0
        elif kind == "u_log_tail":
            f = lambda u: u * math.log(u) if u > 1 else 0.0
        else:
            raise DomainError(f"unknown tail kind {kind!r}")
        return self.integrate(f)

    @property
    def is_null(self):
        return self.a == 0


@dataclass(frozen=True)
class Atoms(LevyMeasure):
    """Finite sum of point masses ``sum_i w_i delta_{z_i}``."""

    points: tuple = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple((float(z), float(w)) for z, w in self.points)
        if any(z <= 0 or w <= 0 for z, w in pts):
            raise DomainError("atoms need strictly positive locations and weights")
        object.__setattr__(self, "points", pts)

    @property
    def z(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def w(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def psi_kernel(self, z):
        return float(np.sum(-self.w * np.expm1(-z * self.z)))

    def phi_kernel(self, z):
        return float(np.sum(self.w * em1x(z * self.z)))

    def phi_kernel_prime(self, z):
        return float(np.sum(-self.w * self.z * np.expm1(-z * self.z)))

    def integrate(self, fn, breakpoints=(), rtol=QUAD_RTOL):
        return float(sum(w * fn(z) for z, w in self.points))

    def mass_above(self, eps):
        return float(self.w[self.z > eps].sum()) if self.points else 0.0

    def moment_above(self, eps, k):
        if not self.points:
            return 0.0
        sel = self.z > eps
        return float(np.sum(self.w[sel] * self.z[sel] ** k))

    def moment_below(self, eps, k):
        if not self.points:
            return 0.0
        sel = self.z <= eps
        return float(np.sum(self.w[sel] * self.z[sel] ** k))

    def sample_above(self, eps, u, u2=None):
        sel = self.z > eps
        zs, ws = self.z[sel], self.w[sel]
        cdf = np.cumsum(ws) / ws.sum()
        j = np.minimum(np.searchsorted(cdf, u, side="right"), zs.size - 1)
        return zs[j]

    def tail(self, kind):
        if not self.points:
            return 0.0
        z, w = self.z, self.w
        if kind == "one_wedge_u":
            return float(np.sum(w * np.minimum(1.0, z)))
        if kind == "u_wedge_u2":
            return float(np.sum(w * np.minimum(z, z * z)))
        if kind == "log_tail":
            return float(np.sum(w * np.where(z > 1, np.log(z), 0.0)))
        if kind == "u_log_tail":
            return float(np.sum(w * np.where(z > 1, z * np.log(z), 0.0)))
        raise DomainError(f"unknown tail kind {kind!r}")

    @property
    def is_null(self):
        return not self.points


def tail_integral(mu: LevyMeasure, kind: str) -> float:
    """One of the integrability functionals, ``math.inf`` when divergent.

    ``kind`` is ``one_wedge_u`` (1 ^ u), ``u_wedge_u2`` (u ^ u^2),
    ``log_tail`` (log u on u > 1) or ``u_log_tail`` (u log u on u > 1).
    Divergence is decided per variant from the density's power behaviour.
    """
    if kind not in TAIL_KINDS:
        raise DomainError(f"unknown tail kind {kind!r}")
    return mu.tail(kind)


@dataclass(frozen=True)
class InfDivPair:
    """Drift ``h`` and Levy measure ``l`` of an infinitely divisible law on R+."""

    h: float
    l: LevyMeasure

    def __post_init__(self):
        if self.h < 0:
            raise DomainError("drift h must be nonnegative")
        if not math.isfinite(tail_integral(self.l, "one_wedge_u")):
            raise DomainError("(1 ^ u) l(du) must be finite")


def inf_div_exponent(p: InfDivPair, lam: float, exact: bool = False) -> float:
    """``h lam + int (1 - exp(-lam u)) l(du)``.

    Density variants are integrated by quadrature unless ``exact`` asks for
    the closed-form kernel; atoms are summed directly.
    """
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    if lam == 0:
        return 0.0
    mu = p.l
    if exact or not mu.has_density:
        jump = mu.psi_kernel(lam)
    else:
        jump = mu.integrate(lambda u: -math.expm1(-lam * u), breakpoints=(1.0 / lam,))
    return p.h * lam + jump


def complete_monotone_check(
    f: Callable[[float], float],
    lambda_grid: Sequence[float],
    c_grid: Sequence[float],
    max_order: int,
) -> tuple[bool, tuple[float, float, int] | None]:
    """Check ``(-1)**i * Delta_c**i f(lam) >= -tol`` for ``i <= max_order``.

    Returns ``(passed, first_violation)`` where the violation is
    ``(lam, c, i)``, scanned by increasing order ``i``.
    """
    if not len(lambda_grid) or not len(c_grid):
        raise DomainError("grids must be nonempty")
    if max_order > 12 or max_order < 0:
        raise DomainError("max_order must lie in [0, 12]")
    f0 = f(0.0)
    if not math.isfinite(f0):
        raise DomainError("f returned a non-finite value")
    tol = 1e-9 * max(1.0, abs(f0))
    cache: dict[float, float] = {}

    def F(x):
        if x not in cache:
            v = f(x)
            if not math.isfinite(v):
                raise DomainError(f"f({x}) is not finite")
            cache[x] = v
        return cache[x]

    for i in range(max_order + 1):
        binom = [math.comb(i, k) for k in range(i + 1)]
        for lam in lambda_grid:
            for c in c_grid:
                # (-1)^i Delta_c^i f(lam) = sum_k (-1)^k C(i,k) f(lam + k c)
                d = sum((-1) ** k * binom[k] * F(lam + k * c) for k in range(i + 1))
                if d < -tol:
                    return False, (lam, c, i)
    return True, None


def empirical_laplace(samples, lam: float) -> MCEstimate:
    """Mean and standard error of ``exp(-lam X_i)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty sample")
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    return MCEstimate.from_samples(np.exp(-lam * x))
