"""Cumulant semigroup and the Laplace transforms built from it.

The backward equation ``dv/dt = -phi(v)``, ``v_0 = lambda`` is integrated
together with ``int_0^s psi(v_r) dr`` and ``int_0^s (phi'(v_r) - b) dr`` so that
CBI transitions and size-biased transforms share one trajectory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize

from .errors import DomainError, NumericError
from .mechanism import BranchingMechanism, ImmigrationMechanism, StableBranching, grey_check, largest_root
from .ode import OdeSolution, dopri5

__all__ = [
    "v_closed",
    "CumulantTrajectory",
    "GreyWarning",
    "v_solve",
    "q_b_alpha",
    "v_stable_closed",
    "vbar_stable_closed",
    "reciprocal_integral",
    "vbar_t",
    "vbar_t_ode",
    "transition_laplace",
    "mean",
    "extinction_prob",
    "stationary_laplace",
    "sizebiased_laplace",
]

DEFAULT_TOL = 1e-10
VBAR_START = 1e8
VBAR_AGREE = 1e-6


class GreyWarning(UserWarning):
    """Grey's condition fails, so the requested extinction probability is 0."""


@dataclass(frozen=True)
class CumulantTrajectory:
    lam: float
    t_grid: np.ndarray
    v_values: np.ndarray
    psi_integral: np.ndarray
    phi0prime_integral: np.ndarray
    _dense: OdeSolution = field(repr=False, compare=False)

    @property
    def t(self) -> float:
        return float(self.t_grid[-1])

    @property
    def v(self) -> float:
        return float(self.v_values[-1])

    def at(self, s) -> np.ndarray:
        """``(v_s, psi integral, phi0' integral)`` at ``s`` by Hermite interpolation."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0) or np.any(s_arr > self.t * (1 + 1e-12)):
            raise DomainError("s outside the solved interval")
        return self._dense(np.minimum(s_arr, self.t))

    def v_at(self, s):
        out = self.at(s)[..., 0]
        return float(out) if np.ndim(out) == 0 else out


def v_solve(
    phi: BranchingMechanism,
    lam: float,
    t: float,
    tol: float = DEFAULT_TOL,
    psi: Optional[ImmigrationMechanism] = None,
) -> CumulantTrajectory:
    """Solve the cumulant equation up to ``t`` with local error at most ``tol``."""
    if not (lam >= 0 and math.isfinite(lam)):
        raise DomainError("lambda must be finite and nonnegative")
    if not (t >= 0 and math.isfinite(t)):
        raise DomainError("t must be finite and nonnegative")
    if not tol > 0:
        raise DomainError("tol must be positive")

    def rhs(_s, y):
        v = y[0] if y[0] > 0 else 0.0
        return np.array(
            [
                -phi.phi(v),
                psi.psi(v) if psi is not None else 0.0,
                phi.phi0_prime(v),
            ]
        )

    sol = dopri5(rhs, [lam, 0.0, 0.0], t, rtol=tol, atol=tol * 1e-2)
    return CumulantTrajectory(
        lam=float(lam),
        t_grid=sol.t,
        v_values=np.maximum(sol.y[:, 0], 0.0),
        psi_integral=sol.y[:, 1],
        phi0prime_integral=sol.y[:, 2],
        _dense=sol,
    )


def q_b_alpha(b: float, alpha: float, t: float) -> float:
    """``(1 - exp(-alpha b t)) / b``, with the ``alpha t`` limit for tiny ``|b|``."""
    if abs(b) < 1e-12:
        return alpha * t
    return -math.expm1(-alpha * b * t) / b


def v_stable_closed(c: float, alpha: float, b: float, t: float, lam: float) -> float:
    """Cumulant of ``phi(z) = c z**(1+alpha) + b z``, 0 < alpha <= 1."""
    if not c > 0:
        raise DomainError("c must be positive")
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    if lam < 0 or t < 0:
        raise DomainError("t and lambda must be nonnegative")
    if lam == 0:
        return 0.0
    q = q_b_alpha(b, alpha, t)
    return math.exp(-b * t) * lam / (1.0 + c * q * lam**alpha) ** (1.0 / alpha)


def v_closed(phi: BranchingMechanism, lam: float, t: float) -> Optional[float]:
    """Closed-form ``v_t(lam)`` when ``phi`` is ``b z + c z**2`` or ``b z + K z**p``; else None."""
    if phi.m.is_null and phi.c > 0:
        return v_stable_closed(phi.c, 1.0, phi.b, t, lam)
    if phi.c == 0 and isinstance(phi.m, StableBranching):
        return v_stable_closed(phi.m.coefficient, phi.m.alpha - 1.0, phi.b, t, lam)
    return None


def vbar_stable_closed(c: float, alpha: float, b: float, t: float) -> float:
    """``lambda -> inf`` limit of :func:`v_stable_closed`."""
    if not t > 0:
        raise DomainError("t must be positive")
    return c ** (-1.0 / alpha) * math.exp(-b * t) * q_b_alpha(b, alpha, t) ** (-1.0 / alpha)


def _leading_power(phi: BranchingMechanism) -> tuple[float, float]:
    """``(L, p)`` with ``phi(z) ~ L z**p`` as ``z -> inf`` (Grey mechanisms only)."""
    if phi.c > 0:
        return phi.c, 2.0
    m = phi.m
    assert isinstance(m, StableBranching)
    return m.coefficient, m.alpha


_LOG_CAP = 150.0 * math.log(10.0)


def reciprocal_integral(phi: BranchingMechanism, u: float) -> float:
    """``int_u^inf dz / phi(z)`` for ``u`` above the largest root.

    Quadrature in ``s = log(z / u)`` up to ``z = 1e150``, plus the leading-order
    tail ``Z**(1-p) / (L (p-1))`` beyond it.
    """
    if not grey_check(phi):
        return math.inf
    L, p = _leading_power(phi)
    s_max = _LOG_CAP - math.log(u)
    if s_max <= 0:
        return u ** (1.0 - p) / (L * (p - 1.0))

    def g(s):
        z = u * math.exp(s)
        return z / phi.phi(z)

    val, err = _integrate.quad(g, 0.0, s_max, epsabs=0.0, epsrel=1e-12, limit=500)
    if err > 1e-9 * abs(val):
        raise NumericError("reciprocal integral did not converge", residual=err)
    z_cap = u * math.exp(s_max)
    return val + z_cap ** (1.0 - p) / (L * (p - 1.0))


def _vbar_root(phi: BranchingMechanism, t: float) -> float:
    r = largest_root(phi)
    # F(r + e^x) decreases from inf to 0 in x
    f = lambda x: reciprocal_integral(phi, r + math.exp(x)) - t
    lo, hi = -1.0, 1.0
    while f(lo) < 0:
        lo -= 4.0
        if lo < -700:
            raise NumericError("cannot bracket vbar_t from below")
    while f(hi) > 0:
        hi += 4.0
        if hi > 340:
            raise NumericError("cannot bracket vbar_t from above")
    x = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
    return r + math.exp(x)


def vbar_t_ode(phi: BranchingMechanism, t: float, start: float = VBAR_START, tol: float = DEFAULT_TOL) -> float:
    """``vbar_t`` from the cumulant equation started at ``start``.

    By the semigroup property ``vbar_t = v_{t - tau}(start)`` with
    ``tau = int_start^inf dz / phi(z)``.
    """
    tau = reciprocal_integral(phi, start)
    if t <= tau:
        raise DomainError("t is below the time needed to come down from the start value")
    return v_solve(phi, start, t - tau, tol=tol).v


def vbar_t(phi: BranchingMechanism, t: float, check: bool = True) -> float:
    """``vbar_t = lim_{lambda -> inf} v_t(lambda)``.

    Root-finding on ``u -> int_u^inf dz/phi`` and integration of the ODE from a
    large start value must agree to ``1e-6`` relative when ``check`` is set.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    if not grey_check(phi):
        raise DomainError("Grey's condition fails: vbar_t is infinite")
    root = _vbar_root(phi, t)
    if check:
        other = vbar_t_ode(phi, t)
        if abs(other - root) > VBAR_AGREE * max(abs(root), 1e-300):
            raise NumericError(
                f"vbar_t routes disagree: root {root!r} vs ode {other!r}",
                residual=abs(other - root),
            )
    return root


def _rate_integral(traj: CumulantTrajectory, psi: ImmigrationMechanism, rate: Callable[[float], float], t: float) -> float:
    """``int_0^t rate(s) psi(v_{t-s}) ds``."""
    if t == 0:
        return 0.0
    g = lambda s: rate(s) * psi.psi(max(traj.v_at(t - s), 0.0))
    val, err = _integrate.quad(g, 0.0, t, epsabs=1e-13, epsrel=1e-10, limit=400)
    return val


def transition_laplace(
    phi: BranchingMechanism,
    psi: Optional[ImmigrationMechanism],
    x: float,
    t: float,
    lam: float,
    rate: Optional[Callable[[float], float]] = None,
    tol: float = DEFAULT_TOL,
) -> float:
    """``E exp(-lam Y_t)`` given ``Y_0 = x``.

    With ``rate`` the immigration intensity at time ``s`` is ``rate(s)``.
    """
    if x < 0 or t < 0 or lam < 0:
        raise DomainError("x, t and lambda must be nonnegative")
    if lam == 0:
        return 1.0
    traj = v_solve(phi, lam, t, tol=tol, psi=None if rate is not None else psi)
    expo = x * traj.v
    if psi is not None and not psi.is_zero:
        expo += traj.psi_integral[-1] if rate is None else _rate_integral(traj, psi, rate, t)
    return math.exp(-expo)


def mean(
    phi: BranchingMechanism,
    psi: Optional[ImmigrationMechanism],
    rate: Optional[Callable[[float], float]],
    x: float,
    t: float,
) -> float:
    """``x e^{-bt} + psi'(0) int_0^t e^{-b(t-s)} rate(s) ds`` (``rate`` defaults to 1)."""
    if x < 0 or t < 0:
        raise DomainError("x and t must be nonnegative")
    b = phi.b
    if math.isinf(t):
        if rate is not None:
            raise DomainError("t = inf is only supported with a constant rate")
        if b <= 0:
            return math.inf if (x > 0 and b < 0) or (psi is not None and not psi.is_zero) else x
        return psi.prime0() / b if psi is not None else 0.0
    out = x * math.exp(-b * t)
    if psi is None or psi.is_zero:
        return out
    d = psi.prime0()
    if rate is None:
        return out + d * (t if abs(b) < 1e-12 else -math.expm1(-b * t) / b)
    val, _ = _integrate.quad(lambda s: math.exp(-b * (t - s)) * rate(s), 0.0, t, epsabs=1e-13, epsrel=1e-10, limit=400)
    return out + d * val


def extinction_prob(phi: BranchingMechanism, x: float, t: float) -> float:
    """``P_x{Y_t = 0}``; ``t = inf`` gives the probability of ultimate extinction."""
    if x < 0:
        raise DomainError("x must be nonnegative")
    if x == 0:
        return 1.0
    if not t > 0:
        return 0.0
    if not grey_check(phi):
        warnings.warn("Grey's condition fails; extinction has probability 0", GreyWarning, stacklevel=2)
        return 0.0
    vb = largest_root(phi) if math.isinf(t) else vbar_t(phi, t)
    return math.exp(-x * vb)


def _order_at_zero_phi(phi: BranchingMechanism) -> float:
    if phi.b > 0:
        return 1.0
    if isinstance(phi.m, StableBranching):
        return phi.m.alpha
    return 2.0


def _order_at_zero_psi(psi: ImmigrationMechanism) -> float:
    if math.isfinite(psi.n.moment_above(0.0, 1)) or psi.beta > 0:
        return 1.0
    return psi.n.alpha  # StableImmigration


def stationary_laplace(phi: BranchingMechanism, psi: ImmigrationMechanism, lam: float) -> float:
    """``exp(-int_0^lam psi(z) / phi(z) dz)`` for the limiting law of a CBI process."""
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    if phi.b < 0:
        raise DomainError("no stationary law: the mechanism is supercritical")
    if phi.is_zero:
        raise DomainError("no stationary law: phi vanishes identically")
    if psi is None or psi.is_zero or lam == 0:
        return 1.0
    # near 0, psi/phi ~ z**(p_psi - p_phi); the tail measures on u > 1 of the
    # supported variants all have finite log moments
    if _order_at_zero_psi(psi) - _order_at_zero_phi(phi) <= -1.0:
        raise DomainError("no stationary law: int_0 psi/phi dz diverges")

    def g(s):
        z = lam * math.exp(-s)
        return psi.psi(z) / phi.phi(z) * z

    # stop where z reaches 1e-290; the neglected piece is O(z) there
    s_max = math.log(lam) + 290.0 * math.log(10.0)
    val, err = _integrate.quad(g, 0.0, s_max, epsabs=1e-14, epsrel=1e-11, limit=500)
    if not math.isfinite(val):
        raise NumericError("stationary integral did not converge", residual=err)
    return math.exp(-val)


def sizebiased_laplace(phi: BranchingMechanism, x: float, t: float, lam: float, tol: float = DEFAULT_TOL) -> float:
    """``exp(-x v_t(lam) - int_0^t (phi'(v_s) - b) ds)``."""
    if x < 0 or t < 0 or lam < 0:
        raise DomainError("x, t and lambda must be nonnegative")
    traj = v_solve(phi, lam, t, tol=tol)
    return math.exp(-x * traj.v - traj.phi0prime_integral[-1])
