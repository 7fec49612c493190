"""Galton-Watson chains, with and without immigration, and their scaling limits.

Every offspring law exposes its generating function ``g(z)`` and the
complementary form ``1 - g(1 - w)`` which stays accurate when ``z`` is close
to 1; the latter drives :func:`vk_recursion` and :func:`scaling_diagnostics`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from . import rngkit
from .errors import DomainError, NumericError, UnsupportedOperation
from .mechanism import BranchingMechanism
from .rngkit import RandomStream, StreamBatch
from .tables import write_rows

__all__ = [
    "OffspringLaw",
    "Binary",
    "PoissonLaw",
    "Geometric",
    "StableOffspring",
    "FromMechanism",
    "pgf_eval",
    "sample_offspring",
    "gw_simulate",
    "gwi_simulate",
    "vk_recursion",
    "scaling_diagnostics",
    "write_scaling_csv",
    "SCALING_HEADER",
]

_POP_LIMIT = 2**62
SCALING_HEADER = ("k", "z", "G_k", "phi_k", "phi", "abs_err")


class OffspringLaw:
    def pgf(self, z: float) -> float:
        raise NotImplementedError

    def pgf_w(self, w: float) -> float:
        """``1 - g(1 - w)``."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def pmf(self, j: np.ndarray) -> np.ndarray:
        raise UnsupportedOperation(f"{type(self).__name__} has no coefficient table")

    def _sum_draws(self, batch: StreamBatch, idx: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """Sum of ``counts[i]`` independent offspring numbers from stream ``idx[i]``."""
        raise UnsupportedOperation(f"{type(self).__name__} cannot be sampled")


@dataclass(frozen=True)
class Binary(OffspringLaw):
    """Two children with probability ``p``, none otherwise."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("p must lie in [0, 1]")

    def pgf(self, z):
        return (1.0 - self.p) + self.p * z * z

    def pgf_w(self, w):
        return self.p * w * (2.0 - w)

    @property
    def mean(self):
        return 2.0 * self.p

    def pmf(self, j):
        j = np.asarray(j)
        return np.where(j == 0, 1.0 - self.p, np.where(j == 2, self.p, 0.0))

    def _sum_draws(self, batch, idx, counts):
        return 2 * rngkit._binomial(batch, idx, counts, np.full(idx.size, self.p))


@dataclass(frozen=True)
class PoissonLaw(OffspringLaw):
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError("mu must be positive")

    def pgf(self, z):
        return math.exp(self.mu * (z - 1.0))

    def pgf_w(self, w):
        return -math.expm1(-self.mu * w)

    @property
    def mean(self):
        return self.mu

    def pmf(self, j):
        j = np.asarray(j, dtype=float)
        return np.exp(j * math.log(self.mu) - self.mu - gammaln(j + 1.0))

    def _sum_draws(self, batch, idx, counts):
        return rngkit._poisson(batch, idx, counts * self.mu)


@dataclass(frozen=True)
class Geometric(OffspringLaw):
    """``P{j} = p (1 - p)**j``, generating function ``p / (1 - (1-p) z)``."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise DomainError("p must lie in (0, 1)")

    def pgf(self, z):
        return self.p / (1.0 - (1.0 - self.p) * z)

    def pgf_w(self, w):
        q = 1.0 - self.p
        return q * w / (self.p + q * w)

    @property
    def mean(self):
        return (1.0 - self.p) / self.p

    def pmf(self, j):
        j = np.asarray(j, dtype=float)
        return self.p * (1.0 - self.p) ** j

    def _sum_draws(self, batch, idx, counts):
        # a sum of x geometric counts is Poisson with a Gamma(x) mean
        out = np.zeros(idx.size, dtype=np.int64)
        live = counts > 0
        if live.any():
            lam = rngkit._gamma(batch, idx[live], counts[live].astype(float))
            out[live] = rngkit._poisson(batch, idx[live], lam * (1.0 - self.p) / self.p)
        return out


@dataclass(frozen=True)
class StableOffspring(OffspringLaw):
    """``g(z) = z + (1 - z)**alpha / alpha`` with 1 < alpha < 2 (mean 1, infinite variance).

    Coefficients: ``p_0 = 1/alpha``, ``p_1 = 0``, ``p_2 = (alpha-1)/2`` and
    ``p_{j+1} = p_j (j - alpha) / (j + 1)``.  Sampling inverts a table up to
    ``table_size`` and draws beyond it by exact rejection from the envelope
    ``(y - 3)**(-1-alpha)``.
    """

    alpha: float
    table_size: int = 4096

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise DomainError("alpha must lie in (1, 2)")
        if self.table_size < 8:
            raise DomainError("table_size must be at least 8")

    def pgf(self, z):
        return z + (1.0 - z) ** self.alpha / self.alpha

    def pgf_w(self, w):
        return w - w**self.alpha / self.alpha

    @property
    def mean(self):
        return 1.0

    @cached_property
    def _table(self) -> np.ndarray:
        a, n = self.alpha, self.table_size
        p = np.zeros(n + 1)
        p[0] = 1.0 / a
        p[2] = (a - 1.0) / 2.0
        for j in range(2, n):
            p[j + 1] = p[j] * (j - a) / (j + 1)
        return p

    @cached_property
    def _cdf(self) -> np.ndarray:
        return np.cumsum(self._table)

    def tail_mass(self, j: int) -> float:
        """``sum_{i > j} p_i`` in closed form, ``j >= 1``."""
        a = self.alpha
        # partial sums of the binomial series of (1 - z)**alpha
        return math.exp(gammaln(j + 1.0 - a) - gammaln(j + 1.0) - gammaln(2.0 - a)) * (a - 1.0) / a

    def _log_coeff(self, j):
        a = self.alpha
        # p_j = Gamma(j - a) / (a Gamma(-a) Gamma(j + 1)), Gamma(-a) > 0 here
        return gammaln(j - a) - gammaln(j + 1.0) - math.log(a) - gammaln(-a)

    def pmf(self, j):
        j = np.asarray(j)
        n = self.table_size
        inside = np.where(j <= n, j, 0)
        out = np.where(j <= n, self._table[inside], np.exp(self._log_coeff(np.maximum(j, 3).astype(float))))
        return np.where(j < 0, 0.0, out)

    def _draw(self, batch: StreamBatch, rep: np.ndarray) -> np.ndarray:
        u = batch.uniform_grouped(rep)
        cdf = self._cdf
        out = np.searchsorted(cdf, u, side="right").astype(np.int64)
        tail = np.nonzero(out > self.table_size)[0]
        if tail.size:
            out[tail] = self._tail(batch, rep[tail])
        return out

    def _tail(self, batch: StreamBatch, rep: np.ndarray) -> np.ndarray:
        a = self.alpha
        j0 = self.table_size + 1
        out = np.zeros(rep.size, dtype=np.int64)
        pending = np.arange(rep.size)
        while pending.size:
            r = rep[pending]
            y = 3.0 + (j0 - 3.0) * batch.uniform_grouped(r) ** (-1.0 / a)
            j = np.floor(y)
            # p_j is proportional to exp(gammaln(j-a) - gammaln(j+1))
            log_ratio = gammaln(j - a) - gammaln(j + 1.0) + (1.0 + a) * np.log(y - 3.0)
            ok = np.log(batch.uniform_grouped(r)) < log_ratio
            out[pending[ok]] = j[ok].astype(np.int64)
            pending = pending[~ok]
        return out

    def _sum_draws(self, batch, idx, counts):
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        if total == 0:
            return np.zeros(idx.size, dtype=np.int64)
        rep = np.repeat(idx, counts)
        draws = self._draw(batch, rep)
        group = np.repeat(np.arange(idx.size), counts)
        return np.bincount(group, weights=draws, minlength=idx.size).astype(np.int64)


@dataclass(frozen=True)
class FromMechanism(OffspringLaw):
    """The offspring law at scale ``k`` built from a branching mechanism.

    ``g = (gamma0 g0 + gamma1 g1) / (gamma0 + gamma1)`` with
    ``g0(z) = z + phi0(k (1 - z)) / (k gamma0)``,
    ``gamma0 = (1 + 2c) k + int u (1 - exp(-k u)) m(du)``, ``gamma1 = |b|`` and
    ``g1`` equal to 1 (``b > 0``) or ``z**2`` (``b < 0``).
    Evaluation only: its coefficients are not available in closed form.
    """

    phi: BranchingMechanism
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError("k must be a positive integer")

    @cached_property
    def gamma0(self) -> float:
        k = float(self.k)
        return (1.0 + 2.0 * self.phi.c) * k + self.phi.m.phi_kernel_prime(k)

    @property
    def gamma1(self) -> float:
        return abs(self.phi.b)

    @property
    def gamma_k(self) -> float:
        """Natural time scale ``gamma0 + gamma1`` matching ``phi``."""
        return self.gamma0 + self.gamma1

    def _g1_w(self, w):
        return 0.0 if self.phi.b >= 0 else w * (2.0 - w)

    def pgf_w(self, w):
        k = self.k
        g0w = w - self.phi.phi0(k * w) / (k * self.gamma0)
        return (self.gamma0 * g0w + self.gamma1 * self._g1_w(w)) / self.gamma_k

    def pgf(self, z):
        return 1.0 - self.pgf_w(1.0 - z)

    @property
    def mean(self):
        g1_mean = 0.0 if self.phi.b > 0 else 2.0
        if self.phi.b == 0:
            g1_mean = 1.0
        return (self.gamma0 + self.gamma1 * g1_mean) / self.gamma_k


def pgf_eval(g: OffspringLaw, z: float) -> float:
    if not 0.0 <= z <= 1.0:
        raise DomainError("z must lie in [0, 1]")
    return g.pgf(z)


def _as_batch(s):
    if isinstance(s, RandomStream):
        return s._batch, True
    if isinstance(s, StreamBatch):
        return s, False
    raise TypeError("expected RandomStream or StreamBatch")


def sample_offspring(g: OffspringLaw, s):
    """One offspring number per stream."""
    if isinstance(g, FromMechanism):
        raise UnsupportedOperation("FromMechanism laws are evaluation-only")
    batch, scalar = _as_batch(s)
    idx = np.arange(len(batch))
    out = g._sum_draws(batch, idx, np.ones(idx.size, dtype=np.int64))
    return int(out[0]) if scalar else out


def _step(g: OffspringLaw, batch, x: np.ndarray) -> np.ndarray:
    if np.any(x.astype(float) * max(g.mean, 1.0) > _POP_LIMIT):
        raise NumericError("population exceeds 2**63")
    out = np.zeros_like(x)
    live = np.nonzero(x > 0)[0]
    if live.size:
        out[live] = g._sum_draws(batch, live, x[live])
    if np.any(out < 0):
        raise NumericError("population exceeds 2**63")
    return out


def gwi_simulate(g: OffspringLaw, h: OffspringLaw | None, x0: int, n_steps: int, s) -> np.ndarray:
    """``y(n) = sum_{i <= y(n-1)} xi_{n,i} + eta_n`` with ``xi ~ g`` and ``eta ~ h``.

    A single stream gives a path of length ``n_steps + 1``; a batch gives one
    row per stream.
    """
    if isinstance(g, FromMechanism) or isinstance(h, FromMechanism):
        raise UnsupportedOperation("FromMechanism laws are evaluation-only")
    if x0 < 0 or n_steps < 0:
        raise DomainError("x0 and n_steps must be nonnegative")
    batch, scalar = _as_batch(s)
    n = len(batch)
    out = np.zeros((n, n_steps + 1), dtype=np.int64)
    x = np.full(n, int(x0), dtype=np.int64)
    out[:, 0] = x
    idx = np.arange(n)
    for step in range(1, n_steps + 1):
        x = _step(g, batch, x)
        if h is not None:
            x = x + h._sum_draws(batch, idx, np.ones(n, dtype=np.int64))
        out[:, step] = x
    return out[0] if scalar else out


def gw_simulate(g: OffspringLaw, x0: int, n_steps: int, s) -> np.ndarray:
    return gwi_simulate(g, None, x0, n_steps, s)


def vk_recursion(g: OffspringLaw, k: int, gamma_k: float, t: float, lam: float) -> float:
    """``-k log g^{[gamma_k t]}(exp(-lam / k))`` by exact iteration.

    The iterate is carried as ``w = 1 - z`` while ``z > 1/2`` so that the
    neighbourhood of the fixed point 1 keeps full relative precision.
    """
    if lam < 0 or t < 0:
        raise DomainError("t and lambda must be nonnegative")
    if k <= 0 or gamma_k <= 0:
        raise DomainError("k and gamma_k must be positive")
    n = int(math.floor(gamma_k * t + 1e-12))
    if n == 0:
        return float(lam)
    w = -math.expm1(-lam / k)
    for _ in range(n):
        if w < 0.5:
            w = g.pgf_w(w)
        else:
            w = 1.0 - g.pgf(1.0 - w)
        if not (0.0 <= w <= 1.0) or math.isnan(w):
            raise NumericError("pgf iterate left [0, 1]")
    if w >= 1.0:
        return math.inf
    return -k * math.log1p(-w)


def scaling_diagnostics(
    family: Callable[[int], OffspringLaw],
    gamma: Callable[[int], float],
    ks: Iterable[int],
    z_grid: Sequence[float],
    phi: Callable[[float], float] | None = None,
) -> list[dict]:
    """Rows ``(k, z, G_k, phi_k, phi, abs_err)`` with

    ``G_k(z) = k gamma_k [g_k(exp(-z/k)) - exp(-z/k)]`` and
    ``phi_k(z) = k gamma_k [g_k(1 - z/k) - (1 - z/k)]``; ``abs_err`` is
    ``|phi_k - phi|`` when a target is given, else ``|phi_k - G_k|``.
    """
    rows = []
    for k in ks:
        g = family(k)
        gk = gamma(k)
        for z in z_grid:
            if z > k:
                raise DomainError("phi_k needs z <= k")
            w_exp = -math.expm1(-z / k)
            G = k * gk * (w_exp - g.pgf_w(w_exp))
            w_lin = z / k
            P = k * gk * (w_lin - g.pgf_w(w_lin))
            target = phi(z) if phi is not None else math.nan
            err = abs(P - target) if phi is not None else abs(P - G)
            rows.append({"k": k, "z": z, "G_k": G, "phi_k": P, "phi": target, "abs_err": err})
    return rows


def write_scaling_csv(rows: list[dict], path) -> None:
    write_rows(path, SCALING_HEADER, ([int(r["k"])] + [float(r[c]) for c in SCALING_HEADER[1:]] for r in rows))
