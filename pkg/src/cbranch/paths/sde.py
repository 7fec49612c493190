"""Euler schemes for CBI stochastic equations driven by Poisson random measures."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .. import rngkit
from ..errors import DomainError, NumericError
from ..measures import LevyMeasure, StableImmigration
from ..mechanism import BranchingMechanism, ImmigrationMechanism
from .core import (
    PathBatch,
    RateSpec,
    SamplePath,
    Unit,
    as_batch,
    check_nonneg,
    check_positive,
    grouped_uniform,
    save_columns,
    step_grid,
)

__all__ = ["simulate_cbi", "simulate_stable_cbi"]


class _Recorder:
    """Stores saved columns, running integrals and absorption times."""

    def __init__(self, n_paths, n_steps, h, save_times, x0, record_jumps):
        self.cols = save_columns(n_steps, h, save_times, n_paths)
        self.h = h
        self.values = np.empty((n_paths, self.cols.size))
        self.cum = np.empty((n_paths, self.cols.size))
        self.extinct_at = np.full(n_paths, np.nan)
        self.jump_counts = np.zeros(n_paths, dtype=np.int64)
        self.jumps: list[tuple[float, float]] | None = [] if record_jumps else None
        self._next = 0
        self._store(0, np.full(n_paths, float(x0)), np.zeros(n_paths))

    def _store(self, k, y, cum):
        if self._next < self.cols.size and self.cols[self._next] == k:
            self.values[:, self._next] = y
            self.cum[:, self._next] = cum
            self._next += 1

    def after_step(self, k, y, cum):
        self._store(k, y, cum)

    def finish(self, scalar):
        t = self.cols * self.h
        if scalar:
            e = self.extinct_at[0]
            return SamplePath(
                t, self.values[0], self.cum[0], None if np.isnan(e) else float(e), tuple(self.jumps or ())
            )
        return PathBatch(t, self.values, self.cum, self.extinct_at, self.jump_counts)


def _compound(batch, idx, intensity, mu: LevyMeasure, eps, h, t, rec: _Recorder):
    """Jumps of ``mu`` above ``eps`` with Poisson counts of mean ``intensity * h``.

    Returns per-path total size and ``sum size * (1 - U)`` where ``U h`` is the
    jump time within the step (used to correct the running integral).
    """
    mean = intensity * h
    if not np.all(np.isfinite(mean)):
        raise NumericError("jump intensity overflow")
    counts = rngkit._poisson(batch, idx, mean)
    total = np.zeros(idx.size)
    late = np.zeros(idx.size)
    if counts.any():
        has = np.flatnonzero(counts)
        u, owner = grouped_uniform(batch, idx[has], counts[has])
        sizes = mu.sample_above(eps, u)
        when, _ = grouped_uniform(batch, idx[has], counts[has])
        total[has] = np.bincount(owner, weights=sizes, minlength=has.size)
        late[has] = np.bincount(owner, weights=sizes * (1.0 - when), minlength=has.size)
        rec.jump_counts[idx[has]] += counts[has]
        if rec.jumps is not None:
            rec.jumps.extend(zip((t + when * h).tolist(), sizes.tolist()))
    return total, late


def _run(batch, scalar, x0, T, dt, save_times, absorbing, step_fn):
    check_nonneg("x0", x0)
    n_steps, h = step_grid(T, dt)
    n = len(batch)
    rec = _Recorder(n, n_steps, h, save_times, x0, scalar)
    y = np.full(n, float(x0))
    cum = np.zeros(n)
    dead = np.zeros(n, dtype=bool)
    if absorbing and x0 == 0:
        dead[:] = True
        rec.extinct_at[:] = 0.0
    for k in range(n_steps):
        t = k * h
        idx = np.flatnonzero(~dead)
        if idx.size:
            ya = y[idx]
            incr, jumps, late = step_fn(idx, ya, t, h, rec)
            yn = ya + incr
            hit = yn <= 0
            yn = np.where(hit, 0.0, yn)
            cont = np.maximum(ya + yn - jumps, 0.0)
            cum[idx] += 0.5 * h * cont + h * late
            y[idx] = yn
            if absorbing and hit.any():
                gone = idx[hit]
                dead[gone] = True
                rec.extinct_at[gone] = (k + 1) * h
        rec.after_step(k + 1, y, cum)
    return rec.finish(scalar)


def _immigration_parts(psi: ImmigrationMechanism, eps: float):
    """(jump mass, small-jump mean flow per unit rate) for the immigration measure."""
    n = psi.n
    if isinstance(n, StableImmigration):
        return n.mass_above(eps), n.moment_below(eps, 1), eps
    return n.mass_above(0.0), 0.0, 0.0


def simulate_cbi(
    phi: BranchingMechanism,
    psi: Optional[ImmigrationMechanism],
    rate: Optional[RateSpec],
    x0: float,
    T: float,
    dt: float,
    eps_jump: float,
    s,
    save_times=None,
    small_jump_gaussian: bool = True,
):
    """Euler scheme for the jump SDE of a CBI process.

    Per step of length ``h`` from the left-end state ``y``:
    diffusion ``sqrt((2c + s2) y h) N`` where ``s2 = int_{z <= eps} z^2 m(dz)``
    is the variance of the compensated small jumps (dropped if
    ``small_jump_gaussian`` is false), ``Poisson(y m(eps, inf) h)`` branching
    jumps with their compensator ``-y h int_{z > eps} z m(dz)``, drift
    ``(beta r1 - b y) h`` and immigration jumps at intensity ``r2 n(0, inf)``
    (``n`` truncated at ``eps`` with its small-jump mean added to the drift
    when the mass is infinite). Values below 0 are clamped; with no
    immigration 0 is absorbing.

    A :class:`RandomStream` gives a :class:`SamplePath`, a :class:`StreamBatch`
    a :class:`PathBatch`.
    """
    check_positive("eps_jump", eps_jump)
    psi = psi if psi is not None else ImmigrationMechanism()
    rate = rate if rate is not None else Unit()
    batch, scalar = as_batch(s)
    m = phi.m
    eps = eps_jump
    big_mass = m.mass_above(eps)
    big_mean = m.moment_above(eps, 1) if big_mass > 0 else 0.0
    small_var = m.moment_below(eps, 2) if small_jump_gaussian else 0.0
    if not (math.isfinite(big_mass) and math.isfinite(big_mean) and math.isfinite(small_var)):
        raise DomainError("branching measure truncation is not finite at this eps")
    diff = 2.0 * phi.c + small_var
    n_mass, n_small, n_eps = _immigration_parts(psi, eps)
    b, beta = phi.b, psi.beta

    def step(idx, ya, t, h, rec):
        r1 = rate.drift(t, ya)
        r2 = rate.jumps(t, ya)
        incr = (beta * r1 + n_small * r2 - b * ya - big_mean * ya) * h
        if diff > 0:
            incr = incr + np.sqrt(diff * ya * h) * rngkit._normal(batch, idx)
        jumps = np.zeros(idx.size)
        late = np.zeros(idx.size)
        if big_mass > 0:
            tot, lt = _compound(batch, idx, ya * big_mass, m, eps, h, t, rec)
            jumps += tot
            late += lt
        if n_mass > 0:
            tot, lt = _compound(batch, idx, r2 * n_mass, psi.n, n_eps, h, t, rec)
            jumps += tot
            late += lt
        return incr + jumps, jumps, late

    return _run(batch, scalar, x0, T, dt, save_times, psi.is_zero, step)


def simulate_stable_cbi(
    c: float,
    sigma: float,
    alpha: float,
    b: float,
    psi: Optional[ImmigrationMechanism],
    x0: float,
    T: float,
    dt: float,
    s,
    save_times=None,
):
    """Euler scheme with exact stable noise for ``phi = b z + c z^2 + sigma``-stable part.

    ``dy = sqrt(2 c y) dB + (sigma y)^(1/alpha) dZ0 - b y dt + dZ1`` where
    ``Z0`` is the compensated stable process with Levy measure
    ``z^(-1-alpha) dz`` and ``Z1`` the subordinator of ``psi``. Increments of
    ``Z0`` and ``Z1`` are drawn exactly; a stable immigration measure uses
    exact one-sided stable increments. Draw order per step is Gaussian,
    immigration, stable, so ``sigma = 0`` reproduces the Feller scheme of
    :func:`simulate_cbi` on the same stream.
    """
    check_nonneg("c", c)
    check_nonneg("sigma", sigma)
    if not 1.0 < alpha < 2.0:
        raise DomainError("alpha must lie in (1, 2)")
    psi = psi if psi is not None else ImmigrationMechanism()
    batch, scalar = as_batch(s)
    n = psi.n
    stable_imm = isinstance(n, StableImmigration)
    n_mass = 0.0 if stable_imm else n.mass_above(0.0)
    beta = psi.beta

    def step(idx, ya, t, h, rec):
        incr = (beta - b * ya) * h
        if c > 0:
            incr = incr + np.sqrt(2.0 * c * ya * h) * rngkit._normal(batch, idx)
        jumps = np.zeros(idx.size)
        late = np.zeros(idx.size)
        if stable_imm:
            scale = (h * n.coefficient * math.cos(math.pi * n.alpha / 2.0)) ** (1.0 / n.alpha)
            jumps += np.maximum(scale * rngkit._stable_unit(batch, idx, n.alpha), 0.0)
            late += 0.5 * jumps
        elif n_mass > 0:
            tot, lt = _compound(batch, idx, np.full(idx.size, n_mass), n, 0.0, h, t, rec)
            jumps += tot
            late += lt
        if sigma > 0:
            z0 = rngkit.stable_increment_scale(alpha, h) * rngkit._stable_unit(batch, idx, alpha)
            incr = incr + (sigma * ya) ** (1.0 / alpha) * z0
        return incr + jumps, jumps, late

    return _run(batch, scalar, x0, T, dt, save_times, psi.is_zero, step)
