"""Spectrally positive Levy paths with Laplace exponent phi, stopped at 0."""

from __future__ import annotations

import math

import numpy as np

from .. import rngkit
from ..measures import Atoms, ExponentialJump, NullMeasure, StableBranching
from ..mechanism import BranchingMechanism
from .core import PathBatch, SamplePath, as_batch, check_nonneg, check_positive, grouped_uniform, save_columns, step_grid

__all__ = ["simulate_levy"]


def _jump_increment(batch, idx, m, h):
    """Compensated jump part over ``h`` (exact in law) and its raw jump total."""
    n = idx.size
    if isinstance(m, NullMeasure):
        return np.zeros(n), np.zeros(n)
    if isinstance(m, StableBranching):
        x = m.sigma ** (1.0 / m.alpha) * rngkit.stable_increment_scale(m.alpha, h) * rngkit._stable_unit(batch, idx, m.alpha)
        return x, np.zeros(n)
    if isinstance(m, (Atoms, ExponentialJump)):
        mass = m.mass_above(0.0)
        counts = rngkit._poisson(batch, idx, np.full(n, mass * h))
        total = np.zeros(n)
        has = np.flatnonzero(counts)
        if has.size:
            u, owner = grouped_uniform(batch, idx[has], counts[has])
            total[has] = np.bincount(owner, weights=m.sample_above(0.0, u), minlength=has.size)
        return total - h * m.moment_above(0.0, 1), total
    raise TypeError(f"unsupported measure {type(m).__name__}")


def simulate_levy(phi: BranchingMechanism, x0: float, T: float, dt: float, eps_jump: float, s, save_times=None):
    """``Y_t = x0 + sqrt(2c) W_t - b t + (compensated jumps of m)``, stopped at 0.

    ``E exp(-lam (Y_t - x0)) = exp(t phi(lam))`` before stopping. Increments
    are exact for every supported measure, so ``eps_jump`` only needs to be
    positive. With a Gaussian part, a crossing of 0 between grid points is
    detected with the Brownian-bridge probability ``exp(-a b / (c h))``; the
    path is then stopped at the end of that step.
    """
    check_positive("eps_jump", eps_jump)
    check_nonneg("x0", x0)
    batch, scalar = as_batch(s)
    n_steps, h = step_grid(T, dt)
    n = len(batch)
    cols = save_columns(n_steps, h, save_times, n)
    values = np.empty((n, cols.size))
    cum_out = np.empty((n, cols.size))
    y = np.full(n, float(x0))
    cum = np.zeros(n)
    dead = y <= 0
    extinct = np.where(dead, 0.0, np.nan)
    c, b = phi.c, phi.b
    nxt = 0
    if cols[0] == 0:
        values[:, 0], cum_out[:, 0] = y, cum
        nxt = 1
    for k in range(n_steps):
        idx = np.flatnonzero(~dead)
        if idx.size:
            ya = y[idx]
            incr = -b * h * np.ones(idx.size)
            if c > 0:
                incr += math.sqrt(2.0 * c * h) * rngkit._normal(batch, idx)
            jump, raw = _jump_increment(batch, idx, phi.m, h)
            yn = ya + incr + jump
            hit = yn <= 0
            if c > 0:
                u = batch.uniform(idx)
                pre = ya + incr + jump - raw  # continuous part ends here before the jumps
                both = (~hit) & (pre > 0)
                cross = np.exp(-ya * pre / (c * h))
                hit |= both & (u < cross)
            yn = np.where(hit, 0.0, yn)
            cum[idx] += 0.5 * h * (ya + yn)
            y[idx] = yn
            gone = idx[hit]
            dead[gone] = True
            extinct[gone] = (k + 1) * h
        if nxt < cols.size and cols[nxt] == k + 1:
            values[:, nxt], cum_out[:, nxt] = y, cum
            nxt += 1
    t = cols * h
    if scalar:
        e = extinct[0]
        return SamplePath(t, values[0], cum_out[0], None if np.isnan(e) else float(e))
    return PathBatch(t, values, cum_out, extinct)
