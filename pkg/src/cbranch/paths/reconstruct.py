"""Poissonian reconstructions of Feller CB and CBI paths from excursions.

Excursions of Feller's diffusion that are still alive at age ``t0`` form a
Poisson family of total mass ``vbar_{t0} = exp(-b t0) / (c q)`` with
``q = (1 - exp(-b t0)) / b``, and an excursion's value at that age is
exponential with mean ``c q``. Each such excursion then evolves as an
independent Feller CB, simulated exactly on the output grid.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .. import rngkit
from ..cumulant import q_b_alpha
from ..errors import DomainError
from ..measures import StableImmigration
from ..mechanism import ImmigrationMechanism
from .core import PathBatch, SamplePath, as_batch, check_nonneg, check_positive, feller_step, grouped_uniform

__all__ = ["excursion_reconstruct_feller", "immigration_reconstruct_feller", "feller_entrance"]

_ARRIVAL_OFFSET = 1 << 32


def feller_entrance(c: float, b: float, t0: float) -> tuple[float, float]:
    """``(vbar_{t0}, c q)``: mass of excursions alive at age ``t0`` and their mean value."""
    q = q_b_alpha(b, 1.0, t0)
    return math.exp(-b * t0) / (c * q), c * q


def _evolve_units(units: rngkit.StreamBatch, owner, start_t, start_v, grid, c, b, n_paths):
    """Sum over units of their Feller CB values at each grid time.

    Unit ``i`` is born at ``start_t[i]`` with value ``start_v[i]`` and has its
    own stream; units that reach 0 are dropped.
    """
    out = np.zeros((n_paths, grid.size))
    if owner.size == 0:
        return out
    value = np.zeros(owner.size)
    clock = np.asarray(start_t, dtype=float).copy()
    started = np.zeros(owner.size, dtype=bool)
    active = np.zeros(0, dtype=np.intp)
    for j, t in enumerate(grid):
        born = np.flatnonzero(~started & (start_t <= t))
        if born.size:
            started[born] = True
            value[born] = start_v[born]
            active = np.concatenate([active, born])
            active.sort(kind="stable")
        if active.size:
            h = t - clock[active]
            move = h > 0
            if move.any():
                sel = active[move]
                value[sel] = feller_step(units, sel, value[sel], h[move], c, b, 0.0)
            clock[active] = t
            out[:, j] = np.bincount(owner[active], weights=value[active], minlength=n_paths)
            active = active[value[active] > 0]
    return out


def _default_grid(start: float, T: float, t_grid) -> np.ndarray:
    if t_grid is None:
        return np.linspace(start, T, 21)
    g = np.asarray(t_grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0) or g[0] < start or g[-1] > T * (1 + 1e-12):
        raise DomainError(f"t_grid must increase inside [{start}, {T}]")
    return g


def _finish(grid, values, scalar, extinct=None, counts=None, jumps=()):
    steps = np.diff(grid)
    cum = np.zeros_like(values)
    cum[:, 1:] = np.cumsum(0.5 * steps * (values[:, 1:] + values[:, :-1]), axis=1)
    n = values.shape[0]
    if extinct is None:
        extinct = np.full(n, np.nan)
    if scalar:
        e = extinct[0]
        return SamplePath(grid, values[0], cum[0], None if np.isnan(e) else float(e), tuple(jumps))
    return PathBatch(grid, values, cum, extinct, counts)


def excursion_reconstruct_feller(c: float, b: float, x: float, t0: float, T: float, s, t_grid=None):
    """Feller CB from ``x`` rebuilt on ``[t0, T]`` as a sum of excursions.

    ``K ~ Poisson(x vbar_{t0})`` excursions are alive at ``t0``, each with an
    independent exponential value of mean ``c q(t0)``, and each continues as
    an independent Feller CB. Excursion ``j`` of path ``i`` reads
    ``split(stream_i, j)``.
    """
    check_positive("c", c)
    check_nonneg("x", x)
    check_positive("t0", t0)
    if not T >= t0:
        raise DomainError("T must be at least t0")
    grid = _default_grid(t0, T, t_grid)
    if grid[0] != t0:
        grid = np.concatenate([[t0], grid])
    batch, scalar = as_batch(s)
    n = len(batch)
    vbar, mean_val = feller_entrance(c, b, t0)
    counts = rngkit._poisson(batch, np.arange(n), np.full(n, x * vbar))
    owner = np.repeat(np.arange(n), counts)
    index = np.concatenate([np.arange(k) for k in counts]) if owner.size else np.zeros(0, dtype=np.int64)
    units = batch.children(owner, index)
    start_v = -mean_val * np.log(units.uniform()) if owner.size else np.zeros(0)
    values = _evolve_units(units, owner, np.full(owner.size, t0), start_v, grid, c, b, n)
    extinct = np.full(n, np.nan)
    for i in np.flatnonzero(values[:, -1] == 0):
        # first grid time after which the path stays at 0
        nz = np.flatnonzero(values[i] > 0)
        extinct[i] = grid[nz[-1] + 1] if nz.size else t0
    return _finish(grid, values, scalar, extinct, counts)


def immigration_reconstruct_feller(
    c: float,
    b: float,
    psi: Optional[ImmigrationMechanism],
    T: float,
    t0: float,
    s,
    t_grid=None,
    eps_jump: float = 1e-3,
):
    """CBI path from 0 built from immigrant excursions and immigrant jumps.

    * ``beta`` stream: immigrant excursions alive at age ``t0`` arrive at rate
      ``beta vbar_{t0}`` with exponential values at that age; the total of the
      younger ones at time ``t`` is drawn from its exact law
      ``Gamma(beta / c, scale c q(min(t, t0)))``.
    * ``n`` stream: arrivals at rate ``n(0, inf)``, each starting a Feller CB
      from its ``n``-distributed size. A stable ``n`` is truncated at
      ``eps_jump`` and its small-jump mean is folded into ``beta``.

    Marginals at each grid time are exact; the young part is sampled afresh
    at each grid time, so joint laws across times are approximate below ``t0``.
    """
    check_positive("c", c)
    check_positive("t0", t0)
    check_positive("T", T)
    psi = psi if psi is not None else ImmigrationMechanism()
    grid = _default_grid(0.0, T, t_grid)
    batch, scalar = as_batch(s)
    n = len(batch)
    rows = np.arange(n)
    nmeas = psi.n
    if isinstance(nmeas, StableImmigration):
        beta = psi.beta + nmeas.moment_below(eps_jump, 1)
        n_mass, n_eps = nmeas.mass_above(eps_jump), eps_jump
    else:
        beta = psi.beta
        n_mass, n_eps = nmeas.mass_above(0.0), 0.0
    vbar, mean_val = feller_entrance(c, b, t0)
    span = max(T - t0, 0.0)

    k_exc = rngkit._poisson(batch, rows, np.full(n, beta * vbar * span))
    k_arr = rngkit._poisson(batch, rows, np.full(n, n_mass * T))
    # excursion birth times and arrival times/sizes from the path streams
    u_exc, _ = grouped_uniform(batch, rows, k_exc)
    u_arr, _ = grouped_uniform(batch, rows, k_arr)
    u_size, _ = grouped_uniform(batch, rows, k_arr)

    own_exc = np.repeat(rows, k_exc)
    own_arr = np.repeat(rows, k_arr)
    idx_exc = np.concatenate([np.arange(k) for k in k_exc]) if own_exc.size else np.zeros(0, dtype=np.int64)
    idx_arr = _ARRIVAL_OFFSET + (np.concatenate([np.arange(k) for k in k_arr]) if own_arr.size else np.zeros(0, dtype=np.int64))
    owner = np.concatenate([own_exc, own_arr])
    order = np.argsort(owner, kind="stable")
    owner = owner[order]
    index = np.concatenate([idx_exc, idx_arr])[order]
    start_t = np.concatenate([t0 + u_exc * span, u_arr * T])[order]
    units = batch.children(owner, index)
    n_exc = own_exc.size
    is_exc = (order < n_exc)
    start_v = np.empty(owner.size)
    if owner.size:
        e = units.uniform()
        start_v[:] = -mean_val * np.log(e)
    arr_sizes = nmeas.sample_above(n_eps, u_size) if own_arr.size else np.zeros(0)
    start_v[~is_exc] = arr_sizes[order[~is_exc] - n_exc]

    values = _evolve_units(units, owner, start_t, start_v, grid, c, b, n)
    if beta > 0:
        for j, t in enumerate(grid):
            if t > 0:
                scale = c * q_b_alpha(b, 1.0, min(t, t0))
                values[:, j] += rngkit._gamma(batch, rows, np.full(n, beta / c)) * scale
    jumps = ()
    if scalar and own_arr.size:
        jumps = tuple(sorted(zip((u_arr * T).tolist(), np.asarray(arr_sizes).tolist())))
    return _finish(grid, values, scalar, None, k_arr, jumps)
