"""Lamperti time changes between CB paths and stopped Levy paths.

Paths are treated as piecewise linear between grid points, which makes both
clocks explicit: ``int x`` is piecewise quadratic and ``int 1/Z`` piecewise
logarithmic, and each is inverted in closed form on its segment.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, NumericError
from .core import PathBatch, SamplePath

__all__ = ["lamperti_forward", "lamperti_inverse", "lamperti_forward_values", "lamperti_inverse_values"]

GUARD = 1e-12


def _is_absorbed(p: SamplePath) -> bool:
    return p.extinct_at is not None or p.values[-1] == 0.0


def _new_grid(end: float, dt_new: float) -> np.ndarray:
    n = int(np.floor(end / dt_new * (1 + 1e-12)))
    t = np.arange(n + 1) * dt_new
    if end - t[-1] > 1e-12 * max(1.0, end):
        t = np.append(t, end)
    return t


def _forward_clock(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(u) * (x[1:] + x[:-1]))])


def _forward_eval(u, x, C, t, absorbed):
    """``x(kappa(t))`` with ``kappa`` the inverse of the piecewise quadratic ``C``."""
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, np.nan)
    end = C[-1]
    inside = t <= end
    i = np.clip(np.searchsorted(C, t[inside], side="right") - 1, 0, u.size - 2)
    tau = t[inside] - C[i]
    h = u[i + 1] - u[i]
    k = (x[i + 1] - x[i]) / h
    # x(u_i + s)^2 = x_i^2 + 2 k tau along the segment
    out[inside] = np.sqrt(np.maximum(x[i] ** 2 + 2.0 * k * tau, 0.0))
    if absorbed:
        out[~inside] = 0.0
    return out


def lamperti_forward(p: SamplePath, dt_new: float | None = None) -> SamplePath:
    """``z(t) = x(kappa(t))`` with ``kappa(t) = inf{u : int_0^u x(s) ds >= t}``.

    The output lives on a uniform grid of the new clock up to ``int x`` over
    the whole path, which is where it saturates when ``x`` is absorbed.
    """
    u, x = p.t_grid, p.values
    if np.any(x < 0):
        raise DomainError("the path must be nonnegative")
    if u.size < 2:
        raise DomainError("need at least two grid points")
    dt_new = dt_new if dt_new is not None else float(u[1] - u[0])
    C = _forward_clock(u, x)
    absorbed = _is_absorbed(p)
    t = _new_grid(C[-1], dt_new)
    z = _forward_eval(u, x, C, t, absorbed)
    if absorbed:
        z[-1] = 0.0
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (z[1:] + z[:-1]))])
    return SamplePath(t, z, cum, float(C[-1]) if absorbed else None)


def _inverse_clock(s: np.ndarray, z: np.ndarray, absorbed: bool) -> tuple[np.ndarray, int]:
    """Cumulative ``int_0 1/Z`` on the grid; returns it and the last usable index."""
    last = z.size - 1
    if absorbed:
        zero = np.flatnonzero(z <= 0)
        last = int(zero[0]) if zero.size else last
    if last == 0:
        return np.zeros(1), 0
    zi, zj = z[:last], z[1 : last + 1]
    h = np.diff(s[: last + 1])
    if np.any(zi < GUARD) or (np.any(zj[:-1] < GUARD) if last > 1 else False):
        raise NumericError("path value below 1e-12 before absorption")
    seg = np.empty(last)
    pos = zj > 0
    r = (zj[pos] - zi[pos]) / zi[pos]
    ratio = np.where(np.abs(r) < 1e-8, 1.0 - r / 2.0, np.log1p(r) / np.where(r == 0, 1.0, r))
    seg[pos] = h[pos] / zi[pos] * ratio
    # the segment into an absorption point follows a square-root profile
    seg[~pos] = 2.0 * h[~pos] / zi[~pos]
    if not absorbed and np.any(~pos):
        raise NumericError("path value below 1e-12 before absorption")
    return np.concatenate([[0.0], np.cumsum(seg)]), last


def _inverse_eval(s, z, A, last, t, absorbed):
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, np.nan)
    if last == 0:
        if absorbed:
            out[:] = 0.0
        return out
    end = A[-1]
    inside = t <= end
    i = np.clip(np.searchsorted(A, t[inside], side="right") - 1, 0, last - 1)
    tau = t[inside] - A[i]
    zi, zj = z[i], z[i + 1]
    h = s[i + 1] - s[i]
    k = (zj - zi) / h
    vals = zi * np.exp(k * tau)
    sq = zj <= 0
    if sq.any():
        vals[sq] = np.maximum(zi[sq] * (1.0 - tau[sq] * zi[sq] / (2.0 * h[sq])), 0.0)
    out[inside] = vals
    if absorbed:
        out[~inside] = 0.0
    return out


def lamperti_inverse(p: SamplePath, dt_new: float | None = None) -> SamplePath:
    """``X_t = Z_{theta(t)}`` with ``theta(t) = inf{u : int_0^u ds / Z_s >= t}``."""
    s, z = p.t_grid, p.values
    if s.size < 2:
        raise DomainError("need at least two grid points")
    if np.any(z < 0):
        raise DomainError("the path must be nonnegative")
    absorbed = _is_absorbed(p)
    A, last = _inverse_clock(s, z, absorbed)
    dt_new = dt_new if dt_new is not None else float(s[1] - s[0])
    t = _new_grid(A[-1], dt_new) if A[-1] > 0 else np.zeros(1)
    X = _inverse_eval(s, z, A, last, t, absorbed)
    if absorbed:
        X[-1] = 0.0
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (X[1:] + X[:-1]))])
    return SamplePath(t, X, cum, float(A[-1]) if absorbed else None)


def lamperti_forward_values(batch: PathBatch, t_out) -> np.ndarray:
    """``z(t)`` at the times ``t_out`` for every path of a batch (nan past the horizon)."""
    t_out = np.atleast_1d(np.asarray(t_out, dtype=float))
    out = np.empty((len(batch), t_out.size))
    u = batch.t_grid
    for i in range(len(batch)):
        x = batch.values[i]
        C = _forward_clock(u, x)
        absorbed = (not np.isnan(batch.extinct_at[i])) or x[-1] == 0.0
        out[i] = _forward_eval(u, x, C, t_out, absorbed)
    return out


def lamperti_inverse_values(batch: PathBatch, t_out) -> np.ndarray:
    t_out = np.atleast_1d(np.asarray(t_out, dtype=float))
    out = np.empty((len(batch), t_out.size))
    s = batch.t_grid
    for i in range(len(batch)):
        z = batch.values[i]
        absorbed = (not np.isnan(batch.extinct_at[i])) or z[-1] == 0.0
        A, last = _inverse_clock(s, z, absorbed)
        out[i] = _inverse_eval(s, z, A, last, t_out, absorbed)
    return out
