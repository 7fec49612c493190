"""Adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense output."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericError

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass
class OdeSolution:
    t: np.ndarray  # (n,)
    y: np.ndarray  # (n, d)
    f: np.ndarray  # (n, d) derivatives at the nodes

    def __call__(self, s):
        """Cubic Hermite interpolation; ``s`` scalar or array inside ``[t0, t_end]``."""
        s = np.asarray(s, dtype=float)
        j = np.clip(np.searchsorted(self.t, s, side="right") - 1, 0, max(self.t.size - 2, 0))
        if self.t.size == 1:
            return np.broadcast_to(self.y[0], s.shape + self.y.shape[1:]).copy()
        t0, t1 = self.t[j], self.t[j + 1]
        h = t1 - t0
        th = ((s - t0) / h)[..., None]
        y0, y1 = self.y[j], self.y[j + 1]
        f0, f1 = self.f[j], self.f[j + 1]
        hh = h[..., None]
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        return h00 * y0 + h10 * hh * f0 + h01 * y1 + h11 * hh * f1


def dopri5(
    fun: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t_end: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_steps: int = 200_000,
) -> OdeSolution:
    """Integrate ``y' = fun(t, y)`` on ``[0, t_end]``.

    The local error estimate is scaled by ``atol + rtol * |y|`` componentwise
    and steps are accepted when its RMS norm is at most 1.
    """
    y = np.array(y0, dtype=float).ravel()
    t = 0.0
    f = np.asarray(fun(t, y), dtype=float)
    ts, ys, fs = [t], [y.copy()], [f.copy()]
    if t_end <= 0:
        return OdeSolution(np.array(ts), np.array(ys), np.array(fs))

    scale = atol + rtol * np.abs(y)
    d0 = math.sqrt(np.mean((y / scale) ** 2))
    d1 = math.sqrt(np.mean((f / scale) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, t_end)

    k = np.empty((7, y.size))
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            raise NumericError("too many steps", last_time=t)
        # a short final interval is fine; only a shrinking step is an underflow
        if h < 1e-14 * max(1.0, abs(t)) and h < t_end - t:
            raise NumericError("step size underflow", last_time=t)
        last = t + h >= t_end
        if last:
            h = t_end - t
        k[0] = f
        for i in range(1, 7):
            yi = y + h * (np.asarray(_A[i]) @ k[:i])
            k[i] = fun(t + _C[i] * h, yi)
        y_new = y + h * (_B5 @ k)
        err_vec = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(np.mean((err_vec / scale) ** 2))
        steps += 1
        if not np.all(np.isfinite(y_new)) or not math.isfinite(err):
            h *= MIN_FACTOR
            continue
        if err <= 1.0:
            t = t_end if last else t + h
            y = y_new
            f = k[6].copy()  # FSAL
            ts.append(t)
            ys.append(y.copy())
            fs.append(f)
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            h *= factor
        else:
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
    return OdeSolution(np.array(ts), np.array(ys), np.array(fs))
