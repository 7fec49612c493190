"""Path containers, immigration rate models and shared step kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .. import rngkit
from ..errors import DomainError, NumericError
from ..rngkit import RandomStream, StreamBatch
from ..tables import write_rows

PATH_HEADER = ("t", "value", "cum_integral", "extinct")
MAX_STORED = 50_000_000


@dataclass(frozen=True)
class SamplePath:
    """One cadlag path sampled on ``t_grid`` (values are post-jump)."""

    t_grid: np.ndarray
    values: np.ndarray
    cum_integral: np.ndarray
    extinct_at: Optional[float] = None
    jumps: tuple = ()

    def __post_init__(self):
        for name in ("t_grid", "values", "cum_integral"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.t_grid.shape == self.values.shape == self.cum_integral.shape):
            raise DomainError("t_grid, values and cum_integral must have equal length")

    def value_at(self, t: float) -> float:
        """Value at ``t`` under linear interpolation between grid points."""
        return float(np.interp(t, self.t_grid, self.values))

    def extinct_flags(self) -> np.ndarray:
        if self.extinct_at is None:
            return np.zeros(self.t_grid.size, dtype=bool)
        return self.t_grid >= self.extinct_at

    def to_csv(self, path) -> None:
        write_path_csv(self, path)


@dataclass(frozen=True)
class PathBatch:
    """Many paths on a common grid; row ``i`` was driven by stream ``i``."""

    t_grid: np.ndarray
    values: np.ndarray  # (N, len(t_grid))
    cum_integral: np.ndarray  # (N, len(t_grid))
    extinct_at: np.ndarray  # (N,), nan when not absorbed
    jump_counts: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.t_grid - t)))
        if abs(self.t_grid[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not on the saved grid")
        return j

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.column(t)]

    def cum_at(self, t: float) -> np.ndarray:
        return self.cum_integral[:, self.column(t)]

    def path(self, i: int) -> SamplePath:
        e = self.extinct_at[i]
        return SamplePath(self.t_grid, self.values[i], self.cum_integral[i], None if np.isnan(e) else float(e))

    @staticmethod
    def concat(parts: Sequence["PathBatch"]) -> "PathBatch":
        jc = None
        if all(p.jump_counts is not None for p in parts):
            jc = np.concatenate([p.jump_counts for p in parts])
        return PathBatch(
            parts[0].t_grid,
            np.concatenate([p.values for p in parts]),
            np.concatenate([p.cum_integral for p in parts]),
            np.concatenate([p.extinct_at for p in parts]),
            jc,
        )


def write_path_csv(p: SamplePath, path) -> None:
    flags = p.extinct_flags()
    rows = ((float(t), float(v), float(ci), int(e)) for t, v, ci, e in zip(p.t_grid, p.values, p.cum_integral, flags))
    write_rows(path, PATH_HEADER, rows)


# -- immigration rates ---------------------------------------------------------


def _vectorize(fn: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def call(x):
        x = np.asarray(x, dtype=float)
        try:
            out = np.asarray(fn(x), dtype=float)
            if out.shape == x.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.array([float(fn(float(v))) for v in x.ravel()]).reshape(x.shape)

    return call


_SPOT_GRID = np.linspace(0.0, 10.0, 101)


def _spot_check(q, bound: float, name: str) -> None:
    vals = _vectorize(q)(_SPOT_GRID)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise DomainError(f"{name} must be finite and nonnegative")
    slopes = np.abs(np.diff(vals)) / np.diff(_SPOT_GRID)
    if np.any(slopes > bound * (1 + 1e-9) + 1e-12):
        raise DomainError(f"{name} violates its Lipschitz bound {bound}")


class RateSpec:
    """Immigration intensities: ``drift(t, y)`` scales ``beta``, ``jumps(t, y)`` scales ``n``."""

    def drift(self, t: float, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jumps(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.drift(t, y)


@dataclass(frozen=True)
class Unit(RateSpec):
    def drift(self, t, y):
        return np.ones_like(y)


@dataclass(frozen=True)
class TimeFn(RateSpec):
    rho: Callable[[float], float]

    def drift(self, t, y):
        r = float(self.rho(t))
        if not (r >= 0 and math.isfinite(r)):
            raise DomainError("rho must be finite and nonnegative")
        return np.full_like(y, r)


@dataclass(frozen=True)
class StateFn(RateSpec):
    """Interactive rate ``q(Y_{s-})``, evaluated at the left end of each step."""

    q: Callable[[float], float]
    lipschitz_bound: float

    def __post_init__(self):
        if not self.lipschitz_bound > 0:
            raise DomainError("lipschitz_bound must be positive")
        _spot_check(self.q, self.lipschitz_bound, "q")
        object.__setattr__(self, "_qv", _vectorize(self.q))

    def drift(self, t, y):
        return self._qv(y)


@dataclass(frozen=True)
class TwoStateFns(RateSpec):
    """``q1`` scales the drift ``beta``, ``q2`` the immigration jump intensity."""

    q1: Callable[[float], float]
    q2: Callable[[float], float]
    lipschitz_bound: float

    def __post_init__(self):
        if not self.lipschitz_bound > 0:
            raise DomainError("lipschitz_bound must be positive")
        _spot_check(self.q1, self.lipschitz_bound, "q1")
        _spot_check(self.q2, self.lipschitz_bound, "q2")
        object.__setattr__(self, "_q1v", _vectorize(self.q1))
        object.__setattr__(self, "_q2v", _vectorize(self.q2))

    def drift(self, t, y):
        return self._q1v(y)

    def jumps(self, t, y):
        return self._q2v(y)


# -- helpers -------------------------------------------------------------------


def as_batch(s) -> tuple[StreamBatch, bool]:
    if isinstance(s, RandomStream):
        return s._batch, True
    if isinstance(s, StreamBatch):
        return s, False
    raise TypeError("expected RandomStream or StreamBatch")


def step_grid(T: float, dt: float) -> tuple[int, float]:
    """Number of steps and the adjusted step so that ``n * dt == T``."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    if not T > 0:
        raise DomainError("T must be positive")
    n = max(1, int(round(T / dt)))
    return n, T / n


def save_columns(n_steps: int, dt: float, save_times, n_paths: int) -> np.ndarray:
    """Step indices at which the state is stored."""
    if save_times is None:
        cols = np.arange(n_steps + 1)
    else:
        st = np.atleast_1d(np.asarray(save_times, dtype=float))
        cols = np.rint(st / dt).astype(np.int64)
        if np.any(np.abs(cols * dt - st) > 1e-9 * np.maximum(1.0, st)) or np.any(cols < 0) or np.any(cols > n_steps):
            raise DomainError("save_times must be multiples of dt inside [0, T]")
        cols = np.unique(cols)
    if cols.size * n_paths > MAX_STORED:
        raise DomainError("too many stored values; pass save_times")
    return cols


def grouped_uniform(batch: StreamBatch, idx: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``counts[i]`` uniforms from stream ``idx[i]`` and the owner row of each."""
    u = batch.uniform_repeat(idx, counts)
    owner = np.repeat(np.arange(idx.size), counts)
    return u, owner


def feller_step(batch: StreamBatch, idx: np.ndarray, y: np.ndarray, dt, c: float, b: float, beta: float) -> np.ndarray:
    """Exact transition of ``dy = sqrt(2 c y) dB + (beta - b y) dt`` over ``dt``.

    Given ``y``, the next value is ``Gamma(N + beta / c)`` with scale ``c q``
    where ``N ~ Poisson(y exp(-b dt) / (c q))`` and ``q = (1 - exp(-b dt)) / b``.
    ``dt`` may be a scalar or one value per selected stream.
    """
    dt = np.broadcast_to(np.asarray(dt, dtype=float), y.shape)
    q = np.where(np.abs(b) < 1e-12, dt, -np.expm1(-b * dt) / (b if b != 0 else 1.0))
    scale = c * q
    mean = y * np.exp(-b * dt) / scale
    if not np.all(np.isfinite(mean)):
        raise NumericError("Poisson intensity overflow")
    n = rngkit._poisson(batch, idx, mean)
    shape = n + beta / c
    out = np.zeros(y.shape)
    live = shape > 0
    if live.any():
        out[live] = rngkit._gamma(batch, idx[live], shape[live]) * scale[live]
    return out


def check_positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive and finite")


def check_nonneg(name: str, value: float) -> None:
    if not (value >= 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be nonnegative and finite")
