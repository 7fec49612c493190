"""Counter-based, splittable random streams and the samplers built on them.

Every draw is a pure function of ``(key, stream_id, counter)``. A stream is
cheap to create, and ``split(s, i)`` depends only on the parent identity and
``i``, so a Monte Carlo batch gives bit-identical results however its paths
are distributed over workers: path ``i`` always reads ``split(root, i)``.

The generator is SplitMix64 with a per-stream odd increment: output ``k`` of
a stream is ``mix64(base + (k + 1) * gamma)``. All samplers are vectorized
over a :class:`StreamBatch`; a :class:`RandomStream` is a batch of one.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "RandomStream",
    "StreamBatch",
    "make_stream",
    "split",
    "sample_uniform",
    "sample_normal",
    "sample_exponential",
    "sample_poisson",
    "sample_gamma",
    "sample_binomial",
    "sample_one_sided_stable",
    "sample_spectrally_positive_stable_increment",
    "stable_increment_scale",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_KEY_SALT = np.uint64(0x6A09E667F3BCC909)
_GAMMA_SALT = np.uint64(0xBB67AE8584CAA73B)
_SPLIT_SALT = np.uint64(0x3C6EF372FE94F82B)
_INV_2_53 = 1.0 / 9007199254740992.0


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.uint64))


def _derive(key: int, stream_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = _mix64(_u64([key & _MASK64]) ^ _KEY_SALT)
    with np.errstate(over="ignore"):
        base = _mix64(k + stream_ids * _GOLDEN)
    gamma = _mix64(base ^ _GAMMA_SALT) | np.uint64(1)
    # SplitMix's guard against weak increments: too few bit transitions
    weak = np.bitwise_count(gamma ^ (gamma >> np.uint64(1))) < 24
    gamma = np.where(weak, gamma ^ np.uint64(0xAAAAAAAAAAAAAAAA), gamma)
    return base, gamma


def _child_ids(stream_id, index) -> np.ndarray:
    s = _u64(stream_id)
    i = _u64(index)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(s ^ _SPLIT_SALT) + (i + np.uint64(1)) * _GOLDEN)


class StreamBatch:
    """A vector of independent streams sharing one key.

    Element ``j`` behaves exactly like the scalar stream with the same
    ``(key, stream_ids[j], counters[j])``.
    """

    def __init__(self, key: int, stream_ids, counters=None):
        self.key = int(key) & _MASK64
        self.stream_ids = np.array(stream_ids, dtype=np.uint64).ravel()
        if counters is None:
            self.counters = np.zeros(self.stream_ids.shape, dtype=np.uint64)
        else:
            self.counters = np.array(counters, dtype=np.uint64).ravel()
        self._base, self._gamma = _derive(self.key, self.stream_ids)

    def __len__(self) -> int:
        return self.stream_ids.size

    def __repr__(self) -> str:
        return f"StreamBatch(key={self.key}, n={len(self)})"

    def take(self, idx) -> "StreamBatch":
        """Copy of the selected streams (counters included)."""
        return StreamBatch(self.key, self.stream_ids[idx], self.counters[idx])

    def children(self, rep, index) -> "StreamBatch":
        """Fresh batch of ``split(stream(rep[k]), index[k])`` for each ``k``."""
        rep = np.asarray(rep, dtype=np.intp)
        return StreamBatch(self.key, _child_ids(self.stream_ids[rep], np.asarray(index, dtype=np.uint64)))

    def stream(self, j: int) -> "RandomStream":
        return RandomStream(self.key, int(self.stream_ids[j]), int(self.counters[j]))

    def _bits(self, idx) -> np.ndarray:
        c = self.counters[idx].copy()
        self.counters[idx] = c + np.uint64(1)
        return _mix64(self._base[idx] + (c + np.uint64(1)) * self._gamma[idx])

    def uniform(self, idx=None) -> np.ndarray:
        """One U(0,1) draw per selected stream (open interval)."""
        if idx is None:
            idx = slice(None)
        x = self._bits(idx)
        return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53

    def uniform_repeat(self, idx: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """``counts[j]`` consecutive draws from stream ``idx[j]``, concatenated."""
        idx = np.asarray(idx, dtype=np.intp)
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        if total == 0:
            return np.empty(0)
        rep = np.repeat(idx, counts)
        starts = np.cumsum(counts) - counts
        offset = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
        c = self.counters[rep] + offset.astype(np.uint64)
        x = _mix64(self._base[rep] + (c + np.uint64(1)) * self._gamma[rep])
        np.add.at(self.counters, idx, counts.astype(np.uint64))
        return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


    def uniform_grouped(self, rep: np.ndarray) -> np.ndarray:
        """One draw per entry of ``rep``; repeated stream indices must be contiguous.

        Repeats get consecutive counters, unlike ``uniform`` which assumes
        distinct indices.
        """
        rep = np.asarray(rep, dtype=np.intp)
        if rep.size == 0:
            return np.empty(0)
        starts = np.flatnonzero(np.r_[True, rep[1:] != rep[:-1]])
        counts = np.diff(np.r_[starts, rep.size])
        return self.uniform_repeat(rep[starts], counts)


class RandomStream:
    """A single deterministic stream; single-owner mutable state."""

    def __init__(self, key: int, stream_id: int = 0, counter: int = 0):
        self._batch = StreamBatch(key, [stream_id], [counter])

    @property
    def key(self) -> int:
        return self._batch.key

    @property
    def stream_id(self) -> int:
        return int(self._batch.stream_ids[0])

    @property
    def counter(self) -> int:
        return int(self._batch.counters[0])

    def __repr__(self) -> str:
        return f"RandomStream(key={self.key}, stream_id={self.stream_id}, counter={self.counter})"

    def spawn(self, n: int) -> StreamBatch:
        """Batch of ``split(self, i)`` for ``i = 0..n-1``."""
        return StreamBatch(self.key, _child_ids(self.stream_id, np.arange(n, dtype=np.uint64)))

    def uniform(self) -> float:
        return float(self._batch.uniform()[0])


def make_stream(seed: int) -> RandomStream:
    return RandomStream(int(seed), 0, 0)


def split(s: RandomStream, i: int) -> RandomStream:
    """Substream ``i`` of ``s``; depends only on ``(s.key, s.stream_id, i)``."""
    child = int(_child_ids([s.stream_id], [i])[0])
    return RandomStream(s.key, child, 0)


# -- helpers shared by the samplers ------------------------------------------


def _as_batch(s) -> tuple[StreamBatch, bool]:
    if isinstance(s, RandomStream):
        return s._batch, True
    if isinstance(s, StreamBatch):
        return s, False
    raise TypeError(f"expected RandomStream or StreamBatch, got {type(s).__name__}")


def _param(value, n: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _finish(out: np.ndarray, scalar: bool, cast=float):
    return cast(out[0]) if scalar else out


def _normal(batch: StreamBatch, idx) -> np.ndarray:
    return special.ndtri(batch.uniform(idx))


def _poisson(batch: StreamBatch, idx: np.ndarray, mean: np.ndarray) -> np.ndarray:
    out = np.zeros(idx.size, dtype=np.int64)
    small = (mean > 0) & (mean < 10.0)
    if small.any():
        out[small] = _poisson_inversion(batch, idx[small], mean[small])
    large = mean >= 10.0
    if large.any():
        out[large] = _poisson_ptrs(batch, idx[large], mean[large])
    return out


def _poisson_inversion(batch, idx, mean):
    u = batch.uniform(idx)
    k = np.zeros(idx.size, dtype=np.int64)
    p = np.exp(-mean)
    cdf = p.copy()
    active = np.nonzero(u > cdf)[0]
    while active.size:
        k[active] += 1
        p[active] *= mean[active] / k[active]
        cdf[active] += p[active]
        # cdf rounding can stall below u in the far tail
        stuck = p[active] < 1e-300
        active = active[(u[active] > cdf[active]) & ~stuck]
    return k


def _poisson_ptrs(batch, idx, mean):
    # Hormann (1993) transformed rejection with squeeze
    slam = np.sqrt(mean)
    loglam = np.log(mean)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    out = np.zeros(idx.size, dtype=np.int64)
    pending = np.arange(idx.size)
    while pending.size:
        j = idx[pending]
        U = batch.uniform(j) - 0.5
        V = batch.uniform(j)
        us = 0.5 - np.abs(U)
        aa, bb = a[pending], b[pending]
        k = np.floor((2.0 * aa / us + bb) * U + mean[pending] + 0.43)
        quick = (us >= 0.07) & (V <= vr[pending])
        bad = (k < 0) | ((us < 0.013) & (V > us))
        with np.errstate(divide="ignore", invalid="ignore"):
            lhs = np.log(V) + np.log(invalpha[pending]) - np.log(aa / (us * us) + bb)
            rhs = -mean[pending] + k * loglam[pending] - special.gammaln(k + 1.0)
        ok = quick | (~bad & (lhs <= rhs))
        out[pending[ok]] = k[ok].astype(np.int64)
        pending = pending[~ok]
    return out


def _gamma(batch: StreamBatch, idx: np.ndarray, shape: np.ndarray) -> np.ndarray:
    """Unit-scale Gamma(shape) per selected stream, shape > 0 (Marsaglia-Tsang)."""
    boost = shape < 1.0
    log_boost = np.zeros(idx.size)
    if boost.any():
        log_boost[boost] = np.log(batch.uniform(idx[boost])) / shape[boost]
    a = np.where(boost, shape + 1.0, shape)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.zeros(idx.size)
    pending = np.arange(idx.size)
    while pending.size:
        j = idx[pending]
        x = _normal(batch, j)
        u = batch.uniform(j)
        v = 1.0 + c[pending] * x
        pos = v > 0
        v3 = np.where(pos, v * v * v, 1.0)
        dd = d[pending]
        ok = pos & (np.log(u) < 0.5 * x * x + dd - dd * v3 + dd * np.log(v3))
        out[pending[ok]] = dd[ok] * v3[ok]
        pending = pending[~ok]
    return out * np.exp(log_boost)


def _binomial(batch: StreamBatch, idx: np.ndarray, n: np.ndarray, p: np.ndarray) -> np.ndarray:
    # Knuth's beta splitting reduces n geometrically, then direct counting
    n = n.astype(np.int64).copy()
    p = p.astype(float).copy()
    out = np.zeros(idx.size, dtype=np.int64)
    big = np.nonzero(n > 32)[0]
    while big.size:
        a = 1 + n[big] // 2
        b = n[big] + 1 - a
        g1 = _gamma(batch, idx[big], a.astype(float))
        g2 = _gamma(batch, idx[big], b.astype(float))
        x = g1 / (g1 + g2)
        low = x >= p[big]
        lo_i, hi_i = big[low], big[~low]
        n[lo_i] = a[low] - 1
        p[lo_i] = p[lo_i] / x[low]
        out[hi_i] += a[~low]
        n[hi_i] = b[~low] - 1
        p[hi_i] = (p[hi_i] - x[~low]) / (1.0 - x[~low])
        np.clip(p, 0.0, 1.0, out=p)
        big = big[n[big] > 32]
    has = np.nonzero(n > 0)[0]
    if has.size:
        u = batch.uniform_repeat(idx[has], n[has])
        hits = (u < np.repeat(p[has], n[has])).astype(np.int64)
        group = np.repeat(np.arange(has.size), n[has])
        out[has] += np.bincount(group, weights=hits, minlength=has.size).astype(np.int64)
    return out


def _stable_unit(batch: StreamBatch, idx, alpha: float) -> np.ndarray:
    """Totally skewed (beta=1) standard stable, alpha != 1 (Chambers-Mallows-Stuck).

    Laplace transform ``E exp(-lam X) = exp(-lam**alpha / cos(pi alpha / 2))``.
    """
    v = math.pi * (batch.uniform(idx) - 0.5)
    w = -np.log(batch.uniform(idx))
    t = math.tan(math.pi * alpha / 2.0)
    shift = math.atan(t) / alpha
    scale = (1.0 + t * t) ** (1.0 / (2.0 * alpha))
    av = alpha * (v + shift)
    return (
        scale
        * np.sin(av)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - av) / w) ** ((1.0 - alpha) / alpha)
    )


# -- public samplers -----------------------------------------------------------


def sample_uniform(s):
    batch, scalar = _as_batch(s)
    return _finish(batch.uniform(), scalar)


def sample_normal(s):
    batch, scalar = _as_batch(s)
    return _finish(_normal(batch, slice(None)), scalar)


def sample_exponential(s, rate=1.0):
    batch, scalar = _as_batch(s)
    rate = _param(rate, len(batch), "rate")
    if np.any(rate <= 0):
        raise DomainError("rate must be positive")
    return _finish(-np.log(batch.uniform()) / rate, scalar)


def sample_poisson(s, mean):
    """Poisson(mean) count per stream; inversion below mean 10, PTRS above."""
    batch, scalar = _as_batch(s)
    mean = _param(mean, len(batch), "mean")
    if np.any(mean < 0):
        raise DomainError("Poisson mean must be nonnegative")
    out = _poisson(batch, np.arange(len(batch)), mean)
    return _finish(out, scalar, int)


def sample_gamma(s, shape, rate):
    """Gamma(shape, rate) variate, mean ``shape / rate``."""
    batch, scalar = _as_batch(s)
    shape = _param(shape, len(batch), "shape")
    rate = _param(rate, len(batch), "rate")
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise DomainError("Gamma shape and rate must be positive")
    out = _gamma(batch, np.arange(len(batch)), shape) / rate
    return _finish(out, scalar)


def sample_binomial(s, n, p):
    batch, scalar = _as_batch(s)
    nn = np.broadcast_to(np.asarray(n, dtype=np.int64), (len(batch),))
    pp = _param(p, len(batch), "p")
    if np.any(nn < 0) or np.any((pp < 0) | (pp > 1)):
        raise DomainError("binomial needs n >= 0 and 0 <= p <= 1")
    out = _binomial(batch, np.arange(len(batch)), nn, pp)
    return _finish(out, scalar, int)


def sample_one_sided_stable(s, alpha: float, c: float):
    """Positive stable variate with ``E exp(-lam X) = exp(-c lam**alpha)``, 0 < alpha < 1."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if not c > 0:
        raise DomainError("c must be positive")
    batch, scalar = _as_batch(s)
    scale = (c * math.cos(math.pi * alpha / 2.0)) ** (1.0 / alpha)
    out = scale * _stable_unit(batch, slice(None), alpha)
    return _finish(np.maximum(out, 0.0), scalar)


def stable_increment_scale(alpha: float, dt: float) -> float:
    """Multiplier turning a unit CMS variate into a z**(-1-alpha) increment over dt."""
    k = math.gamma(2.0 - alpha) / (alpha * (alpha - 1.0))
    return (dt * k * -math.cos(math.pi * alpha / 2.0)) ** (1.0 / alpha)


def sample_spectrally_positive_stable_increment(s, alpha: float, dt: float):
    """Increment over ``dt`` of the compensated stable process with Levy measure
    ``z**(-1-alpha) dz``, 1 < alpha < 2.

    Its Laplace exponent is ``dt * lam**alpha * Gamma(2-alpha) / (alpha (alpha-1))``,
    i.e. ``E exp(-lam X) = exp(dt * K * lam**alpha)``.
    """
    if not 1.0 < alpha < 2.0:
        raise DomainError("alpha must lie in (1, 2)")
    if not dt > 0:
        raise DomainError("dt must be positive")
    batch, scalar = _as_batch(s)
    out = stable_increment_scale(alpha, dt) * _stable_unit(batch, slice(None), alpha)
    return _finish(out, scalar)
