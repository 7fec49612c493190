"""Monte Carlo checks of simulated paths against analytic Laplace transforms."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import cumulant, rngkit
from .errors import DomainError
from .estimate import MCEstimate
from .mechanism import BranchingMechanism, ImmigrationMechanism
from .measures import LevyMeasure
from .tables import fmt_num, write_rows
from .paths import (
    PathBatch,
    SamplePath,
    excursion_reconstruct_feller,
    immigration_reconstruct_feller,
    simulate_cbi,
    simulate_feller_exact,
)

__all__ = [
    "MCEstimate",
    "CheckReport",
    "REPORT_HEADER",
    "mc_compare",
    "compare_estimates",
    "martingale_check",
    "TestFunction",
    "exp_test_function",
    "generator_apply",
    "extinction_estimate",
    "branching_property_check",
    "write_report_csv",
    "SuiteConfig",
    "SuiteResult",
    "verify_suite",
    "MIN_SAMPLES",
    "MIN_SUITE_PATHS",
]

MIN_SAMPLES = 100
MIN_SUITE_PATHS = 1000
REPORT_HEADER = ["name", "analytic", "estimate", "stderr", "z", "pass", "seed", "n", "dt"]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one comparison; ``passed`` iff ``|mean - analytic| <= z_threshold * stderr + bias``."""

    name: str
    analytic: float
    estimate: MCEstimate
    z: float
    z_threshold: float
    bias_allowance: float
    passed: bool
    seed: Optional[int] = None
    dt: Optional[float] = None

    @property
    def tolerance(self) -> float:
        return self.z_threshold * self.estimate.stderr + self.bias_allowance

    def row(self) -> list[str]:
        return [
            self.name,
            _fmt(self.analytic),
            _fmt(self.estimate.mean),
            _fmt(self.estimate.stderr),
            _fmt(self.z),
            "true" if self.passed else "false",
            "" if self.seed is None else str(int(self.seed)),
            str(int(self.estimate.n)),
            "" if self.dt is None else _fmt(self.dt),
        ]


def _fmt(x: float) -> str:
    return fmt_num(float(x))


def _report(name, analytic, est: MCEstimate, z_threshold, bias_allowance, seed=None, dt=None) -> CheckReport:
    if z_threshold <= 0 or bias_allowance < 0:
        raise DomainError("z_threshold must be positive and bias_allowance nonnegative")
    diff = est.mean - analytic
    z = diff / max(est.stderr, 1e-15)
    passed = abs(diff) <= z_threshold * est.stderr + bias_allowance
    return CheckReport(name, float(analytic), est, float(z), float(z_threshold), float(bias_allowance), bool(passed), seed, dt)


def mc_compare(
    name: str,
    analytic: float,
    samples,
    z_threshold: float = 4.0,
    bias_allowance: float = 0.0,
    seed: Optional[int] = None,
    dt: Optional[float] = None,
) -> CheckReport:
    """Compare the sample mean of already-transformed samples with an analytic value."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    return _report(name, analytic, MCEstimate.from_samples(x), z_threshold, bias_allowance, seed, dt)


def compare_estimates(
    name: str,
    reference: MCEstimate,
    estimate: MCEstimate,
    z_threshold: float = 4.0,
    bias_allowance: float = 0.0,
    seed: Optional[int] = None,
    dt: Optional[float] = None,
) -> CheckReport:
    """Two-sample comparison; the report's ``stderr`` is the combined one.

    ``analytic`` holds the reference mean, ``n`` the estimate's sample size.
    """
    combined = MCEstimate(estimate.mean, math.hypot(reference.stderr, estimate.stderr), estimate.n)
    return _report(name, reference.mean, combined, z_threshold, bias_allowance, seed, dt)


def _as_batch(paths) -> PathBatch:
    if isinstance(paths, PathBatch):
        return paths
    if isinstance(paths, SamplePath):
        paths = [paths]
    paths = list(paths)
    if not paths:
        raise DomainError("no paths given")
    grid = paths[0].t_grid
    for p in paths[1:]:
        if p.t_grid.shape != grid.shape or np.any(p.t_grid != grid):
            raise DomainError("paths must share one time grid")
    values = np.stack([p.values for p in paths])
    cum = np.stack([p.cum_integral for p in paths])
    extinct = np.array([np.nan if p.extinct_at is None else p.extinct_at for p in paths])
    return PathBatch(grid, values, cum, extinct)


def martingale_check(
    paths,
    phi: BranchingMechanism,
    psi: Optional[ImmigrationMechanism],
    lam: float,
    t_list: Sequence[float],
    z_threshold: float = 4.0,
    bias_allowance: float = 0.0,
    seed: Optional[int] = None,
    dt: Optional[float] = None,
) -> list[CheckReport]:
    """``E H_t`` against ``H_0 = exp(-lam y_0)`` for each ``t`` in ``t_list``.

    ``H_t = exp(-lam y_t + t psi(lam) - phi(lam) int_0^t y ds)``. All paths
    must start from the same value.
    """
    batch = _as_batch(paths)
    psi = psi if psi is not None else ImmigrationMechanism()
    if batch.t_grid[0] != 0.0:
        raise DomainError("paths must include time 0")
    y0 = batch.values[:, 0]
    if np.any(y0 != y0[0]):
        raise DomainError("paths must share their initial value")
    h0 = math.exp(-lam * y0[0])
    phl, psl = phi.phi(lam), psi.psi(lam)
    out = []
    for t in t_list:
        h = np.exp(-lam * batch.at(t) + t * psl - phl * batch.cum_at(t))
        out.append(mc_compare(f"martingale_t={t:g}", h0, h, z_threshold, bias_allowance, seed, dt))
    return out


@dataclass(frozen=True)
class TestFunction:
    """A function with its first two derivatives."""

    __test__ = False  # not a pytest class

    f: Callable[[float], float]
    df: Callable[[float], float]
    d2f: Callable[[float], float]


def exp_test_function(lam: float) -> TestFunction:
    return TestFunction(
        lambda x: math.exp(-lam * x),
        lambda x: -lam * math.exp(-lam * x),
        lambda x: lam * lam * math.exp(-lam * x),
    )


# Gauss-Legendre nodes on [0, 1] for the remainder integrals below
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _second_remainder(fn: TestFunction, x: float, u: float) -> float:
    """``f(x+u) - f(x) - u f'(x)``; for ``u <= 1`` as ``u^2 int_0^1 (1-w) f''(x+uw) dw``."""
    if u > 1.0:
        return fn.f(x + u) - fn.f(x) - u * fn.df(x)
    vals = np.array([fn.d2f(x + u * w) for w in _GL_X])
    return u * u * float(np.sum(_GL_W * (1.0 - _GL_X) * vals))


def _first_remainder(fn: TestFunction, x: float, u: float) -> float:
    """``f(x+u) - f(x)``; for ``u <= 1`` as ``u int_0^1 f'(x+uw) dw``."""
    if u > 1.0:
        return fn.f(x + u) - fn.f(x)
    vals = np.array([fn.df(x + u * w) for w in _GL_X])
    return u * float(np.sum(_GL_W * vals))


def generator_apply(
    phi: BranchingMechanism,
    psi: Optional[ImmigrationMechanism],
    rate_value: float,
    f,
    x: float,
    rtol: float = 1e-11,
) -> float:
    """Generator of the CBI process applied to ``f`` at ``x``, by quadrature.

    ``c x f'' + x int [f(x+z) - f(x) - z f'(x)] m(dz) + (rate beta - b x) f'
    + rate int [f(x+z) - f(x)] n(dz)``. ``f`` is a :class:`TestFunction` or a
    ``(f, f', f'')`` triple.
    """
    fn = f if isinstance(f, TestFunction) else TestFunction(*f)
    if x < 0 or rate_value < 0:
        raise DomainError("x and rate_value must be nonnegative")
    psi = psi if psi is not None else ImmigrationMechanism()
    out = phi.c * x * fn.d2f(x) + (rate_value * psi.beta - phi.b * x) * fn.df(x)
    m: LevyMeasure = phi.m
    if x > 0 and not m.is_null:
        out += x * m.integrate(lambda u: _second_remainder(fn, x, u), rtol=rtol)
    n: LevyMeasure = psi.n
    if rate_value > 0 and not n.is_null:
        out += rate_value * n.integrate(lambda u: _first_remainder(fn, x, u), rtol=rtol)
    return float(out)


def extinction_estimate(paths, t: float) -> MCEstimate:
    """Fraction of paths at 0 at time ``t``; the stderr is the Bernoulli one."""
    batch = _as_batch(paths)
    zero = (batch.at(t) == 0.0).astype(float)
    p = float(zero.mean())
    n = zero.size
    return MCEstimate(p, math.sqrt(p * (1.0 - p) / n), n)


def _is_feller(phi: BranchingMechanism) -> bool:
    return phi.c > 0 and phi.m.is_null


def _terminal_values(phi, x0, t, N, stream, dt, eps_jump):
    batch = stream.spawn(N)
    if _is_feller(phi):
        return simulate_feller_exact(phi.c, phi.b, 0.0, x0, [0.0, t], batch).at(t)
    return simulate_cbi(phi, None, None, x0, t, dt, eps_jump, batch, save_times=[t]).at(t)


def branching_property_check(
    phi: BranchingMechanism,
    x1: float,
    x2: float,
    t: float,
    lam: float,
    N: int,
    s: rngkit.RandomStream,
    z_threshold: float = 4.0,
    dt: float = 1e-3,
    eps_jump: float = 1e-3,
) -> CheckReport:
    """Laplace transform from ``x1 + x2`` against the product of those from ``x1`` and ``x2``.

    Three independent runs of ``N`` paths read ``split(s, 0..2)``. Feller
    mechanisms use the exact sampler, others the Euler scheme.
    """
    if x1 < 0 or x2 < 0:
        raise DomainError("x1 and x2 must be nonnegative")
    if N < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} paths")
    ys = [_terminal_values(phi, x, t, N, rngkit.split(s, j), dt, eps_jump) for j, x in enumerate((x1 + x2, x1, x2))]
    e12, e1, e2 = (MCEstimate.from_samples(np.exp(-lam * y)) for y in ys)
    prod_se = math.hypot(e2.mean * e1.stderr, e1.mean * e2.stderr)
    product = MCEstimate(e1.mean * e2.mean, prod_se, N)
    used_dt = None if _is_feller(phi) else dt
    return compare_estimates(f"branching_property_t={t:g}_lam={lam:g}", product, e12, z_threshold, 0.0, s.key, used_dt)


def write_report_csv(reports: Sequence[CheckReport], path) -> None:
    write_rows(path, REPORT_HEADER, (r.row() for r in reports))


# -- the Feller battery -------------------------------------------------------


@dataclass(frozen=True)
class SuiteConfig:
    """Parameters of the Feller/CIR battery.

    ``c, b`` drive every check; ``beta`` the immigration checks; ``x0`` is
    the start of the non-immigration checks.
    """

    c: float = 1.0
    b: float = 0.5
    beta: float = 1.0
    x0: float = 1.0
    n_paths: int = 100_000
    seed: int = 0
    z_threshold: float = 4.0
    euler_dt: float = 1e-2
    martingale_dt: float = 1e-2
    threads: int = 1

    def __post_init__(self):
        if not (self.c > 0 and self.beta >= 0 and self.x0 > 0):
            raise DomainError("the battery needs c > 0, beta >= 0 and x0 > 0")
        if not self.b > 0:
            raise DomainError("the stationary check needs b > 0")
        if self.n_paths < MIN_SUITE_PATHS:
            raise DomainError(f"the battery needs at least {MIN_SUITE_PATHS} paths per check")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")


@dataclass
class SuiteResult:
    reports: list[CheckReport] = field(default_factory=list)

    @property
    def n_passed(self) -> int:
        return sum(r.passed for r in self.reports)

    @property
    def required(self) -> int:
        return math.ceil(0.95 * len(self.reports))

    @property
    def ok(self) -> bool:
        return self.n_passed >= self.required

    def summary(self) -> str:
        return f"PASS {self.n_passed}/{len(self.reports)}"


def _battery(cfg: SuiteConfig) -> list[Callable[[rngkit.RandomStream], CheckReport]]:
    c, b, beta, x0, N, zt = cfg.c, cfg.b, cfg.beta, cfg.x0, cfg.n_paths, cfg.z_threshold
    phi = BranchingMechanism(b, c)
    psi = ImmigrationMechanism(beta)
    seed = cfg.seed

    def cb_terminal(s, t):
        return simulate_feller_exact(c, b, 0.0, x0, [0.0, t], s.spawn(N)).at(t)

    def cbi_terminal(s, t, start=0.0):
        return simulate_feller_exact(c, b, beta, start, [0.0, t], s.spawn(N)).at(t)

    def extinction(t):
        def run(s):
            est = extinction_estimate(simulate_feller_exact(c, b, 0.0, x0, [0.0, t], s.spawn(N)), t)
            return _report(f"extinction_t={t:g}", cumulant.extinction_prob(phi, x0, t), est, zt, 0.0, seed)
        return run

    def laplace(t, lam):
        def run(s):
            y = cb_terminal(s, t)
            return mc_compare(f"laplace_t={t:g}_lam={lam:g}", cumulant.transition_laplace(phi, None, x0, t, lam), np.exp(-lam * y), zt, 0.0, seed)
        return run

    def cb_mean(t):
        def run(s):
            return mc_compare(f"mean_t={t:g}", cumulant.mean(phi, None, None, x0, t), cb_terminal(s, t), zt, 0.0, seed)
        return run

    def sizebiased(t, lam):
        def run(s):
            y = cb_terminal(s, t)
            w = y * np.exp(-lam * y) * math.exp(b * t) / x0
            return mc_compare(f"sizebiased_t={t:g}_lam={lam:g}", cumulant.sizebiased_laplace(phi, x0, t, lam), w, zt, 0.0, seed)
        return run

    def martingale(t):
        def run(s):
            dt = cfg.martingale_dt
            grid = np.linspace(0.0, t, int(round(t / dt)) + 1)
            pb = simulate_feller_exact(c, b, 0.0, x0, grid, s.spawn(N))
            return martingale_check(pb, phi, None, 1.0, [t], zt, 0.0, seed, dt)[0]
        return run

    def branching(s):
        return branching_property_check(phi, x0, x0, 1.0, 1.0, N, s, zt)

    def cbi_laplace(t, lam):
        def run(s):
            y = cbi_terminal(s, t)
            return mc_compare(f"cbi_laplace_t={t:g}_lam={lam:g}", cumulant.transition_laplace(phi, psi, 0.0, t, lam), np.exp(-lam * y), zt, 0.0, seed)
        return run

    def cbi_mean(s):
        return mc_compare("cbi_mean_t=1", cumulant.mean(phi, psi, None, x0, 1.0), cbi_terminal(s, 1.0, x0), zt, 0.0, seed)

    def stationary(lam):
        def run(s):
            y = cbi_terminal(s, 15.0)
            return mc_compare(f"stationary_lam={lam:g}", cumulant.stationary_laplace(phi, psi, lam), np.exp(-lam * y), zt, 0.0, seed)
        return run

    def euler(s):
        dt = cfg.euler_dt
        y = simulate_cbi(phi, None, None, x0, 1.0, dt, 1e-3, s.spawn(N), save_times=[1.0]).at(1.0)
        return mc_compare("euler_laplace_t=1_lam=1", cumulant.transition_laplace(phi, None, x0, 1.0, 1.0), np.exp(-y), zt, 3.0 * dt, seed, dt)

    def excursion(t):
        def run(s):
            p = excursion_reconstruct_feller(c, b, x0, 0.5, t, s.spawn(N), t_grid=[0.5, t])
            return mc_compare(f"excursion_t={t:g}", cumulant.transition_laplace(phi, None, x0, t, 1.0), np.exp(-p.at(t)), zt, 0.0, seed)
        return run

    def reconstruct(s):
        p = immigration_reconstruct_feller(c, b, psi, 2.0, 0.25, s.spawn(N), t_grid=[1.0, 2.0])
        return mc_compare("immigration_reconstruct_t=2", cumulant.transition_laplace(phi, psi, 0.0, 2.0, 1.0), np.exp(-p.at(2.0)), zt, 0.0, seed)

    return [
        extinction(0.5),
        extinction(1.0),
        extinction(2.0),
        laplace(1.0, 0.5),
        laplace(1.0, 1.0),
        laplace(1.0, 2.0),
        laplace(2.0, 1.0),
        cb_mean(1.0),
        sizebiased(1.0, 1.0),
        martingale(0.5),
        martingale(1.0),
        branching,
        cbi_laplace(1.0, 0.5),
        cbi_laplace(1.0, 2.0),
        cbi_mean,
        stationary(1.0),
        euler,
        excursion(1.0),
        excursion(2.0),
        reconstruct,
    ]


def verify_suite(cfg: SuiteConfig) -> SuiteResult:
    """Run the 20-check battery; check ``j`` reads ``split(make_stream(seed), j)``.

    Checks run on ``cfg.threads`` worker threads and are collected in battery
    order, so the reports do not depend on the thread count.
    """
    root = rngkit.make_stream(cfg.seed)
    checks = _battery(cfg)
    streams = [rngkit.split(root, j) for j in range(len(checks))]
    if cfg.threads == 1:
        reports = [fn(s) for fn, s in zip(checks, streams)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            reports = list(pool.map(lambda pair: pair[0](pair[1]), zip(checks, streams)))
    return SuiteResult(reports)
