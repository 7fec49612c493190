"""Config-driven experiment runner.

``cbranch --config run.json [--seed N] [--out DIR] [--threads N] [--quiet]``

The config is a JSON object::

    {
      "name": "feller",                       # output subdirectory (default: kind)
      "mechanism": {"b": 0, "c": 1, "m": {"kind": "null"}},
      "immigration": {"beta": 0, "n": {"kind": "null"}},
      "run": {"kind": "sde", "seed": 1, "x0": 1, "T": 1, "dt": 0.001,
              "eps_jump": 0.001, "n_paths": 10000, "lambdas": [1], "times": [1]}
    }

Outputs go to ``<out>/<name>/``: ``results.csv`` always, ``paths.csv`` for
simulations and ``report.csv`` for ``verify_suite``. Exit codes: 0 success,
1 invalid config or I/O failure, 2 numerical failure, 3 failed battery.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import cumulant, discrete, rngkit
from .errors import DomainError, NumericError, UnsupportedOperation
from .mechanism import BranchingMechanism, ImmigrationMechanism
from .measures import StableBranching
from .paths import (
    PathBatch,
    SamplePath,
    excursion_reconstruct_feller,
    immigration_reconstruct_feller,
    lamperti_forward,
    lamperti_forward_values,
    simulate_cbi,
    simulate_feller_exact,
    simulate_levy,
    simulate_stable_cbi,
    write_path_csv,
)
from .tables import write_rows
from .verify import SuiteConfig, verify_suite, write_report_csv

__all__ = ["ExperimentConfig", "load_config", "run", "main", "KINDS", "EXIT_OK", "EXIT_INVALID", "EXIT_NUMERIC", "EXIT_FAILED"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_FAILED = 0, 1, 2, 3

KINDS = (
    "cumulant",
    "extinction",
    "stationary",
    "gw",
    "gwi",
    "scaling",
    "sde",
    "stable_sde",
    "feller",
    "levy",
    "lamperti",
    "excursion",
    "immigration_reconstruct",
    "verify_suite",
)

# paths per simulation chunk; chunking never changes results because path i
# always reads split(root, i)
CHUNK = 20_000

_RUN_KEYS = {
    "kind",
    "seed",
    "x0",
    "T",
    "dt",
    "eps_jump",
    "n_paths",
    "lambdas",
    "times",
    "t0",
    "n_steps",
    "offspring",
    "immigrant_offspring",
    "ks",
    "gamma",
    "z_grid",
    "tolerances",
    "method",
}


class ConfigError(DomainError):
    """The config is malformed or misses a parameter the run needs."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    seed: int
    phi: BranchingMechanism
    psi: ImmigrationMechanism
    run: dict = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.run.get(key, default)

    def need(self, key: str) -> Any:
        if key not in self.run:
            raise ConfigError(f"run.{key} is required for kind {self.kind!r}")
        return self.run[key]

    def number(self, key: str, default: Optional[float] = None) -> float:
        v = self.run.get(key, default) if default is not None else self.need(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"run.{key} must be a finite number")
        return float(v)

    def count(self, key: str, default: Optional[int] = None) -> int:
        v = self.run.get(key, default) if default is not None else self.need(key)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError(f"run.{key} must be a nonnegative integer")
        return v

    def grid(self, key: str, default=None) -> list[float]:
        v = self.run.get(key, default) if default is not None else self.need(key)
        if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise ConfigError(f"run.{key} must be a nonempty list of numbers")
        return [float(x) for x in v]

    def tolerance(self, key: str, default: float) -> float:
        tol = self.run.get("tolerances", {})
        if not isinstance(tol, dict):
            raise ConfigError("run.tolerances must be a mapping")
        v = tol.get(key, default)
        if not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"tolerance {key} must be positive")
        return float(v)


def load_config(data: dict, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Validate a parsed JSON config."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(data) - {"name", "mechanism", "immigration", "run"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    run_spec = data.get("run")
    if not isinstance(run_spec, dict):
        raise ConfigError("config needs a 'run' object")
    extra = set(run_spec) - _RUN_KEYS
    if extra:
        raise ConfigError(f"unknown run keys: {sorted(extra)}")
    kind = run_spec.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    seed = seed_override if seed_override is not None else run_spec.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("a nonnegative integer seed is required (run.seed or --seed)")
    name = data.get("name", kind)
    if not isinstance(name, str) or not name or "/" in name or name in (".", ".."):
        raise ConfigError("name must be a plain directory name")
    phi = BranchingMechanism.from_dict(data.get("mechanism", {}))
    psi = ImmigrationMechanism.from_dict(data.get("immigration"))
    return ExperimentConfig(name, kind, int(seed), phi, psi, dict(run_spec))


# -- helpers -------------------------------------------------------------------


def _map_chunks(fn: Callable[[rngkit.StreamBatch], Any], root: rngkit.RandomStream, n: int, threads: int) -> list:
    """``fn`` over consecutive chunks of ``root.spawn(n)``, in chunk order."""
    if n < 1:
        raise ConfigError("run.n_paths must be at least 1")
    full = root.spawn(n)
    chunks = [full.take(slice(a, min(a + CHUNK, n))) for a in range(0, n, CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, chunks))
    return [fn(c) for c in chunks]


def _chunked(simulate: Callable[[rngkit.StreamBatch], PathBatch], root: rngkit.RandomStream, n: int, threads: int) -> PathBatch:
    return PathBatch.concat(_map_chunks(simulate, root, n, threads))


def _laplace_rows(batch: PathBatch, times, lambdas, analytic: Optional[Callable[[float, float], float]]):
    rows = []
    for t in times:
        y = batch.at(t)
        for lam in lambdas:
            e = np.exp(-lam * y)
            se = float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else 0.0
            a = analytic(t, lam) if analytic is not None else None
            rows.append([t, lam, float(e.mean()), se, a])
    return rows


_LAPLACE_HEADER = ("t", "lambda", "laplace", "stderr", "analytic")


def _save_times(times: list[float], T: float) -> list[float]:
    if any(t < 0 or t > T * (1 + 1e-12) for t in times):
        raise ConfigError("run.times must lie in [0, T]")
    return times


def _offspring(spec, phi: BranchingMechanism, k: Optional[int] = None) -> discrete.OffspringLaw:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("offspring law needs a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "binary":
            return discrete.Binary(float(spec["p"]))
        if kind == "poisson":
            return discrete.PoissonLaw(float(spec["mu"]))
        if kind == "geometric":
            return discrete.Geometric(float(spec["p"]))
        if kind == "stable":
            return discrete.StableOffspring(float(spec["alpha"]))
        if kind == "from_mechanism":
            return discrete.FromMechanism(phi, int(spec.get("k", k if k is not None else 1)))
    except KeyError as exc:
        raise ConfigError(f"offspring law {kind!r} is missing {exc}") from None
    raise ConfigError(f"unknown offspring kind {kind!r}")


def _gamma_fn(cfg: ExperimentConfig, family: Callable[[int], discrete.OffspringLaw]) -> Callable[[int], float]:
    spec = cfg.get("gamma", {"scale": 1.0, "power": 1.0})
    if spec == "natural":
        def natural(k):
            g = family(k)
            if not isinstance(g, discrete.FromMechanism):
                raise ConfigError("gamma 'natural' needs a from_mechanism family")
            return g.gamma_k
        return natural
    if not isinstance(spec, dict):
        raise ConfigError("run.gamma must be 'natural' or {'scale': s, 'power': p}")
    scale, power = float(spec.get("scale", 1.0)), float(spec.get("power", 1.0))
    if not scale > 0:
        raise ConfigError("gamma scale must be positive")
    return lambda k: scale * k**power


# -- kinds ---------------------------------------------------------------------


class _Runner:
    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int, quiet: bool):
        self.cfg, self.out, self.threads, self.quiet = cfg, out, threads, quiet
        self.root = rngkit.make_stream(cfg.seed)
        self.status = EXIT_OK

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)

    def results(self, header, rows) -> None:
        write_rows(self.out / "results.csv", header, rows)

    def paths(self, p: SamplePath) -> None:
        write_path_csv(p, self.out / "paths.csv")

    # analytic kinds

    def cumulant(self):
        cfg = self.cfg
        tol = cfg.tolerance("ode_tol", 1e-10)
        method = cfg.get("method", "auto")
        if method not in ("auto", "ode"):
            raise ConfigError("run.method must be 'auto' or 'ode'")
        rows = []
        for t in cfg.grid("times"):
            for lam in cfg.grid("lambdas"):
                # auto: closed form for Feller and stable mechanisms, ODE otherwise
                v = cumulant.v_closed(cfg.phi, lam, t) if method == "auto" else None
                if v is None:
                    v = cumulant.v_solve(cfg.phi, lam, t, tol=tol).v
                rows.append([t, lam, v])
        self.results(("t", "lambda", "v"), rows)

    def extinction(self):
        cfg = self.cfg
        x0 = cfg.number("x0")
        rows = []
        for t in cfg.grid("times"):
            vbar = cumulant.vbar_t(cfg.phi, t) if t > 0 else math.inf
            rows.append([t, vbar, cumulant.extinction_prob(cfg.phi, x0, t)])
        self.results(("t", "vbar", "extinction_prob"), rows)

    def stationary(self):
        cfg = self.cfg
        rows = [[lam, cumulant.stationary_laplace(cfg.phi, cfg.psi, lam)] for lam in cfg.grid("lambdas")]
        self.results(("lambda", "laplace"), rows)

    # discrete kinds

    def _gw(self, immigration: bool):
        cfg = self.cfg
        g = _offspring(cfg.need("offspring"), cfg.phi)
        h = _offspring(cfg.need("immigrant_offspring"), cfg.phi) if immigration else None
        x0, n_steps, n = cfg.count("x0"), cfg.count("n_steps"), cfg.count("n_paths")
        if n < 2:
            raise ConfigError("run.n_paths must be at least 2")
        pops = discrete.gwi_simulate(g, h, x0, n_steps, self.root.spawn(n))
        mean = pops.mean(axis=0)
        se = pops.std(axis=0, ddof=1) / math.sqrt(n)
        zero = (pops == 0).mean(axis=0)
        self.results(("n", "mean", "stderr", "zero_fraction"), [[j, mean[j], se[j], zero[j]] for j in range(n_steps + 1)])
        first = pops[0].astype(float)
        steps = np.arange(n_steps + 1, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(first[:-1])])
        dead = np.flatnonzero(first == 0)
        extinct = float(dead[0]) if (not immigration and dead.size) else None
        self.paths(SamplePath(steps, first, cum, extinct))

    def gw(self):
        self._gw(False)

    def gwi(self):
        self._gw(True)

    def scaling(self):
        cfg = self.cfg
        spec = cfg.need("offspring")
        family = lambda k: _offspring(spec, cfg.phi, k)  # noqa: E731
        gamma = _gamma_fn(cfg, family)
        ks = [int(k) for k in cfg.grid("ks")]
        if any(k < 1 for k in ks):
            raise ConfigError("run.ks must be positive integers")
        # the config's mechanism, when given, is the limit the table is compared with
        target = None if cfg.phi.is_zero else cfg.phi.phi
        rows = discrete.scaling_diagnostics(family, gamma, ks, cfg.grid("z_grid"), target)
        discrete.write_scaling_csv(rows, self.out / "results.csv")
        if "times" in cfg.run and "lambdas" in cfg.run:
            vk_rows = []
            for k in ks:
                for t in cfg.grid("times"):
                    for lam in cfg.grid("lambdas"):
                        vk = discrete.vk_recursion(family(k), k, gamma(k), t, lam)
                        vk_rows.append([k, t, lam, vk, cumulant.v_solve(cfg.phi, lam, t).v])
            write_rows(self.out / "vk.csv", ("k", "t", "lambda", "v_k", "v"), vk_rows)

    # path kinds

    def _sim_common(self):
        cfg = self.cfg
        x0, T, dt = cfg.number("x0"), cfg.number("T"), cfg.number("dt")
        times = _save_times(cfg.grid("times", [T]), T)
        return x0, T, dt, times, cfg.count("n_paths"), cfg.grid("lambdas", [1.0])

    def _analytic(self, x0):
        cfg = self.cfg
        return lambda t, lam: cumulant.transition_laplace(cfg.phi, cfg.psi, x0, t, lam)

    def sde(self):
        cfg = self.cfg
        x0, T, dt, times, n, lambdas = self._sim_common()
        eps = cfg.number("eps_jump")
        sim = lambda b: simulate_cbi(cfg.phi, cfg.psi, None, x0, T, dt, eps, b, save_times=times)  # noqa: E731
        batch = _chunked(sim, self.root, n, self.threads)
        self.results(_LAPLACE_HEADER, _laplace_rows(batch, times, lambdas, self._analytic(x0)))
        self.paths(simulate_cbi(cfg.phi, cfg.psi, None, x0, T, dt, eps, rngkit.split(self.root, 0)))

    def stable_sde(self):
        cfg = self.cfg
        m = cfg.phi.m
        if not isinstance(m, StableBranching):
            raise ConfigError("stable_sde needs a stable_branching measure")
        x0, T, dt, times, n, lambdas = self._sim_common()
        phi = cfg.phi

        def sim(b, save=times):
            return simulate_stable_cbi(phi.c, m.sigma, m.alpha, phi.b, cfg.psi, x0, T, dt, b, save_times=save)

        batch = _chunked(sim, self.root, n, self.threads)
        self.results(_LAPLACE_HEADER, _laplace_rows(batch, times, lambdas, self._analytic(x0)))
        self.paths(sim(rngkit.split(self.root, 0), None))

    def _feller_params(self):
        phi = self.cfg.phi
        if not (phi.c > 0 and phi.m.is_null):
            raise ConfigError("this kind needs a Feller mechanism (c > 0, no Levy measure)")
        return phi.c, phi.b

    def feller(self):
        cfg = self.cfg
        c, b = self._feller_params()
        if not cfg.psi.n.is_null:
            raise ConfigError("the exact sampler supports beta-only immigration")
        beta = cfg.psi.beta
        x0, T, dt, times, n, lambdas = self._sim_common()
        grid = np.unique(np.concatenate([[0.0], times]))
        sim = lambda bt: simulate_feller_exact(c, b, beta, x0, grid, bt)  # noqa: E731
        batch = _chunked(sim, self.root, n, self.threads)
        self.results(_LAPLACE_HEADER, _laplace_rows(batch, times, lambdas, self._analytic(x0)))
        fine = np.linspace(0.0, T, max(int(round(T / dt)), 1) + 1)
        self.paths(simulate_feller_exact(c, b, beta, x0, fine, rngkit.split(self.root, 0)))

    def levy(self):
        cfg = self.cfg
        x0, T, dt, times, n, lambdas = self._sim_common()
        eps = cfg.number("eps_jump")
        sim = lambda b: simulate_levy(cfg.phi, x0, T, dt, eps, b, save_times=times)  # noqa: E731
        batch = _chunked(sim, self.root, n, self.threads)
        self.results(_LAPLACE_HEADER, _laplace_rows(batch, times, lambdas, None))
        self.paths(simulate_levy(cfg.phi, x0, T, dt, eps, rngkit.split(self.root, 0)))

    def lamperti(self):
        """Forward time change of CB paths (exact Feller sampler or Euler scheme)."""
        cfg = self.cfg
        x0, T, dt, times, n, lambdas = self._sim_common()
        phi = cfg.phi
        grid = np.linspace(0.0, T, max(int(round(T / dt)), 1) + 1)
        if phi.c > 0 and phi.m.is_null:
            sim_one = lambda b: simulate_feller_exact(phi.c, phi.b, 0.0, x0, grid, b)  # noqa: E731
        else:
            eps = cfg.number("eps_jump")
            sim_one = lambda b: simulate_cbi(phi, None, None, x0, T, dt, eps, b)  # noqa: E731
        new_times = cfg.grid("times")
        sim = lambda b: lamperti_forward_values(sim_one(b), new_times)  # noqa: E731
        vals = np.concatenate(_map_chunks(sim, self.root, n, self.threads))
        rows = []
        for j, t in enumerate(new_times):
            ok = ~np.isnan(vals[:, j])
            for lam in lambdas:
                e = np.exp(-lam * vals[ok, j])
                se = float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else math.nan
                rows.append([t, lam, float(e.mean()) if e.size else math.nan, se, int(ok.sum())])
        self.results(("t", "lambda", "laplace", "stderr", "n_defined"), rows)
        first = sim_one(rngkit.split(self.root, 0))
        self.paths(lamperti_forward(first, dt))

    def excursion(self):
        cfg = self.cfg
        c, b = self._feller_params()
        x0, T = cfg.number("x0"), cfg.number("T")
        t0 = cfg.number("t0")
        times = cfg.grid("times", [T])
        n, lambdas = cfg.count("n_paths"), cfg.grid("lambdas", [1.0])
        grid = np.unique(np.concatenate([[t0], times]))
        sim = lambda bt: excursion_reconstruct_feller(c, b, x0, t0, T, bt, t_grid=grid)  # noqa: E731
        batch = _chunked(sim, self.root, n, self.threads)
        self.results(_LAPLACE_HEADER, _laplace_rows(batch, times, lambdas, self._analytic(x0)))
        self.paths(excursion_reconstruct_feller(c, b, x0, t0, T, rngkit.split(self.root, 0)))

    def immigration_reconstruct(self):
        cfg = self.cfg
        c, b = self._feller_params()
        T, t0 = cfg.number("T"), cfg.number("t0")
        times = cfg.grid("times", [T])
        n, lambdas = cfg.count("n_paths"), cfg.grid("lambdas", [1.0])
        eps = cfg.number("eps_jump", 1e-3)
        grid = np.unique(np.asarray(times))
        sim = lambda bt: immigration_reconstruct_feller(c, b, cfg.psi, T, t0, bt, t_grid=grid, eps_jump=eps)  # noqa: E731
        batch = _chunked(sim, self.root, n, self.threads)
        self.results(_LAPLACE_HEADER, _laplace_rows(batch, times, lambdas, self._analytic(0.0)))
        self.paths(immigration_reconstruct_feller(c, b, cfg.psi, T, t0, rngkit.split(self.root, 0), eps_jump=eps))

    def verify_suite(self):
        cfg = self.cfg
        phi = cfg.phi
        if not (phi.c > 0 and phi.m.is_null and cfg.psi.n.is_null):
            raise ConfigError("verify_suite runs the Feller battery: c > 0 and no Levy measures")
        suite = SuiteConfig(
            c=phi.c,
            b=phi.b,
            beta=cfg.psi.beta,
            x0=cfg.number("x0", 1.0),
            n_paths=cfg.count("n_paths", 100_000),
            seed=cfg.seed,
            z_threshold=cfg.tolerance("z_threshold", 4.0),
            threads=self.threads,
        )
        result = verify_suite(suite)
        write_report_csv(result.reports, self.out / "report.csv")
        self.results(("passed", "total", "required"), [[result.n_passed, len(result.reports), result.required]])
        self.say(result.summary())
        if not result.ok:
            self.status = EXIT_FAILED


def run(cfg: ExperimentConfig, out_dir="out", threads: int = 1, quiet: bool = False) -> int:
    """Execute one experiment; returns the exit code (errors propagate)."""
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    out = Path(out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    runner = _Runner(cfg, out, threads, quiet)
    getattr(runner, cfg.kind)()
    runner.say(f"{cfg.kind}: wrote {out}")
    return runner.status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation errors (exit 1), not numeric ones
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cbranch", description="Run a CB/CBI experiment from a JSON config.")
    p.add_argument("--config", required=True, help="path to the JSON config")
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--out", default="out", help="output root directory (default: out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--quiet", action="store_true", help="suppress progress and summary lines")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        cfg = load_config(data, args.seed)
        return run(cfg, args.out, args.threads, args.quiet)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, UnsupportedOperation, TypeError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
