"""Acceptance criteria 1-13, one test each.

Every test prints a ``criterion N: PASS|FAIL`` line with its measured
numbers and runtime; the lines are repeated in the pytest terminal summary.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from cbranch.cli import main as cli_main
from cbranch.cumulant import transition_laplace, v_solve, v_stable_closed
from cbranch.discrete import FromMechanism, vk_recursion
from cbranch.estimate import MCEstimate
from cbranch.measures import Atoms, ExponentialJump, StableBranching, StableImmigration
from cbranch.mechanism import BranchingMechanism, ImmigrationMechanism, stable_phi
from cbranch.paths import (
    SamplePath,
    excursion_reconstruct_feller,
    lamperti_forward,
    lamperti_forward_values,
    lamperti_inverse,
    simulate_cbi,
    simulate_feller_exact,
    simulate_levy,
    simulate_stable_cbi,
)
from cbranch.rngkit import make_stream
from cbranch.verify import branching_property_check, exp_test_function, generator_apply, martingale_check

from conftest import ACCEPTANCE_LINES

FELLER = BranchingMechanism(0, 1)


def verdict(n, ok, detail, elapsed, limit=None):
    fast = limit is None or elapsed < limit
    status = "PASS" if ok and fast else "FAIL"
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    line = f"criterion {n}: {status} {detail}; runtime {elapsed:.2f} s{budget}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert fast, line


def laplace(y, lam):
    return MCEstimate.from_samples(np.exp(-lam * np.asarray(y)))


def det_path(t, x, absorbed_at=None):
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (x[1:] + x[:-1]))])
    return SamplePath(t, x, cum, absorbed_at)


def test_criterion_01_cumulant_vs_stable_closed_form():
    start = time.perf_counter()
    worst = 0.0
    for c, alpha, b, t, lam in itertools.product([0.5, 1.0], [0.5, 1.0], [-1.0, 0.0, 1.0], [0.1, 1.0, 5.0], [0.1, 1.0, 10.0]):
        # phi(z) = b z + c z^(1 + alpha)
        phi = BranchingMechanism(b, c) if alpha == 1.0 else stable_phi(1.0 + alpha, scale=c, b=b)
        exact = v_stable_closed(c, alpha, b, t, lam)
        worst = max(worst, abs(v_solve(phi, lam, t).v - exact) / exact)
    verdict(1, worst < 1e-6, f"max relative error {worst:.2e} over 108 grid points (< 1e-6)", time.perf_counter() - start, 10)


def test_criterion_02_semigroup():
    start = time.perf_counter()
    mechanisms = {"z^2": FELLER, "z^1.5": stable_phi(1.5), "z^2+z": BranchingMechanism(1, 1)}
    worst = 0.0
    for phi in mechanisms.values():
        for r, t, lam in itertools.product([0.1, 1.0, 3.0], [0.1, 1.0, 3.0], [0.1, 1.0, 10.0]):
            worst = max(worst, abs(v_solve(phi, lam, r + t).v - v_solve(phi, v_solve(phi, lam, t).v, r).v))
    verdict(2, worst < 1e-5, f"max |v_(r+t) - v_r(v_t)| = {worst:.2e} (< 1e-5)", time.perf_counter() - start, 10)


def test_criterion_03_scaling_limit():
    # stated literally: FromMechanism(z^2, k) iterated on the time scale gamma_k = k
    start = time.perf_counter()
    errs = {}
    for k in (2**8, 2**11, 2**14):
        errs[k] = abs(vk_recursion(FromMechanism(FELLER, k), k, float(k), 1.0, 1.0) - 2.0 / 3.0)
    ks = sorted(errs)
    decreasing = all(errs[a] > errs[b] for a, b in zip(ks, ks[1:]))
    ok = errs[2**14] < 1e-2 and decreasing
    detail = ", ".join(f"k={k}: |v_k - 2/3| = {errs[k]:.5f}" for k in ks)
    verdict(3, ok, f"{detail}; decreasing={decreasing}", time.perf_counter() - start, 30)


def test_criterion_04_extinction():
    start = time.perf_counter()
    y = simulate_feller_exact(1.0, 0.0, 0.0, 1.0, [0.0, 1.0], make_stream(4).spawn(100_000)).at(1.0)
    p = float(np.mean(y == 0))
    se = math.sqrt(p * (1 - p) / y.size)
    z = (p - math.exp(-1)) / se
    verdict(4, abs(z) < 4, f"P(y(1)=0) = {p:.5f} vs e^-1 = {math.exp(-1):.5f}, z = {z:+.2f}", time.perf_counter() - start, 20)


def test_criterion_05_cbi_stationarity():
    start = time.perf_counter()
    y = simulate_feller_exact(1.0, 1.0, 1.0, 0.0, [0.0, 15.0], make_stream(5).spawn(100_000)).at(15.0)
    parts, ok = [], True
    for lam in (0.5, 1.0, 2.0):
        est = laplace(y, lam)
        z = est.z(1.0 / (1.0 + lam))
        ok &= abs(z) < 4
        parts.append(f"lam={lam:g}: {est.mean:.5f} vs {1 / (1 + lam):.5f} (z={z:+.2f})")
    verdict(5, ok, "; ".join(parts), time.perf_counter() - start, 30)


def test_criterion_06_euler_scheme():
    start = time.perf_counter()
    dt = 1e-3
    parts, ok = [], True
    cases = {"Feller": FELLER, "Atoms[(1,1)]": BranchingMechanism(0, 0, Atoms(((1.0, 1.0),)))}
    for j, (label, phi) in enumerate(cases.items()):
        y = simulate_cbi(phi, None, None, 1.0, 1.0, dt, 1e-3, make_stream(60 + j).spawn(100_000), save_times=[1.0]).at(1.0)
        est = laplace(y, 1.0)
        exact = transition_laplace(phi, None, 1.0, 1.0, 1.0)
        err = abs(est.mean - exact)
        ok &= err <= 4 * est.stderr + 3 * dt
        parts.append(f"{label}: {est.mean:.5f} vs {exact:.5f}, |diff| {err:.1e} <= {4 * est.stderr + 3 * dt:.1e}")
    verdict(6, ok, "; ".join(parts), time.perf_counter() - start, 120)


def test_criterion_07_stable_sde():
    start = time.perf_counter()
    dt = 1e-3
    phi = stable_phi(1.5)
    y = simulate_stable_cbi(0.0, phi.m.sigma, 1.5, 0.0, None, 1.0, 1.0, dt, make_stream(7).spawn(100_000), save_times=[1.0]).at(1.0)
    est = laplace(y, 1.0)
    exact = math.exp(-v_solve(phi, 1.0, 1.0).v)
    err = abs(est.mean - exact)
    tol = 4 * est.stderr + 3 * dt
    verdict(7, err <= tol, f"{est.mean:.5f} vs {exact:.5f}, |diff| {err:.1e} <= {tol:.1e} (bias allowance 3 dt)", time.perf_counter() - start, 120)


def test_criterion_08_lamperti():
    start = time.perf_counter()
    # deterministic cases
    t = np.linspace(0, 12, 24001)
    z = lamperti_forward(det_path(t, np.exp(-t)), 1e-3)
    inside = z.t_grid < 0.999
    err_fwd = float(np.max(np.abs(z.values[inside] - (1 - z.t_grid[inside]))))
    s = np.linspace(0, 1, 1001)
    x = lamperti_inverse(det_path(s, 1 - s, 1.0), 1e-3)
    keep = x.t_grid < 6
    err_inv = float(np.max(np.abs(x.values[keep] - np.exp(-x.t_grid[keep]))))
    u = np.linspace(0, 3, 3001)
    xs = 1 + 0.5 * np.sin(3 * u)
    back = lamperti_inverse(lamperti_forward(det_path(u, xs), 1e-4), 1e-3)
    n = min(back.t_grid.size, u.size)
    err_rt = float(np.max(np.abs(back.values[:n] - xs[:n])))
    det_ok = max(err_fwd, err_inv, err_rt) < 1e-6
    # Monte Carlo: Feller paths in the new clock against stopped Levy paths
    grid = np.linspace(0.0, 4.0, 2001)
    cb = simulate_feller_exact(1.0, 0.0, 0.0, 1.0, grid, make_stream(80).spawn(10_000))
    zt = lamperti_forward_values(cb, [0.5])[:, 0]
    defined = int(np.sum(~np.isnan(zt)))
    lev = simulate_levy(FELLER, 1.0, 0.5, 1e-3, 1e-3, make_stream(81).spawn(10_000), save_times=[0.5]).at(0.5)
    a, b = laplace(zt[~np.isnan(zt)], 1.0), laplace(lev, 1.0)
    zc = (a.mean - b.mean) / math.hypot(a.stderr, b.stderr)
    mc_ok = abs(zc) < 4 and defined == zt.size
    detail = (
        f"deterministic max errors fwd {err_fwd:.1e}, inv {err_inv:.1e}, round trip {err_rt:.1e} (< 1e-6); "
        f"MC {a.mean:.4f} vs Levy {b.mean:.4f}, combined z = {zc:+.2f}, defined {defined}/{zt.size}"
    )
    verdict(8, det_ok and mc_ok, detail, time.perf_counter() - start, 60)


def test_criterion_09_excursion_reconstruction():
    start = time.perf_counter()
    b = excursion_reconstruct_feller(1.0, 0.0, 1.0, 0.5, 2.0, make_stream(9).spawn(10_000), t_grid=[0.5, 1.0, 2.0])
    parts, ok = [], True
    for t in (1.0, 2.0):
        est = laplace(b.at(t), 1.0)
        exact = transition_laplace(FELLER, None, 1.0, t, 1.0)
        z = est.z(exact)
        ok &= abs(z) < 4
        parts.append(f"t={t:g}: {est.mean:.5f} vs {exact:.5f} (z={z:+.2f})")
    verdict(9, ok, "; ".join(parts), time.perf_counter() - start, 60)


def test_criterion_10_martingale():
    start = time.perf_counter()
    times = [0.25, 0.5, 1.0]
    paths = simulate_cbi(FELLER, None, None, 1.0, 1.0, 1e-2, 1e-3, make_stream(10).spawn(100_000), save_times=[0.0] + times)
    reports = martingale_check(paths, FELLER, None, 1.0, times, z_threshold=4.0)
    ok = all(r.passed for r in reports)
    detail = "; ".join(f"{r.name}: {r.estimate.mean:.5f} vs {r.analytic:.5f} (z={r.z:+.2f})" for r in reports)
    verdict(10, ok, detail, time.perf_counter() - start, 60)


def test_criterion_11_generator_identity():
    start = time.perf_counter()
    mechanisms = [
        (BranchingMechanism(0.5, 1.0, StableBranching(1.0, 1.5)), ImmigrationMechanism(1.0, StableImmigration(0.7, 0.5))),
        (BranchingMechanism(-0.3, 0.0, ExponentialJump(2.0, 1.5)), ImmigrationMechanism(0.2, Atoms(((0.5, 1.0), (2.0, 0.3))))),
    ]
    worst = 0.0
    for phi, psi in mechanisms:
        for x, lam in itertools.product([0.0, 0.5, 2.0], [0.1, 1.0, 5.0]):
            expect = (x * phi.phi(lam) - psi.psi(lam)) * math.exp(-lam * x)
            got = generator_apply(phi, psi, 1.0, exp_test_function(lam), x)
            worst = max(worst, abs(got - expect) / abs(expect))
    verdict(11, worst < 1e-7, f"max relative error {worst:.1e} over 2 mechanisms x 9 (x, lam) points (< 1e-7)", time.perf_counter() - start, 1)


def test_criterion_12_branching_property():
    start = time.perf_counter()
    r = branching_property_check(FELLER, 1.0, 1.0, 1.0, 1.0, 100_000, make_stream(12))
    verdict(12, abs(r.z) < 4, f"E e^(-Y) from 2: {r.estimate.mean:.5f}, product from 1 and 1: {r.analytic:.5f}, combined z = {r.z:+.2f}", time.perf_counter() - start, 30)


def test_criterion_13_determinism(tmp_path):
    start = time.perf_counter()
    cfg = {"name": "suite", "mechanism": {"b": 0.5, "c": 1}, "immigration": {"beta": 1}, "run": {"kind": "verify_suite", "seed": 13}}
    path = tmp_path / "suite.json"
    path.write_text(json.dumps(cfg))
    outputs, codes = [], []
    for threads in ("1", "4"):
        out = tmp_path / f"threads{threads}"
        codes.append(cli_main(["--config", str(path), "--out", str(out), "--threads", threads, "--quiet"]))
        outputs.append((out / "suite" / "report.csv").read_bytes())
    same = outputs[0] == outputs[1]
    verdict(13, same, f"report.csv byte-identical for --threads 1 and 4: {same}; exit codes {codes}", time.perf_counter() - start)
