"""
Lamperti time change and the verification battery
==================================================

A CB process run on the clock int_0^t X_s ds is a spectrally positive Levy
process stopped at zero.  The transforms here act on piecewise-linear paths,
so deterministic inputs give exact answers to interpolation error.
"""

import numpy as np

from cbranch import BranchingMechanism, make_stream
from cbranch.paths import SamplePath, lamperti_forward, lamperti_inverse, simulate_feller_exact
from cbranch.verify import SuiteConfig, verify_suite


def det_path(t, x):
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (x[1:] + x[:-1]))])
    return SamplePath(t, x, cum)


# x_t = e^{-t} has integral 1 - e^{-t}, so the new-clock path is z_s = 1 - s
t = np.linspace(0, 12, 12001)
z = lamperti_forward(det_path(t, np.exp(-t)), 1e-3)
inside = z.t_grid < 0.99
print("forward error:", np.max(np.abs(z.values[inside] - (1 - z.t_grid[inside]))))

# and back again on a wiggly positive path
x = 1 + 0.5 * np.sin(3 * t[:3001])
back = lamperti_inverse(lamperti_forward(det_path(t[:3001], x), 1e-4), 1e-3)
n = min(back.t_grid.size, x.size)
print("round-trip error:", np.max(np.abs(back.values[:n] - x[:n])))

# a random Feller path: the forward transform lives on [0, int X ds]
p = simulate_feller_exact(1.0, 0.0, 0.0, 1.0, np.linspace(0, 4, 2001), make_stream(5))
z = lamperti_forward(p, 1e-3)
print("path absorbed at", p.extinct_at, " new clock ends at", z.t_grid[-1])

# the battery: 20 Monte Carlo checks for a CIR process; 19 must pass
res = verify_suite(SuiteConfig(c=1.0, b=0.5, beta=1.0, n_paths=20_000, seed=3))
for r in res.reports:
    print(f"{r.name:28s} z={r.z:+.2f} {'ok' if r.passed else 'FAIL'}")
print(res.summary())
