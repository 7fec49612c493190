"""
Simulated paths against analytic oracles
========================================

Every simulator is checked the same way: estimate E exp(-lam X_t) by Monte
Carlo and compare with exp(-x v_t(lam)) from the cumulant engine.
"""

import math

import numpy as np

from cbranch import BranchingMechanism, ImmigrationMechanism, make_stream
from cbranch.cumulant import transition_laplace, v_solve
from cbranch.measures import Atoms
from cbranch.paths import excursion_reconstruct_feller, simulate_cbi, simulate_feller_exact
from cbranch.verify import mc_compare

feller = BranchingMechanism(0.0, 1.0)
N = 20_000

# exact Poisson-Gamma sampler
b = simulate_feller_exact(1.0, 0.0, 0.0, 1.0, [0.0, 1.0], make_stream(1).spawn(N))
print(",".join(mc_compare("exact feller", math.exp(-0.5), np.exp(-b.at(1.0))).row()))

# Euler scheme with compound-Poisson jumps; a bias allowance covers the O(dt) error
phi = BranchingMechanism(0.0, 0.5, Atoms(((1.0, 1.0),)))
psi = ImmigrationMechanism(0.5)
dt = 1e-2
b = simulate_cbi(phi, psi, None, 1.0, 1.0, dt, 1e-3, make_stream(2).spawn(N), save_times=[1.0])
oracle = transition_laplace(phi, psi, 1.0, 1.0, 1.0)
print(",".join(mc_compare("euler jumps", oracle, np.exp(-b.at(1.0)), bias_allowance=3 * dt).row()))

# the same paths also give extinction frequencies; without immigration zero is absorbing
b = simulate_cbi(feller, None, None, 1.0, 2.0, dt, 1e-3, make_stream(3).spawn(N), save_times=[2.0])
print("P(X_2 = 0) ~", np.mean(b.at(2.0) == 0), " exact", math.exp(-1 / 2))

# excursion reconstruction: a Poisson number of clusters entered at age t0
b = excursion_reconstruct_feller(1.0, 0.0, 1.0, 0.5, 2.0, make_stream(4).spawn(N), t_grid=[1.0, 2.0])
for t in (1.0, 2.0):
    print(",".join(mc_compare(f"excursion t={t}", math.exp(-v_solve(feller, 1.0, t).v), np.exp(-b.at(t))).row()))
