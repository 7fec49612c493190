"""
Cumulants and closed forms
==========================

The Laplace functional of a CB process is exp(-x v_t(lam)), where v solves
v' = -phi(v).  For stable mechanisms there is a closed form, and the ODE
engine should reproduce it to solver tolerance.
"""

import math

import numpy as np

from cbranch import BranchingMechanism, ImmigrationMechanism, stable_phi
from cbranch import cumulant

# Feller diffusion: phi(z) = z^2, so v_t(lam) = lam / (1 + t lam)
feller = BranchingMechanism(0.0, 1.0)
for t in (0.1, 1.0, 5.0):
    ode = cumulant.v_solve(feller, 1.0, t).v
    print(f"t={t:4}  ode={ode:.12f}  closed={1 / (1 + t):.12f}")

# stable branching with drift: closed form against the ODE on a small grid
phi = stable_phi(1.5, scale=1.0, b=0.5)
worst = 0.0
for t in (0.1, 1.0, 5.0):
    for lam in (0.1, 1.0, 10.0):
        a = cumulant.v_solve(phi, lam, t).v
        b = cumulant.v_stable_closed(1.0, 0.5, 0.5, t, lam)
        worst = max(worst, abs(a - b) / b)
print("stable: worst relative gap", worst)

# the trajectory carries dense output; the semigroup property checks it
traj = cumulant.v_solve(feller, 2.0, 3.0)
print("v_3(2) =", traj.v, " v_1(v_2(2)) =", cumulant.v_solve(feller, cumulant.v_solve(feller, 2.0, 2.0).v, 1.0).v)

# extinction: P(X_t = 0 | X_0 = x) = exp(-x vbar_t)
print("P(extinct by t=1 | x=1) =", cumulant.extinction_prob(feller, 1.0, 1.0), " expected", math.exp(-1))

# with immigration the law settles: E exp(-lam X_inf) for CIR is (1 + lam c/b)^(-beta/c)
cir = BranchingMechanism(1.0, 1.0)
psi = ImmigrationMechanism(1.0)
lams = np.array([0.0, 0.5, 1.0, 4.0])
print("stationary:", [round(cumulant.stationary_laplace(cir, psi, l), 10) for l in lams])
print("closed    :", np.round(1 / (1 + lams), 10).tolist())
