"""
Galton-Watson chains and their continuous limits
================================================

A rescaled GW chain with offspring pgf g and time scale gamma_k has
cumulant v_k obtained by iterating g.  As k grows it approaches the
cumulant of a CB process.  The time scale matters: it fixes which limit
mechanism appears.
"""

import numpy as np

from cbranch import BranchingMechanism, make_stream
from cbranch.discrete import Binary, FromMechanism, gw_simulate, scaling_diagnostics, vk_recursion

# critical binary splitting, gamma_k = k: the limit mechanism is z^2/2, v_1(1) = 2/3
for k in (16, 256, 4096):
    print(f"binary k={k:5d}  v_k = {vk_recursion(Binary(0.5), k, float(k), 1.0, 1.0):.6f}")

# offspring laws built from a mechanism reproduce phi exactly at finite k
quad = BranchingMechanism(0.0, 1.0)
law = lambda k: FromMechanism(quad, k)
rows = scaling_diagnostics(law, lambda k: law(k).gamma_k, [64], [0.5, 2.0, 8.0], quad.phi)
for r in rows:
    print(f"z={r['z']:4}  phi_k={r['phi_k']:.10f}  phi={r['phi']:.10f}  G_k={r['G_k']:.6f}")

# on its natural clock gamma_k the family converges to v_1(1) = 1/2 for phi = z^2
for k in (256, 2048, 16384):
    g = law(k)
    print(f"from_mechanism k={k:5d}  v_k = {vk_recursion(g, k, g.gamma_k, 1.0, 1.0):.7f}")

# on the clock gamma_k = k instead it converges to the cumulant of z^2/3, i.e. 3/4
for k in (256, 2048, 16384):
    print(f"clock k        k={k:5d}  v_k = {vk_recursion(law(k), k, float(k), 1.0, 1.0):.7f}")

# a simulated chain: critical binary from 1000 individuals keeps its mean
y = gw_simulate(Binary(0.5), 1000, 20, make_stream(0).spawn(5000))
print("mean after 20 generations:", y[:, -1].mean(), "+/-", y[:, -1].std() / np.sqrt(len(y)))
