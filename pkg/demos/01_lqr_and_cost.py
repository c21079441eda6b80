"""LQR synthesis and cost evaluation on the 747 level-flight model.

Builds the aircraft system, synthesizes the optimal gain from the true
cost weights, and cross-checks the Lyapunov-based average cost against a
long Monte-Carlo rollout.
"""

import numpy as np

from lqfit import build_aircraft, closed_loop_cost, rollout_cost_estimate, solve_lqr
from lqfit.linsys import spectral_radius

dyn, cost, sigma = build_aircraft()
print("747 model: n =", dyn.n, "inputs =", dyn.m)
print("open-loop spectral radius:", round(spectral_radius(dyn.A), 4))

sol = solve_lqr(dyn, cost)
print("\noptimal gain K* =\n", np.round(sol.K, 3))
print("closed-loop spectral radius:",
      round(spectral_radius(dyn.closed_loop(sol.K)), 6))

J = closed_loop_cost(dyn, cost, sol.K)
print("\naverage cost (Lyapunov):", round(J, 4))

est = rollout_cost_estimate(dyn, cost, sol.K, horizon=10**6, rng_seed=0)
print("average cost (Monte-Carlo, T=1e6):", round(est, 4))
print("relative difference:", f"{abs(est - J) / J:.2%}")
