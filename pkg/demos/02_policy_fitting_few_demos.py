"""Plain policy fitting degrades sharply with few demonstrations.

An expert regulates a random marginally-unstable system; we fit a gain to
N noisy expert state/input pairs by ridge regression and watch what
happens to the closed loop as N shrinks.
"""

import math


from lqfit import (build_small_random, closed_loop_cost, generate_demos,
                   policy_fit, solve_lqr)
from lqfit.linsys import spectral_radius

dyn, cost, sigma = build_small_random(seed=3)
Kstar = solve_lqr(dyn, cost).K
J_star = closed_loop_cost(dyn, cost, Kstar)
print(f"optimal cost: {J_star:.3f}\n")

print(" N   cost          spectral radius")
for N in (1, 2, 3, 4, 6, 10, 25, 100):
    demos = generate_demos(dyn, Kstar, sigma, N, outlier_prob=0.0,
                           rng_seed=(7, N))
    report = policy_fit(demos)
    J = closed_loop_cost(dyn, cost, report.K)
    rho = spectral_radius(dyn.closed_loop(report.K))
    cost_str = "unstable (inf)" if math.isinf(J) else f"{J:,.3f}"
    print(f"{N:3d}  {cost_str:<13s}  {rho:.3f}")

print("\nWith fewer pairs than states the interpolating fit often")
print("fails to stabilize the system at all.")
