"""GRAPE synthesis of the CZ3 pulse, and what the speed limit does to it.

Optimizes the full-size problem (T = 1600, N = 160, |eps| <= 0.3) to the
1e-10 infidelity target, then shows that the same optimization at T = 300,
below the two-qutrit minimum gate time ~ 2 * pi/(4g) ~ 628, stalls far from
convergence.  Takes a few minutes.
"""

import numpy as np
from threadpoolctl import threadpool_limits

from quditcal import (
    GrapeConfig,
    NOMINAL_PARAMS,
    grape_optimize,
    min_time_estimate,
    target_cz3,
)

threadpool_limits(limits=1)

t0, tmin = min_time_estimate(NOMINAL_PARAMS.g)
print(f"coupling g = {NOMINAL_PARAMS.g}: T0 = {t0:.1f}, two-qutrit Tmin ~ {tmin:.1f}")

print("\n== nominal synthesis at T = 1600 ==")
result = grape_optimize(GrapeConfig(seed=0), NOMINAL_PARAMS, target_cz3())
h = result.infidelity_history
print(f"converged = {result.converged} after {result.iterations_used} iterations")
print(f"infidelity: start {h[0]:.3f} -> final {result.final_infidelity:.2e}")
print("waypoints:", ", ".join(f"it {i}: {h[i]:.1e}" for i in
                              np.linspace(0, len(h) - 1, 6).astype(int)))
print(f"max |eps| = {np.max(np.abs(result.pulse.channels)):.3f} (bound 0.3)")

print(f"\n== below the speed limit: T = 300 < {tmin:.0f} ==")
short = grape_optimize(
    GrapeConfig(total_time=300.0, max_iterations=1500, seed=0),
    NOMINAL_PARAMS, target_cz3(),
)
print(f"converged = {short.converged}, final infidelity {short.final_infidelity:.3f}")
print("the optimizer cannot reach high fidelity no matter how long it runs")
