"""Joint association and resource sharing through the dual method.

Run with ``python demos/03_joint.py``.
"""
import numpy as np

from hetassoc.harness import ExperimentConfig, rates_for
from hetassoc.joint import (brute_force_joint, dual_decomposition, greedy_joint_global,
                            greedy_joint_per_bs, joint_utility)

# a toy instance small enough to check by enumeration
c = np.array([[3.0, 1.5], [2.0, 4.0], [5.0, 0.5], [2.5, 2.5]])
cap = [2, 2]
r = dual_decomposition(c, cap)
_, _, best = brute_force_joint(c, cap)
print(f"toy: dual {r.value:.6f} after {r.iterations} iterations, exhaustive {best:.6f}")
print("choices", r.assignment.choices.tolist())
print("shares ", np.round(r.beta.beta, 3).tolist())
print("final multipliers", np.round(r.trace.lam[-1], 4).tolist())

# the default layout
sc, rm = rates_for(ExperimentConfig(seed=3), 0, 100)
r = dual_decomposition(rm, sc.capacities)
g1 = joint_utility(*greedy_joint_global(rm), rm)
g2 = joint_utility(*greedy_joint_per_bs(rm), rm)
print(f"K=100: dual {r.value:.4f}  greedy-global {g1:.4f}  greedy-per-BS {g2:.4f}")
# a user whose best share-adjusted rate is below 1 only lowers the log objective,
# so with rates this small very few users are worth serving
print(f"users served: {int(r.assignment.x.sum())}, users with any rate above 1: {int((rm.rates > 1).any(axis=1).sum())}")
