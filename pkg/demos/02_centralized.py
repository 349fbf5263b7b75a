"""Exact association versus the two greedy heuristics, for both objectives.

Run with ``python demos/02_centralized.py``.
"""
import numpy as np

from hetassoc.assign import (greedy_propfair, greedy_sum_rate, propfair_optimal, sum_rate_optimal,
                             ub1)
from hetassoc.harness import ExperimentConfig, rates_for

cfg = ExperimentConfig(seed=3)
print(" K   sum-rate  greedy1  greedy2 | propfair  greedy1  greedy2      ub1")
for K in (50, 100, 150, 200, 250):
    sc, rm = rates_for(cfg, 0, K)
    cap = sc.capacities
    row = [sum_rate_optimal(rm, cap)[1], greedy_sum_rate(rm, cap)[1],
           greedy_sum_rate(rm, cap, per_bs=True)[1], propfair_optimal(rm, cap)[1],
           greedy_propfair(rm, cap)[1], greedy_propfair(rm, cap, per_bs=True)[1], ub1(rm)]
    print(f"{K:3d} " + " ".join(f"{v:8.3f}" for v in row[:3]) + " | "
          + " ".join(f"{v:8.3f}" for v in row[3:]))

# with 50 slots in total, at most 50 users are ever served
a, _ = sum_rate_optimal(rm, cap)
print("served per BS at K=250:", np.bincount(a.choices[a.choices >= 0], minlength=sc.n_bs).tolist())
