"""The two market mechanisms on one drop: posted prices and bidding.

Run with ``python demos/04_games.py``.
"""
import numpy as np

from hetassoc.games import bidding_game_run, price_game_run, verify_ne, verify_stability
from hetassoc.harness import ExperimentConfig, rates_for

cfg = ExperimentConfig(seed=5)
sc, rm = rates_for(cfg, 0, 50)
w, cap = np.asarray(sc.weights), sc.capacities

p = price_game_run(rm, w, cfg.weight_set, cap)
print(f"price game: {p.rounds} probing rounds at most per user, converged={p.converged}")
for rec in p.trace.rounds:
    print(f"  round {rec['round']:2d} {rec['phase']:5s} provider {rec['provider_utility']:8.3f}"
          f"  users {rec['user_utility_sum']:8.3f}  connected {sum(j >= 0 for j in rec['connections'])}")
# a user whose links are all at or below rate 1 never accepts a positive price,
# so its weight cannot be told apart and stays at the lower end of its bracket
print("  users with any rate above 1:", int((rm.rates > 1).any(axis=1).sum()))
print("  weights learned exactly for", int(np.sum(p.estimates == w)), "of", w.size, "users")
print("  equilibrium check:", verify_ne(p.prices, p.assignment, rm, w, cap))

b = bidding_game_run(rm, w, cap)
print(f"bidding game: {b.rounds} rounds ({b.active_rounds} with movement), "
      f"provider {b.provider_utility:.3f}")
print("  stability check:", verify_stability(b.assignment, b.bids, cap))

# halving macro rates before bidding
biased = rm.rates.copy()
biased[:, sc.macro_index] *= 0.5
bb = bidding_game_run(biased, w, cap)
print(f"  with macro bias 0.5: provider {bb.provider_utility:.3f}")
