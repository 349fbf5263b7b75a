"""Drop users into the default layout and look at the rates they would get.

Run with ``python demos/01_rates.py``.
"""
import numpy as np

from hetassoc.model import build_rate_matrix, sample_channel, default_scenario

rng = np.random.default_rng(1)
sc = default_scenario(rng, 60)
ch = sample_channel(sc, rng)
rm = build_rate_matrix(sc, ch)

m = sc.macro_index
print(f"{sc.n_users} users, {sc.n_bs} base stations, macro at index {m}")
print(f"capacities: {sc.capacities.tolist()}")

macro = rm.rates[:, m]
picos = np.delete(rm.rates, m, axis=1)
print(f"macro rate      mean {macro.mean():.3f}  max {macro.max():.3f} bit/s/Hz")
covered = np.delete(rm.candidate_mask, m, axis=1)
print(f"pico rate       mean {picos[covered].mean():.3f}  max {picos.max():.3f} (covered links only)")
print(f"users with no pico in range: {int((~covered.any(axis=1)).sum())}")

# the macro serves everyone; the interference term makes users near a pico worse off there
quiet = build_rate_matrix(sc, ch, include_pico_interference=False)
print(f"macro rate without pico interference: mean {quiet.rates[:, m].mean():.3f}")

# a rate bias only scales the macro column
biased = build_rate_matrix(sc.with_rate_bias(m, 0.5), ch)
print("bias 0.5 halves the macro column:", np.allclose(biased.rates[:, m], 0.5 * macro))
