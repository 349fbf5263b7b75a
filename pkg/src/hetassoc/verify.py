"""Small-instance oracle suite: fast solvers against exhaustive search."""

from __future__ import annotations

import math

import numpy as np

from . import assign, games, joint
from .flow import InfeasibleError


def random_instance(rng, max_users=8, max_bs=3, max_cap=3, zero_frac=0.2):
    K = int(rng.integers(1, max_users + 1))
    J = int(rng.integers(1, max_bs + 1))
    c = rng.uniform(0.5, 20.0, (K, J))
    c[rng.random((K, J)) < zero_frac] = 0.0
    cap = rng.integers(1, max_cap + 1, J)
    return c, cap


def check_assignment(rng, n=200):
    bad = 0
    for _ in range(n):
        c, cap = random_instance(rng, 10, 4, 3)
        w = np.where(c > 0, c, -np.inf)
        for mode in (assign.OPTIONAL, assign.MANDATORY):
            try:
                fast = assign.solve_max_weight(w, cap, mode)
            except InfeasibleError:
                try:
                    assign.brute_force_assignment(w, cap, mode)
                    bad += 1
                except InfeasibleError:
                    pass
                continue
            slow = assign.brute_force_assignment(w, cap, mode)
            v = np.where(c > 0, c, 0.0)
            if abs(fast.value(v) - slow.value(v)) > 1e-9 or fast.violations(cap, c > 0):
                bad += 1
    return bad == 0, f"{bad} mismatches"


def check_joint(rng, n=40):
    bad = 0
    for _ in range(n):
        c, cap = random_instance(rng, 6, 3, 3)
        r = joint.dual_decomposition(c, cap)
        _, _, best = joint.brute_force_joint(c, cap)
        if abs(r.value - best) > 1e-3:
            bad += 1
    return bad == 0, f"{bad} mismatches"


def check_price_game(rng, n=50):
    W = 0.5 * np.arange(1, 21)
    limit = math.ceil(math.log2(W.size)) + 2
    bad = 0
    for _ in range(n):
        c, cap = random_instance(rng, 6, 3, 2)
        w = rng.choice(W, c.shape[0])
        r = games.price_game_run(c, w, W, cap)
        ok, _ = games.verify_ne(r.prices, r.assignment, c, w, cap)
        if not ok or r.rounds > limit or np.any(np.abs(r.user_utilities) > 1e-9):
            bad += 1
    return bad == 0, f"{bad} failures"


def check_bidding(rng, n=200):
    bad = 0
    W = 0.5 * np.arange(1, 21)
    for _ in range(n):
        c, cap = random_instance(rng, 8, 4, 3)
        w = rng.choice(W, c.shape[0])
        r = games.bidding_game_run(c, w, cap)
        ok, _ = games.verify_stability(r.assignment, r.bids, cap)
        if not ok or not r.converged or r.active_rounds > c.size:
            bad += 1
    return bad == 0, f"{bad} failures"


SUITES = {
    "small-oracle": (("assignment", check_assignment), ("joint", check_joint),
                     ("price-game", check_price_game), ("bidding-game", check_bidding)),
}


def run_suite(name: str, seed: int = 0):
    """Yield ``(check, ok, detail)`` for every check in the suite."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    for i, (label, fn) in enumerate(SUITES[name]):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        ok, detail = fn(rng)
        yield label, ok, detail
