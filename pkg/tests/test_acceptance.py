"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hetassoc.assign import (MANDATORY, OPTIONAL, brute_force_assignment, propfair_optimal,
                             solve_max_weight, ub1)
from hetassoc.flow import InfeasibleError
from hetassoc.games import bidding_game_run, price_game_run, verify_ne, verify_stability
from hetassoc.harness import ExperimentConfig, paired_difference, run_experiment
from hetassoc.joint import (brute_force_joint, dual_decomposition, dual_decomposition_mandatory,
                            equal_share_beta)
from hetassoc.verify import random_instance

ROOT = Path(__file__).resolve().parents[1]
W20 = 0.5 * np.arange(1, 21)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
        return ok
    return emit


@pytest.fixture(scope="module")
def small_instances():
    rng = np.random.default_rng(np.random.SeedSequence([2016, 1]))
    return [random_instance(rng, max_users=10, max_bs=4, max_cap=3) for _ in range(1000)]


def test_1_oracle_exactness(small_instances, report):
    t0 = time.perf_counter()
    bad, checked_mandatory = [], 0
    for i, (c, cap) in enumerate(small_instances):
        w = np.where(c > 0, c, -np.inf)
        v = np.where(c > 0, c, 0.0)
        fast = solve_max_weight(w, cap, OPTIONAL)
        slow = brute_force_assignment(w, cap, OPTIONAL)
        if abs(fast.value(v) - slow.value(v)) > 1e-9 or fast.violations(cap, c > 0):
            bad.append(i)
        try:
            slow_m = brute_force_assignment(w, cap, MANDATORY)
        except InfeasibleError:
            continue
        checked_mandatory += 1
        fast_m = solve_max_weight(w, cap, MANDATORY)
        if (abs(fast_m.value(v) - slow_m.value(v)) > 1e-9 or fast_m.violations(cap, c > 0)
                or np.any(fast_m.x.sum(axis=1) != 1)):
            bad.append(i)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 30
    assert report(1, ok, f"{len(small_instances)} optional + {checked_mandatory} mandatory instances, "
                         f"{len(bad)} mismatches, {elapsed:.1f}s")


def test_2_integrality(small_instances, report):
    bad = 0
    for c, cap in small_instances:
        x = solve_max_weight(np.where(c > 0, c, -np.inf), cap).x
        bad += not set(np.unique(x)) <= {0, 1}
    assert report(2, bad == 0, f"{bad} non-binary solutions over {len(small_instances)} instances")


def test_3_propfair_equivalence(small_instances, report):
    bad_eq = bad_ub = 0
    for c, cap in small_instances:
        a, v = propfair_optimal(c, cap)
        eta = (a.x * c).sum(axis=1)
        served = a.x.sum(axis=1) == 1
        per_user = float(np.log2(eta[served]).sum())  # unserved users contribute 0
        per_link = float(np.log2(c[a.x == 1]).sum())
        bad_eq += abs(per_user - per_link) > 1e-9 or abs(v - per_link) > 1e-9
        bad_ub += v > ub1(c) + 1e-9
    ok = bad_eq == 0 and bad_ub == 0
    assert report(3, ok, f"{bad_eq} equivalence and {bad_ub} bound violations")


def test_4_dominance_trends(report):
    t0 = time.perf_counter()
    K = (50, 100, 150, 200, 250)
    cfg = ExperimentConfig(experiment="centralized", k_values=K, trials=50, seed=2016,
                           algorithms=("sumrate", "greedy1", "greedy2"))
    res = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    tol = 1e-9  # summation order alone separates equal-valued assignments by ~1e-13
    dom_bad = 0
    means, gaps = [], []
    for k in K:
        opt, g1, g2 = (res.values(k, a) for a in ("sumrate", "greedy1", "greedy2"))
        dom_bad += int(np.sum(opt < g1 - tol) + np.sum(g1 < -tol) + np.sum(opt < g2 - tol))
        means.append(opt.mean())
        gaps.append(float(np.mean((opt - g1) / opt)))
    mean_up = all(b >= a for a, b in zip(means, means[1:]))
    gap_down = all(b <= a for a, b in zip(gaps, gaps[1:]))
    ok = dom_bad == 0 and mean_up and gap_down and elapsed < 300
    detail = (f"dominance violations {dom_bad}; mean optimum "
              + ", ".join(f"{m:.2f}" for m in means)
              + " (nondecreasing)" * mean_up + " (NOT nondecreasing)" * (not mean_up)
              + "; mean relative gap " + ", ".join(f"{g:.2e}" for g in gaps)
              + " (nonincreasing)" * gap_down + " (NOT nonincreasing)" * (not gap_down)
              + f"; K=250 vs K=50 gap {'lower' if gaps[-1] <= gaps[0] else 'higher'}"
              + f"; {elapsed:.1f}s")
    assert report(4, ok, detail)


def test_5_joint_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence([2016, 5]))
    worst, bad = 0.0, 0
    for _ in range(200):
        c, cap = random_instance(rng, max_users=8, max_bs=3, max_cap=3)
        r = dual_decomposition(c, cap, theta=1.0, gamma=10.0, max_iter=5000)
        _, _, best = brute_force_joint(c, cap)
        err = abs(r.value - best)
        worst = max(worst, err)
        structural = (set(np.unique(r.assignment.x)) <= {0, 1}
                      and np.array_equal(r.beta.beta, equal_share_beta(r.assignment).beta))
        bad += err > 1e-3 or not structural
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 120
    assert report(5, ok, f"{bad} failures over 200 instances, worst gap {worst:.2e}, {elapsed:.1f}s")


def test_6_optional_vs_mandatory(report):
    rng = np.random.default_rng(np.random.SeedSequence([2016, 6]))
    feasible = bad = 0
    for _ in range(500):
        c, cap = random_instance(rng, max_users=8, max_bs=3, max_cap=3)
        try:
            mand = dual_decomposition_mandatory(c, cap).value
        except InfeasibleError:
            continue
        feasible += 1
        bad += dual_decomposition(c, cap).value < mand
    assert report(6, bad == 0, f"{bad} violations over {feasible} feasible of 500 instances")


def test_7_price_game_ne(report):
    rng = np.random.default_rng(np.random.SeedSequence([2016, 7]))
    limit = math.ceil(math.log2(W20.size)) + 2
    fails = {"rounds": 0, "user": 0, "provider": 0, "ne": 0}
    max_probe = 0
    for _ in range(100):
        c, cap = random_instance(rng, max_users=6, max_bs=3, max_cap=3)
        w = rng.choice(W20, c.shape[0])
        r = price_game_run(c, w, W20, cap)
        max_probe = max(max_probe, int(r.probe_rounds.max()))
        fails["rounds"] += bool(not r.converged or r.probe_rounds.max() > limit)
        served = r.assignment.choices >= 0
        fails["user"] += bool(np.any(np.abs(r.user_utilities[served]) > 1e-9))
        V = np.where(c > 0, w[:, None] * np.log2(np.where(c > 0, c, 1.0)), -np.inf)
        best = brute_force_assignment(V, cap, OPTIONAL).value(np.where(np.isfinite(V), V, 0.0))
        fails["provider"] += abs(r.provider_utility - best) > 1e-9
        fails["ne"] += not verify_ne(r.prices, r.assignment, c, w, cap)[0]
    ok = not any(fails.values())
    assert report(7, ok, f"failures {fails}; max probing rounds {max_probe} (limit {limit})")


def test_8_bidding_stability(report):
    rng = np.random.default_rng(np.random.SeedSequence([2016, 8]))
    fails = {"rounds": 0, "stability": 0, "bids": 0, "floors": 0, "provider": 0}
    with_quiet = 0
    for _ in range(500):
        c, cap = random_instance(rng, max_users=10, max_bs=4, max_cap=3)
        w = rng.choice(W20, c.shape[0])
        r = bidding_game_run(c, w, cap)
        # the final round only confirms that nothing moved; the bound applies to the rounds before it
        fails["rounds"] += not r.converged or r.active_rounds > c.size
        with_quiet += r.rounds > c.size
        fails["stability"] += not verify_stability(r.assignment, r.bids, cap)[0]
        fails["bids"] += any(b > a for h in r.bid_history for a, b in zip(h, h[1:]))
        floors = np.array(r.trace.column("list_minimum"))
        fails["floors"] += bool(np.any(np.diff(floors, axis=0) < 0))
        pu = r.trace.column("provider_utility")
        fails["provider"] += any(b < a - 1e-12 for a, b in zip(pu, pu[1:]))
    ok = not any(fails.values())
    assert report(8, ok, f"failures {fails}; {with_quiet} runs exceed K*J when the confirming round is counted")


def test_9_rate_bias(report):
    K = (50, 100, 150, 200, 250)
    cfg = ExperimentConfig(experiment="bias", k_values=K, trials=30, seed=2016)
    res = run_experiment(cfg)
    parts, ok = [], True
    for k in K:
        m, hw, d = paired_difference(res, k, "bidding-bias0.5", "bidding-bias1")
        ok &= m - hw > 0
        parts.append(f"K={k}: {m:+.3f} +/- {hw:.3f} (n={d.size})")
    assert report(9, ok, "biased minus unbiased provider utility, 95% CI: " + "; ".join(parts))


def test_10_cli_determinism(tmp_path, report):
    env_cfg = str(ROOT / "configs" / "smoke.json")
    scenario = tmp_path / "scenario.json"
    calls = [
        ["generate", "--users", "30", "--seed", "4"],
        ["rates", "--users", "30", "--seed", "4"],
        ["rates", "--scenario", str(scenario)],
        ["solve", "--alg", "sumrate", "--users", "40", "--seed", "4"],
        ["solve", "--alg", "joint", "--users", "40", "--seed", "4", "--format", "jsonl"],
        ["game", "--type", "price", "--users", "25", "--seed", "4", "--verbose"],
        ["game", "--type", "bidding", "--users", "25", "--seed", "4", "--verbose"],
        ["experiment", "--config", env_cfg],
        ["experiment", "--config", env_cfg, "--format", "jsonl"],
    ]
    subprocess.run([sys.executable, "-m", "hetassoc.cli", "generate", "--users", "20", "--seed", "9",
                    "--out", str(scenario)], check=True)
    differing = []
    for i, argv in enumerate(calls):
        outs = []
        for rep in range(2):
            path = tmp_path / f"out{i}_{rep}"
            subprocess.run([sys.executable, "-m", "hetassoc.cli", *argv, "--out", str(path)], check=True)
            outs.append(path.read_bytes())
        if outs[0] != outs[1] or not outs[0]:
            differing.append(" ".join(argv[:1]))
    assert report(10, not differing, f"{len(calls)} invocations, non-identical: {differing or 'none'}")
