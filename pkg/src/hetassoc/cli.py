"""Command line entry point: ``hetassoc <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import assign, games, joint
from .harness import ExperimentConfig, rates_for, run_experiment
from .model import Scenario, build_rate_matrix, sample_channel
from .verify import SUITES, run_suite

SEED_ENV = "HETASSOC_SEED"

SOLVERS = ("sumrate", "propfair", "greedy1", "greedy2", "greedy1-log", "greedy2-log",
           "joint", "joint-mandatory", "joint-greedy1", "joint-greedy2")


def _common(suppress: bool) -> argparse.ArgumentParser:
    # the same global flags work before or after the command name
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default)
    p.add_argument("--config", default=default)
    p.add_argument("--out", default=default)
    p.add_argument("--format", choices=("csv", "jsonl"), default=default)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetassoc", parents=[_common(False)],
                                     description="User association in massive-MIMO HetNets.")
    sub = parser.add_subparsers(dest="command", required=True)
    flags = _common(True)

    g = sub.add_parser("generate", parents=[flags], help="emit a random scenario as JSON")
    g.add_argument("--users", type=int)
    g.add_argument("--trial", type=int, default=0)

    r = sub.add_parser("rates", parents=[flags], help="emit the rate matrix as CSV")
    _scenario_args(r)

    s = sub.add_parser("solve", parents=[flags], help="run one association algorithm")
    _scenario_args(s)
    s.add_argument("--alg", choices=SOLVERS, default="sumrate")

    gm = sub.add_parser("game", parents=[flags], help="run one game and emit its trace")
    _scenario_args(gm)
    gm.add_argument("--type", choices=("price", "bidding"), default="bidding")
    gm.add_argument("--verbose", action="store_true", help="include full matrices in the trace")

    e = sub.add_parser("experiment", parents=[flags], help="run a Monte-Carlo sweep")
    e.add_argument("--trials", type=int)
    e.add_argument("--k", type=int, nargs="+", dest="k_values")
    e.add_argument("--summary", help="also write per-(K, algorithm) means and CI half-widths here")
    e.add_argument("--timing", action="store_true", help="fill runtime_ms (output no longer reproducible)")

    v = sub.add_parser("verify", parents=[flags], help="run the oracle suite")
    v.add_argument("--suite", choices=sorted(SUITES), default="small-oracle")
    return parser


def _scenario_args(p):
    p.add_argument("--scenario", help="scenario JSON; a random drop from the config is used otherwise")
    p.add_argument("--users", type=int)
    p.add_argument("--trial", type=int, default=0)


def _config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    if args.seed is not None:
        doc["seed"] = args.seed
    elif os.environ.get(SEED_ENV):
        doc["seed"] = int(os.environ[SEED_ENV])
    for key in ("trials", "k_values"):
        if getattr(args, key, None) is not None:
            doc[key] = getattr(args, key)
    return ExperimentConfig.from_dict(doc)


def _rates(args, cfg):
    """Scenario and rate matrix from a file or from a seeded drop."""
    if args.scenario:
        sc = Scenario.load(args.scenario)
        seed = cfg.seed if (args.seed is not None or os.environ.get(SEED_ENV)) else sc.seed
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(args.trial), 1]))
        rm = build_rate_matrix(sc, sample_channel(sc, rng), cfg.include_pico_interference)
        return sc, rm
    K = args.users or cfg.k_values[0]
    return rates_for(cfg, args.trial, K)


def _solve(alg, rm, cap):
    if alg in ("sumrate", "propfair", "greedy1", "greedy2", "greedy1-log", "greedy2-log"):
        fn = {
            "sumrate": lambda: assign.sum_rate_optimal(rm, cap),
            "propfair": lambda: assign.propfair_optimal(rm, cap),
            "greedy1": lambda: assign.greedy_sum_rate(rm, cap),
            "greedy2": lambda: assign.greedy_sum_rate(rm, cap, per_bs=True),
            "greedy1-log": lambda: assign.greedy_propfair(rm, cap),
            "greedy2-log": lambda: assign.greedy_propfair(rm, cap, per_bs=True),
        }[alg]
        a, value = fn()
        return a, value, None
    if alg == "joint":
        r = joint.dual_decomposition(rm, cap)
        return r.assignment, r.value, r.beta.beta
    if alg == "joint-mandatory":
        r = joint.dual_decomposition_mandatory(rm, cap)
        return r.assignment, r.value, r.beta.beta
    a, beta = joint.greedy_joint_global(rm) if alg == "joint-greedy1" else joint.greedy_joint_per_bs(rm)
    return a, joint.joint_utility(a, beta, rm), beta.beta


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_generate(args, cfg):
    K = args.users or cfg.k_values[0]
    sc, _ = rates_for(cfg, args.trial, K)
    return sc.to_json() + "\n"


def _cmd_rates(args, cfg):
    _, rm = _rates(args, cfg)
    if args.format == "jsonl":
        return "".join(json.dumps({"user_id": k, "rates": [float(v) for v in row]}) + "\n"
                       for k, row in enumerate(rm.rates))
    return rm.to_csv()


def _cmd_solve(args, cfg):
    sc, rm = _rates(args, cfg)
    a, value, beta = _solve(args.alg, rm, sc.capacities)
    choice = a.choices
    if args.format == "jsonl":
        rec = {"algorithm": args.alg, "value": float(value),
               "assignment": [int(j) for j in choice]}
        if beta is not None:
            rec["beta"] = [float(beta[k, j]) if j >= 0 else 0.0 for k, j in enumerate(choice)]
        return json.dumps(rec, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("user_id", "bs_id", "value"))
    for k, j in enumerate(choice):
        if j >= 0:
            w.writerow((k, int(j), repr(float(value))))
    return buf.getvalue()


def _cmd_game(args, cfg):
    sc, rm = _rates(args, cfg)
    if args.type == "price":
        res = games.price_game_run(rm, sc.weights, cfg.weight_set, sc.capacities, epsilon=cfg.epsilon)
    else:
        res = games.bidding_game_run(rm, sc.weights, sc.capacities)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("round", "prices_or_bids_digest", "provider_utility", "user_utility_sum", "connected"))
        for r in res.trace.rounds:
            w.writerow((r["round"], games.digest(r["matrix"]), repr(float(r["provider_utility"])),
                        repr(float(r["user_utility_sum"])), int(np.sum(np.asarray(r["connections"]) >= 0))))
        return buf.getvalue()
    return res.trace.to_jsonl(verbose=args.verbose)


def _cmd_experiment(args, cfg):
    res = run_experiment(cfg)
    if args.summary:
        _emit(res.summary_csv(), args.summary)
    if args.format == "jsonl":
        return res.to_jsonl(timing=args.timing)
    return res.to_csv(timing=args.timing)


def _cmd_verify(args, cfg):
    lines, ok_all = [], True
    for label, ok, detail in run_suite(args.suite, cfg.seed):
        ok_all &= ok
        lines.append(f"{label}: {'PASS' if ok else 'FAIL'} ({detail})\n")
    return "".join(lines), 0 if ok_all else 1


COMMANDS = {
    "generate": _cmd_generate,
    "rates": _cmd_rates,
    "solve": _cmd_solve,
    "game": _cmd_game,
    "experiment": _cmd_experiment,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        cfg = _config(args)
        out = COMMANDS[args.command](args, cfg)
        code = 0
        if isinstance(out, tuple):
            out, code = out
        _emit(out, args.out)
        return code
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"hetassoc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
