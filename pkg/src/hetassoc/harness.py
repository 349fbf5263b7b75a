"""Seeded Monte-Carlo experiments over random HetNet drops.

Each trial draws its own generator from ``SeedSequence([seed, trial])``, so a
trial is reproducible on its own and results never depend on run order.
Per-trial records are aggregated into means with Student-t 95% half-widths.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from . import assign, games, joint
from .flow import InfeasibleError
from .model import RateMatrix, Scenario, build_rate_matrix, sample_channel, default_scenario

EXPERIMENTS = ("centralized", "joint", "game", "bias")

ALGORITHMS = {
    "centralized": ("sumrate", "greedy1", "greedy2", "propfair", "greedy1-log", "greedy2-log", "ub1"),
    "joint": ("joint", "joint-mandatory", "joint-greedy1", "joint-greedy2"),
    "game": ("price", "bidding"),
    "bias": ("bidding",),
}

DEFAULT_ALGORITHMS = {
    "centralized": ("sumrate", "greedy1", "greedy2", "propfair", "greedy1-log", "greedy2-log", "ub1"),
    "joint": ("joint", "joint-greedy1", "joint-greedy2"),
    "game": ("price", "bidding"),
    "bias": ("bidding",),
}

CSV_HEADER = ("K", "algorithm", "trial", "value", "rounds", "runtime_ms")


@dataclass
class ExperimentConfig:
    experiment: str = "centralized"
    k_values: tuple = (50, 100, 150, 200, 250)
    n_bs: int = 11
    area: tuple = (1000.0, 1000.0)
    macro_antennas: int = 100
    macro_load: int = 10
    pico_antennas: int = 4
    pico_load: int = 4
    macro_power_dbm: float = 40.0
    pico_power_dbm: float = 40.0
    coverage_radius: float = 300.0
    macro_rate_bias: float = 1.0
    include_pico_interference: bool = True
    algorithms: tuple | None = None
    theta: float = 1.0
    gamma: float = 10.0
    tol: float = 1e-4
    max_iter: int = 5000
    mandatory: bool = False
    weight_set: tuple = tuple(0.5 * np.arange(1, 21))
    epsilon: float = 1e-6
    bias_values: tuple = (1.0, 0.5)
    trials: int = 50
    seed: int = 0

    def __post_init__(self):
        self.k_values = tuple(int(k) for k in self.k_values)
        self.area = tuple(float(a) for a in self.area)
        self.weight_set = tuple(float(w) for w in self.weight_set)
        self.bias_values = tuple(float(b) for b in self.bias_values)
        if self.algorithms is not None:
            self.algorithms = tuple(self.algorithms)
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.k_values or min(self.k_values) < 1:
            raise ValueError("K values must be positive")
        if self.n_bs < 1:
            raise ValueError("need at least the macro BS")
        if not self.weight_set or min(self.weight_set) <= 0:
            raise ValueError("weights must be positive")
        unknown = set(self.selected_algorithms()) - set(ALGORITHMS[self.experiment])
        if unknown:
            raise ValueError(f"unknown algorithms for {self.experiment}: {sorted(unknown)}")

    def selected_algorithms(self) -> tuple:
        return self.algorithms if self.algorithms is not None else DEFAULT_ALGORITHMS[self.experiment]

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrialRecord:
    K: int
    algorithm: str
    trial: int
    value: float
    rounds: int | None = None
    runtime_ms: float | None = None


@dataclass(frozen=True)
class Summary:
    K: int
    algorithm: str
    n: int
    mean: float
    half_width: float


def mean_ci(values, confidence: float = 0.95) -> tuple[float, float]:
    """Sample mean and Student-t half-width (``nan`` for a single value)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    m = float(x.mean())
    if x.size < 2:
        return m, float("nan")
    se = float(x.std(ddof=1)) / math.sqrt(x.size)
    return m, float(stats.t.ppf(0.5 + confidence / 2, x.size - 1)) * se


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)

    def values(self, K: int, algorithm: str) -> np.ndarray:
        recs = sorted((r for r in self.records if r.K == K and r.algorithm == algorithm),
                      key=lambda r: r.trial)
        return np.array([r.value for r in recs])

    def summary(self) -> list[Summary]:
        keys = []
        for r in self.records:
            if (r.K, r.algorithm) not in keys:
                keys.append((r.K, r.algorithm))
        out = []
        for K, alg in keys:
            v = self.values(K, alg)
            m, hw = mean_ci(v)
            out.append(Summary(K, alg, len(v), m, hw))
        return out

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            rt = "" if not timing or r.runtime_ms is None else f"{r.runtime_ms:.3f}"
            w.writerow([r.K, r.algorithm, r.trial, repr(float(r.value)),
                        "" if r.rounds is None else r.rounds, rt])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("K", "algorithm", "n", "mean", "ci95_half_width"))
        for s in self.summary():
            w.writerow([s.K, s.algorithm, s.n, repr(s.mean), repr(s.half_width)])
        return buf.getvalue()

    def to_jsonl(self, timing: bool = False) -> str:
        lines = []
        for r in self.records:
            d = asdict(r)
            if not timing:
                d["runtime_ms"] = None
            lines.append(json.dumps(d, sort_keys=True) + "\n")
        return "".join(lines)


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial_index)]))


def generate_scenario(config: ExperimentConfig, trial_index: int, n_users: int | None = None,
                      rng: np.random.Generator | None = None) -> Scenario:
    """Random drop for one trial; the macro sits at the area center."""
    if rng is None:
        rng = trial_rng(config.seed, trial_index)
    K = config.k_values[0] if n_users is None else int(n_users)
    return default_scenario(
        rng, K, n_bs=config.n_bs, area=config.area, macro_antennas=config.macro_antennas,
        macro_load=config.macro_load, pico_antennas=config.pico_antennas,
        pico_load=config.pico_load, power_dbm=config.macro_power_dbm,
        pico_power_dbm=config.pico_power_dbm, coverage_radius=config.coverage_radius,
        macro_bias=config.macro_rate_bias, weight_set=config.weight_set, seed=config.seed)


def _trial_rates(config, trial, K):
    """Scenario plus rates; the channel draw continues the scenario's stream."""
    rng = trial_rng(config.seed, trial)
    sc = generate_scenario(config, trial, K, rng=rng)
    ch = sample_channel(sc, rng)
    return sc, ch, build_rate_matrix(sc, ch, config.include_pico_interference)


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, 1000.0 * (time.perf_counter() - t0)


def _centralized(alg, c, cap, config):
    if alg == "sumrate":
        return assign.sum_rate_optimal(c, cap)[1], None
    if alg == "greedy1":
        return assign.greedy_sum_rate(c, cap)[1], None
    if alg == "greedy2":
        return assign.greedy_sum_rate(c, cap, per_bs=True)[1], None
    if alg == "propfair":
        return assign.propfair_optimal(c, cap)[1], None
    if alg == "greedy1-log":
        return assign.greedy_propfair(c, cap)[1], None
    if alg == "greedy2-log":
        return assign.greedy_propfair(c, cap, per_bs=True)[1], None
    if alg == "ub1":
        return assign.ub1(c), None
    raise ValueError(alg)


def _joint(alg, c, cap, config):
    kw = dict(theta=config.theta, gamma=config.gamma, max_iter=config.max_iter, tol=config.tol)
    if alg == "joint":
        r = joint.dual_decomposition(c, cap, **kw)
        return r.value, r.iterations
    if alg == "joint-mandatory":
        r = joint.dual_decomposition_mandatory(c, cap, **kw)
        return r.value, r.iterations
    if alg == "joint-greedy1":
        a, beta = joint.greedy_joint_global(c)
        return joint.joint_utility(a, beta, c), None
    if alg == "joint-greedy2":
        a, beta = joint.greedy_joint_per_bs(c)
        return joint.joint_utility(a, beta, c), None
    raise ValueError(alg)


def _run_static(config, runner):
    res = ExperimentResult(config)
    for K in config.k_values:
        for trial in range(config.trials):
            sc, _, rm = _trial_rates(config, trial, K)
            for alg in config.selected_algorithms():
                (value, rounds), ms = _timed(runner, alg, rm, sc.capacities, config)
                res.records.append(TrialRecord(K, alg, trial, float(value), rounds, ms))
    return res


def run_centralized_experiment(config: ExperimentConfig) -> ExperimentResult:
    res = _run_static(config, _centralized)
    _raise_on(check_centralized(res))
    return res


def run_joint_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Dual decomposition against the joint greedy baselines.

    With ``config.mandatory`` the mandatory-association run is added; it is
    skipped (no record) on trials where some user cannot be placed.
    """
    algs = config.selected_algorithms()
    if config.mandatory and "joint-mandatory" not in algs:
        algs = algs + ("joint-mandatory",)

    res = ExperimentResult(config)
    for K in config.k_values:
        for trial in range(config.trials):
            sc, _, rm = _trial_rates(config, trial, K)
            for alg in algs:
                try:
                    (value, rounds), ms = _timed(_joint, alg, rm, sc.capacities, config)
                except InfeasibleError:
                    continue
                res.records.append(TrialRecord(K, alg, trial, float(value), rounds, ms))
    _raise_on(check_joint(res))
    return res


def run_game_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Price and bidding games per trial, or the paired rate-bias comparison.

    Traces are kept in ``result.traces[(K, algorithm, trial)]``.  For the
    bias experiment the algorithm label is ``bidding-bias<b>`` and the same
    drop and channel are reused for every bias value.
    """
    res = ExperimentResult(config)
    W = config.weight_set
    for K in config.k_values:
        for trial in range(config.trials):
            sc, ch, rm = _trial_rates(config, trial, K)
            if config.experiment == "bias":
                for b in config.bias_values:
                    biased = sc.with_rate_bias(sc.macro_index, b)
                    rmb = build_rate_matrix(biased, ch, config.include_pico_interference)
                    out, ms = _timed(games.bidding_game_run, rmb, sc.weights, sc.capacities)
                    label = f"bidding-bias{b:g}"
                    res.records.append(TrialRecord(K, label, trial, out.provider_utility, out.rounds, ms))
                    res.traces[(K, label, trial)] = out.trace
                continue
            for alg in config.selected_algorithms():
                if alg == "price":
                    out, ms = _timed(games.price_game_run, rm, sc.weights, W, sc.capacities,
                                     epsilon=config.epsilon)
                    rounds = out.rounds
                else:
                    out, ms = _timed(games.bidding_game_run, rm, sc.weights, sc.capacities)
                    rounds = out.rounds
                res.records.append(TrialRecord(K, alg, trial, out.provider_utility, rounds, ms))
                res.traces[(K, alg, trial)] = out.trace
    _raise_on(check_games(res))
    return res


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    if config.experiment == "centralized":
        return run_centralized_experiment(config)
    if config.experiment == "joint":
        return run_joint_experiment(config)
    return run_game_experiment(config)


def paired_difference(result: ExperimentResult, K: int, treated: str, baseline: str):
    """Mean and t half-width of per-trial ``treated - baseline``."""
    d = result.values(K, treated) - result.values(K, baseline)
    m, hw = mean_ci(d)
    return m, hw, d


# validators run before results are emitted

def _by_trial(result):
    table = {}
    for r in result.records:
        table.setdefault((r.K, r.trial), {})[r.algorithm] = r
    return table


def check_centralized(result: ExperimentResult, tol: float = 1e-9) -> list[str]:
    bad = []
    for (K, trial), row in _by_trial(result).items():
        v = {a: r.value for a, r in row.items()}
        for opt, greedy in (("sumrate", "greedy1"), ("sumrate", "greedy2"),
                            ("propfair", "greedy1-log"), ("propfair", "greedy2-log"),
                            ("ub1", "propfair")):
            if opt in v and greedy in v and v[greedy] > v[opt] + tol:
                bad.append(f"K={K} trial={trial}: {greedy} {v[greedy]} > {opt} {v[opt]}")
        if "greedy1" in v and v["greedy1"] < -tol:
            bad.append(f"K={K} trial={trial}: negative greedy sum rate")
    return bad


def check_joint(result: ExperimentResult, tol: float = 1e-9) -> list[str]:
    bad = []
    for (K, trial), row in _by_trial(result).items():
        v = {a: r.value for a, r in row.items()}
        if "joint" in v and "joint-mandatory" in v and v["joint-mandatory"] > v["joint"] + tol:
            bad.append(f"K={K} trial={trial}: mandatory beats optional")
    return bad


def check_games(result: ExperimentResult) -> list[str]:
    bad = []
    cfg = result.config
    bound = math.ceil(math.log2(len(set(cfg.weight_set)))) + 1 if len(set(cfg.weight_set)) > 1 else 1
    for r in result.records:
        if r.algorithm == "price" and r.rounds is not None and r.rounds > bound:
            bad.append(f"K={r.K} trial={r.trial}: {r.rounds} probing rounds > {bound}")
    return bad


def _raise_on(problems):
    if problems:
        raise RuntimeError("experiment invariant violated: " + "; ".join(problems[:5]))


def rates_for(config: ExperimentConfig, trial_index: int, n_users: int) -> tuple[Scenario, RateMatrix]:
    sc, _, rm = _trial_rates(config, trial_index, n_users)
    return sc, rm
