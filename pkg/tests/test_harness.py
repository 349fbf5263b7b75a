import math

import numpy as np
import pytest
from scipy import stats

from hetassoc.harness import (CSV_HEADER, ExperimentConfig, check_centralized, generate_scenario,
                              mean_ci, paired_difference, run_centralized_experiment,
                              run_experiment, run_game_experiment, run_joint_experiment)


def small(**kw):
    base = dict(k_values=(12, 24), trials=4, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_defaults_describe_the_reference_layout(self):
        cfg = ExperimentConfig()
        assert cfg.n_bs == 11 and cfg.area == (1000.0, 1000.0)
        assert (cfg.macro_antennas, cfg.macro_load, cfg.pico_antennas, cfg.pico_load) == (100, 10, 4, 4)
        assert cfg.macro_power_dbm == 40 and cfg.trials == 50
        assert len(cfg.weight_set) == 20

    @pytest.mark.parametrize("bad", [
        dict(trials=0), dict(k_values=(0, 5)), dict(k_values=()), dict(experiment="nope"),
        dict(algorithms=("simplex",)), dict(n_bs=0), dict(weight_set=(0.0, 1.0)),
    ])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"trails": 3})

    def test_dict_round_trip(self, tmp_path):
        cfg = small(experiment="joint", mandatory=True)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


class TestScenarioGeneration:
    def test_reference_drop(self):
        sc = generate_scenario(ExperimentConfig(), 0, 50)
        assert sc.n_bs == 11 and sc.n_users == 50
        assert sc.base_stations[sc.macro_index].position == (500.0, 500.0)

    def test_deterministic_and_separated(self):
        cfg = ExperimentConfig(seed=9)
        assert generate_scenario(cfg, 3, 20) == generate_scenario(cfg, 3, 20)
        assert generate_scenario(cfg, 0, 20) != generate_scenario(cfg, 1, 20)
        assert generate_scenario(cfg, 0, 20) != generate_scenario(ExperimentConfig(seed=10), 0, 20)


class TestStatistics:
    def test_mean_ci_matches_t_interval(self):
        x = np.random.default_rng(0).normal(3.0, 2.0, 17)
        m, hw = mean_ci(x)
        lo, hi = stats.t.interval(0.95, len(x) - 1, loc=x.mean(), scale=stats.sem(x))
        assert m == pytest.approx(x.mean())
        assert hw == pytest.approx((hi - lo) / 2, rel=1e-12)

    def test_degenerate(self):
        assert math.isnan(mean_ci([1.0])[1])
        assert math.isnan(mean_ci([])[0])

    def test_half_width_shrinks_like_root_n(self):
        rng = np.random.default_rng(1)
        hw100 = np.mean([mean_ci(rng.normal(size=100))[1] for _ in range(200)])
        hw400 = np.mean([mean_ci(rng.normal(size=400))[1] for _ in range(200)])
        assert hw100 / hw400 == pytest.approx(2.0, rel=0.1)


class TestCentralized:
    def test_records_and_dominance(self):
        res = run_centralized_experiment(small())
        assert len(res.records) == 2 * 4 * 7
        assert check_centralized(res) == []
        for K in (12, 24):
            assert np.all(res.values(K, "sumrate") >= res.values(K, "greedy1") - 1e-9)
            assert np.all(res.values(K, "greedy1") >= 0)
            assert np.all(res.values(K, "ub1") >= res.values(K, "propfair") - 1e-12)

    def test_validator_flags_broken_rows(self):
        from hetassoc.harness import ExperimentResult, TrialRecord
        res = ExperimentResult(small(), [TrialRecord(5, "sumrate", 0, 1.0), TrialRecord(5, "greedy1", 0, 2.0)])
        assert check_centralized(res)

    def test_mean_optimum_grows_with_users(self):
        res = run_centralized_experiment(small(k_values=(10, 40, 120), trials=10,
                                               algorithms=("sumrate",)))
        means = [res.values(K, "sumrate").mean() for K in (10, 40, 120)]
        assert means == sorted(means)

    def test_csv(self):
        res = run_centralized_experiment(small(algorithms=("sumrate", "greedy1")))
        lines = res.to_csv().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 1 + 2 * 4 * 2
        assert lines[1].split(",")[-1] == ""
        timed = res.to_csv(timing=True).splitlines()[1].split(",")[-1]
        assert float(timed) >= 0
        assert res.to_csv() == run_centralized_experiment(small(algorithms=("sumrate", "greedy1"))).to_csv()

    def test_summary(self):
        res = run_centralized_experiment(small(algorithms=("sumrate",)))
        s = res.summary()
        assert [(x.K, x.algorithm, x.n) for x in s] == [(12, "sumrate", 4), (24, "sumrate", 4)]
        m, hw = mean_ci(res.values(12, "sumrate"))
        assert s[0].mean == m and s[0].half_width == hw


class TestJoint:
    def test_optional_dominates_mandatory(self):
        # 10 + 4 x 4 slots, 20 users: feasible whenever coverage allows
        res = run_joint_experiment(small(experiment="joint", k_values=(20,), n_bs=5, trials=6,
                                         mandatory=True, coverage_radius=1500.0))
        opt = {r.trial: r.value for r in res.records if r.algorithm == "joint"}
        mand = {r.trial: r.value for r in res.records if r.algorithm == "joint-mandatory"}
        assert mand
        for t, v in mand.items():
            assert opt[t] >= v - 1e-12
        for r in res.records:
            if r.algorithm.startswith("joint-greedy"):
                assert r.value <= opt[r.trial] + 1e-9

    def test_infeasible_mandatory_trials_skipped(self):
        res = run_joint_experiment(small(experiment="joint", k_values=(60,), trials=2, mandatory=True))
        assert not [r for r in res.records if r.algorithm == "joint-mandatory"]


class TestGames:
    def test_probing_bound_and_traces(self):
        res = run_game_experiment(small(experiment="game", k_values=(30,), trials=5))
        bound = math.ceil(math.log2(20)) + 1
        price = [r for r in res.records if r.algorithm == "price"]
        assert len(price) == 5 and all(r.rounds <= bound for r in price)
        assert (30, "bidding", 0) in res.traces

    def test_mean_user_surplus_falls_while_probing(self):
        res = run_game_experiment(small(experiment="game", k_values=(50,), trials=20,
                                        algorithms=("price",)))
        traces = [res.traces[(50, "price", t)] for t in range(20)]
        n = min(sum(r["phase"] == "probe" for r in tr.rounds) for tr in traces)
        mean = np.mean([tr.column("user_utility_sum")[:n] for tr in traces], axis=0)
        assert np.all(np.diff(mean) <= 0)

    def test_bias_pairs_share_the_drop(self):
        res = run_experiment(small(experiment="bias", k_values=(40,), trials=3))
        labels = {r.algorithm for r in res.records}
        assert labels == {"bidding-bias1", "bidding-bias0.5"}
        m, hw, d = paired_difference(res, 40, "bidding-bias0.5", "bidding-bias1")
        assert d.shape == (3,) and m == pytest.approx(d.mean())
