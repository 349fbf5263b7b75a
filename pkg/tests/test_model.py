import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetassoc.model import (MACRO, PICO, BaseStation, ChannelState, RateMatrix, Scenario,
                            UserTerminal, build_rate_matrix, coverage_mask, dbm_to_linear,
                            default_scenario, macro_rate, path_loss, pico_rate_worstcase,
                            sample_channel)


def small_scenario(user_xy, pico_xy=(), bias=1.0, radius=300.0):
    bss = [BaseStation(0, MACRO, (500.0, 500.0), 100, 10, 10.0, rate_bias=bias)]
    bss += [BaseStation(i + 1, PICO, xy, 4, 4, 10.0) for i, xy in enumerate(pico_xy)]
    users = [UserTerminal(k, xy) for k, xy in enumerate(user_xy)]
    return Scenario(tuple(bss), tuple(users), coverage_radius=radius)


class TestPathLoss:
    def test_reference_points(self):
        assert path_loss(0, 3.5) == 1.0
        assert path_loss(40, 3.5) == pytest.approx(0.5, abs=1e-15)
        assert path_loss(80, 4) == pytest.approx(1 / 17, rel=1e-14)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            path_loss(-1.0, 4)

    @given(st.floats(0.5, 8.0))
    def test_strictly_decreasing_on_grid(self, kappa):
        d = np.linspace(0, 2000, 401)
        g = path_loss(d, kappa)
        assert g[0] == 1.0
        assert np.all(np.diff(g) < 0)


class TestRates:
    def test_macro_examples(self):
        assert macro_rate(100, 10, 10, 0.01, 0) == pytest.approx(math.log2(1.91), rel=1e-12)
        assert macro_rate(100, 10, 10, 0.0, 123.0) == 0.0
        assert macro_rate(10, 10, 1, 1, 0) == pytest.approx(0.13750352374993502, rel=1e-12)

    @pytest.mark.parametrize("L", [0, 11])
    def test_macro_load_out_of_range(self, L):
        with pytest.raises(ValueError):
            macro_rate(10, L, 1, 1, 0)

    def test_macro_monotone_in_load_and_interference(self):
        r_load = [macro_rate(100, L, 10, 0.05, 1.0) for L in range(1, 101)]
        assert np.all(np.diff(r_load) < 0)
        r_int = macro_rate(100, 10, 10, 0.05, np.linspace(0, 50, 51))
        assert np.all(np.diff(r_int) < 0)

    def test_pico_examples(self):
        assert pico_rate_worstcase(1, 1, 4, 1) == pytest.approx(math.log2(17), rel=1e-12)
        assert pico_rate_worstcase(1, 0, 4, 3) == 0.0
        assert pico_rate_worstcase(1, 1, 4, 3) == pytest.approx(math.log2(1 + 16 / 3), rel=1e-12)

    def test_pico_zero_coverage_rejected(self):
        with pytest.raises(ValueError):
            pico_rate_worstcase(1, 1, 4, 0)

    def test_pico_decreasing_in_coverage(self):
        r = [pico_rate_worstcase(10, 0.3, 3.6, n) for n in range(1, 30)]
        assert np.all(np.diff(r) < 0)

    @given(st.floats(0.01, 100), st.floats(0.0, 1.0), st.floats(0.0, 4.0))
    def test_pico_singleton_formula(self, P, l, g):
        expect = math.log2(1 + P * (l * l * g) ** 2)
        assert pico_rate_worstcase(P, l, g, 1) == pytest.approx(expect, rel=1e-12, abs=1e-15)


class TestChannel:
    def test_colocated_user_has_unit_gain(self):
        sc = small_scenario([(500.0, 500.0), (100.0, 100.0)])
        ch = sample_channel(sc, np.random.default_rng(0))
        assert ch.large_scale[0, 0] == 1.0

    def test_deterministic_for_seed(self):
        sc = default_scenario(np.random.default_rng(3), 30)
        a = sample_channel(sc, np.random.default_rng(11))
        b = sample_channel(sc, np.random.default_rng(11))
        assert np.array_equal(a.large_scale, b.large_scale)
        for x, y in zip(a.small_scale_power, b.small_scale_power):
            assert (x is None and y is None) or np.array_equal(x, y)

    def test_fading_only_on_picos_and_in_range(self):
        sc = default_scenario(np.random.default_rng(3), 30)
        ch = sample_channel(sc, np.random.default_rng(1))
        assert ch.small_scale_power[sc.macro_index] is None
        for j, g in enumerate(ch.small_scale_power):
            if j != sc.macro_index:
                assert g.shape == (30, 4)
                assert g.min() >= 0.8 and g.max() <= 1.0

    def test_fading_mean(self):
        bss = (BaseStation(0, MACRO, (500.0, 500.0), 100, 10, 10.0),
               BaseStation(1, PICO, (100.0, 100.0), 100, 4, 10.0))
        users = tuple(UserTerminal(k, (float(k % 1000), 3.0)) for k in range(1000))
        ch = sample_channel(Scenario(bss, users), np.random.default_rng(5))
        assert ch.small_scale_power[1].size == 100_000
        assert abs(ch.small_scale_power[1].mean() - 0.9) < 0.005

    def test_arrays_are_read_only(self):
        sc = small_scenario([(10.0, 10.0)])
        ch = sample_channel(sc, np.random.default_rng(0))
        with pytest.raises(ValueError):
            ch.large_scale[0, 0] = 2.0


class TestRateMatrix:
    def test_single_user_at_macro(self):
        sc = small_scenario([(500.0, 500.0)])
        rm = build_rate_matrix(sc, sample_channel(sc, np.random.default_rng(0)))
        assert rm.rates[0, 0] == pytest.approx(math.log2(92), rel=1e-12)

    def test_out_of_coverage_is_masked(self):
        sc = small_scenario([(10.0, 10.0), (900.0, 900.0)], pico_xy=[(20.0, 20.0)], radius=100)
        rm = build_rate_matrix(sc, sample_channel(sc, np.random.default_rng(0)))
        assert rm.candidate_mask.tolist() == [[True, True], [True, False]]
        assert rm.rates[1, 1] == 0.0
        assert rm.masked()[1, 1] == -np.inf

    def test_unit_fading_hand_formula(self):
        # two users inside one pico's coverage, fading forced to 1
        sc = small_scenario([(110.0, 100.0), (100.0, 160.0)], pico_xy=[(100.0, 100.0)])
        d = sc.distances()
        L = np.column_stack([path_loss(d[:, 0], 3.5), path_loss(d[:, 1], 4.0)])
        ch = ChannelState(L, (None, np.ones((2, 4))))
        rm = build_rate_matrix(sc, ch)
        for k in range(2):
            l = L[k, 1]
            expect = math.log2(1 + 10 * (l * l * 4) ** 2 / (1 + 10))
            assert rm.rates[k, 1] == pytest.approx(expect, rel=1e-12)
            interf = 10 * L[k, 1]
            assert rm.rates[k, 0] == pytest.approx(
                math.log2(1 + 9.1 * 10 * L[k, 0] / (1 + interf)), rel=1e-12)

    def test_pico_interference_switch(self):
        sc = small_scenario([(110.0, 100.0)], pico_xy=[(100.0, 100.0)])
        ch = sample_channel(sc, np.random.default_rng(0))
        with_i = build_rate_matrix(sc, ch)
        without = build_rate_matrix(sc, ch, include_pico_interference=False)
        assert without.rates[0, 0] > with_i.rates[0, 0]
        assert without.rates[0, 1] == with_i.rates[0, 1]

    def test_bias_halves_macro_column(self):
        sc = default_scenario(np.random.default_rng(8), 40)
        ch = sample_channel(sc, np.random.default_rng(9))
        a = build_rate_matrix(sc, ch)
        b = build_rate_matrix(sc.with_rate_bias(sc.macro_index, 0.5), ch)
        m = sc.macro_index
        assert np.array_equal(b.rates[:, m], 0.5 * a.rates[:, m])
        others = np.arange(sc.n_bs) != m
        assert np.array_equal(b.rates[:, others], a.rates[:, others])

    def test_finite_nonnegative_and_deterministic(self):
        sc = default_scenario(np.random.default_rng(1), 120)
        ch = sample_channel(sc, np.random.default_rng(2))
        a, b = build_rate_matrix(sc, ch), build_rate_matrix(sc, ch)
        assert np.array_equal(a.rates, b.rates)
        assert np.all(np.isfinite(a.rates)) and np.all(a.rates >= 0)
        assert np.all(a.rates[~a.candidate_mask] == 0)
        assert np.array_equal(a.candidate_mask, coverage_mask(sc))

    def test_rate_matrix_rejects_bad_values(self):
        with pytest.raises(ValueError):
            RateMatrix(np.array([[-1.0]]), np.array([[True]]))
        with pytest.raises(ValueError):
            RateMatrix(np.array([[np.nan]]), np.array([[True]]))

    def test_csv_header(self):
        rm = RateMatrix(np.array([[1.5, 0.0]]), np.array([[True, False]]))
        assert rm.to_csv().splitlines()[0] == "user_id,bs_0,bs_1"


class TestScenario:
    def test_reference_layout(self):
        sc = default_scenario(np.random.default_rng(0), 50)
        assert sc.n_bs == 11 and sc.n_users == 50
        macro = sc.base_stations[sc.macro_index]
        assert macro.position == (500.0, 500.0)
        assert (macro.antennas, macro.load_capacity) == (100, 10)
        assert macro.tx_power == pytest.approx(10.0)
        assert sum(b.kind == PICO for b in sc.base_stations) == 10
        assert all((b.antennas, b.load_capacity) == (4, 4) for b in sc.base_stations if b.kind == PICO)

    def test_dbm(self):
        assert dbm_to_linear(40) == pytest.approx(10.0)
        assert dbm_to_linear(30) == pytest.approx(1.0)

    def test_json_round_trip(self, tmp_path):
        sc = default_scenario(np.random.default_rng(4), 7, weight_set=(1.0, 2.5), macro_bias=0.5)
        p = tmp_path / "s.json"
        sc.save(p)
        back = Scenario.load(p)
        assert back == sc
        doc = json.loads(p.read_text())
        assert set(doc) == {"base_stations", "users", "area", "coverage_radius", "seed"}
        assert set(doc["base_stations"][0]) >= {"id", "kind", "x", "y", "antennas", "load",
                                                "power_dbm", "rate_bias"}
        assert doc["base_stations"][0]["power_dbm"] == pytest.approx(40.0)

    @pytest.mark.parametrize("bad", [
        dict(n_macros=2), dict(outside=True), dict(load_over=True),
    ])
    def test_validation(self, bad):
        bss = [BaseStation(0, MACRO, (500.0, 500.0), 100, 10, 10.0)]
        users = [UserTerminal(0, (1.0, 1.0))]
        with pytest.raises(ValueError):
            if "n_macros" in bad:
                bss.append(BaseStation(1, MACRO, (1.0, 1.0), 100, 10, 10.0))
                Scenario(tuple(bss), tuple(users))
            elif "outside" in bad:
                Scenario(tuple(bss), (UserTerminal(0, (1001.0, 1.0)),))
            else:
                BaseStation(1, PICO, (1.0, 1.0), 4, 5, 10.0)

    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1))
    def test_same_seed_same_scenario(self, seed):
        a = default_scenario(np.random.default_rng(seed), 5)
        b = default_scenario(np.random.default_rng(seed), 5)
        assert a == b
