import math

import numpy as np
import pytest

from skyjo_zero.engine import Rules, new_game
from skyjo_zero.evalstats import (
    PROBE_FEATURES,
    EvalError,
    bot_agent,
    bot_eval,
    elo_delta,
    head_to_head,
    linear_probe,
    net_agent,
    probe_features,
    probe_suite,
    wilson_interval,
    z_test,
)
from skyjo_zero.bots import CURRICULUM_NAMES, make_bot
from skyjo_zero.nets import MuZeroNet, NetConfig

# 1000-game match rows: (wins, CI low, CI high, Elo delta). The intervals and
# Elo values are the frozen reference results this module must reproduce.
MATCH_ROWS = [
    (360, 0.331, 0.390, -99),
    (422, 0.392, 0.453, -55),
    (668, 0.638, 0.696, 120),
    (742, 0.714, 0.768, 184),
    (753, 0.725, 0.779, 194),
    (690, 0.661, 0.718, 139),
    (811, 0.786, 0.834, 253),
]


def tiny_net(seed=0):
    cfg = NetConfig(
        layers=1, heads=2, d_model=8, ff_hidden=16, latent_dim=8,
        head_hidden=8, max_players=4,
    )
    return MuZeroNet(cfg, seed=seed)


class TestWilson:
    @pytest.mark.parametrize("wins,lo,hi,_elo", MATCH_ROWS)
    def test_reference_intervals(self, wins, lo, hi, _elo):
        got_lo, got_hi = wilson_interval(wins, 1000)
        assert got_lo == pytest.approx(lo, abs=1e-3)
        assert got_hi == pytest.approx(hi, abs=1e-3)

    def test_mirror_symmetry(self):
        for wins in (100, 360, 500, 753, 990):
            lo, hi = wilson_interval(wins, 1000)
            mlo, mhi = wilson_interval(1000 - wins, 1000)
            assert lo == pytest.approx(1 - mhi, abs=1e-12)
            assert hi == pytest.approx(1 - mlo, abs=1e-12)

    def test_bounds_and_coverage(self):
        for wins in (0, 1, 500, 999, 1000):
            lo, hi = wilson_interval(wins, 1000)
            assert 0.0 <= lo <= wins / 1000 <= hi <= 1.0

    def test_zero_games_rejected(self):
        with pytest.raises(EvalError):
            wilson_interval(0, 0)


class TestZTest:
    @pytest.mark.parametrize(
        "wins,expected",
        [(753, 16.0), (668, 10.6), (811, 19.7), (690, 12.0)],
    )
    def test_reference_values(self, wins, expected):
        assert z_test(wins, 1000) == pytest.approx(expected, abs=0.05)

    def test_null_case(self):
        assert z_test(500, 1000) == 0.0

    def test_zero_games_rejected(self):
        with pytest.raises(EvalError):
            z_test(0, 0)


class TestElo:
    @pytest.mark.parametrize("wins,_lo,_hi,elo", MATCH_ROWS)
    def test_reference_values(self, wins, _lo, _hi, elo):
        assert elo_delta(wins / 1000) == pytest.approx(elo, abs=2)

    def test_antisymmetry(self):
        for wr in (0.1, 0.36, 0.5, 0.69, 0.92):
            assert elo_delta(wr) == pytest.approx(-elo_delta(1 - wr), abs=1e-9)

    def test_even_match_is_zero(self):
        assert elo_delta(0.5) == 0.0

    def test_boundary_sentinels(self):
        assert elo_delta(0.0) == -math.inf
        assert elo_delta(1.0) == math.inf


class TestHeadToHead:
    def test_identical_bots_split_exactly(self):
        agent = bot_agent(make_bot("greedy-value"))
        report = head_to_head(agent, agent, games=40)
        # paired seeds + seat swap: a mirror match cannot be lopsided
        assert report.wins_a == report.wins_b
        assert report.wins_a + report.wins_b + report.draws == 40

    def test_deterministic_given_seeds(self):
        a = bot_agent(make_bot("risk-aware"))
        b = bot_agent(make_bot("info-first"))
        seeds = list(range(10))
        r1 = head_to_head(a, b, games=20, seeds=seeds)
        r2 = head_to_head(a, b, games=20, seeds=seeds)
        assert (r1.wins_a, r1.wins_b, r1.draws) == (r2.wins_a, r2.wins_b, r2.draws)

    def test_insufficient_seeds_rejected(self):
        agent = bot_agent(make_bot("greedy-value"))
        with pytest.raises(EvalError):
            head_to_head(agent, agent, games=20, seeds=[1, 2])

    def test_bot_eval_random_agent_below_par(self):
        agg = bot_eval(bot_agent(make_bot("random")), games_per_bot=10)
        assert agg["games"] == 60
        assert agg["win_rate"] < 0.45
        assert 0.0 <= agg["truncation_rate"] <= 1.0
        assert agg["mean_episode_length"] > 0
        assert set(agg["per_bot"]) == set(CURRICULUM_NAMES)

    def test_match_report_counts_consistent(self):
        a = bot_agent(make_bot("greedy-value"))
        b = bot_agent(make_bot("random"))
        report = head_to_head(a, b, games=30)
        assert report.wins_a + report.wins_b + report.draws == report.games
        lo, hi = report.wilson
        assert lo <= report.win_rate <= hi

    def test_identical_net_agents_mirror(self):
        net = tiny_net()
        agent_a = net_agent(net, simulations=4)
        agent_b = net_agent(net, simulations=4)
        # short step cap: an untrained argmax policy can cycle, and truncated
        # games are decided by totals either way
        report = head_to_head(
            agent_a, agent_b, games=8, rules=Rules(step_cap=150)
        )
        assert report.wins_a == report.wins_b
        lo, hi = report.wilson
        assert lo <= 0.5 <= hi


class TestLinearProbe:
    def test_noiseless_linear_feature(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 8))
        w = rng.normal(size=8)
        y = X @ w + 3.0
        result = linear_probe(X, y)
        assert not result.flagged
        assert result.r2 > 0.999

    def test_random_feature_near_zero(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(2000, 8))
        y = rng.normal(size=2000)
        result = linear_probe(X, y)
        assert abs(result.r2) <= 0.05

    def test_constant_feature_flagged(self):
        X = np.random.default_rng(2).normal(size=(100, 4))
        result = linear_probe(X, np.full(100, 7.0))
        assert result.flagged
        assert result.r2 == 0.0

    def test_negative_r2_possible(self):
        # anti-correlated train/test split can do worse than the mean
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 30))
        y = rng.normal(size=50)  # heavy overfit regime
        result = linear_probe(X, y)
        assert result.r2 < 0.5  # typically negative; never spuriously high

    def test_shape_mismatch_rejected(self):
        with pytest.raises(EvalError):
            linear_probe(np.zeros((10, 3)), np.zeros(9))

    def test_too_few_samples_rejected(self):
        with pytest.raises(EvalError):
            linear_probe(np.zeros((6, 3)), np.zeros(6))


class TestProbeFeatures:
    def test_fresh_game_oracle(self):
        state = new_game(2, seed=0)
        feats = probe_features(state, ego=0)
        # two auto-reveals per player at deal time
        assert feats["own_face_down_count"] == 10.0
        assert feats["opponent_face_down_count"] == 10.0
        # 150 cards - 24 dealt - 1 discard seed
        assert feats["deck_size"] == 125.0
        assert feats["visible_card_sum"] == float(
            state.grids[0].visible_score()
        )
        own_total = sum(state.grids[0].cards)
        opp_total = sum(state.grids[1].cards)
        assert feats["score_advantage"] == float(opp_total - own_total)
        assert feats["own_hidden_sum"] + feats["visible_card_sum"] == own_total

    def test_feature_list_has_seven(self):
        assert len(PROBE_FEATURES) == 7


class TestProbeSuite:
    def test_smoke_report(self):
        report = probe_suite(tiny_net(), games=2, seed=0)
        assert report.num_games == 2
        assert report.num_steps > 50
        assert set(report.results) == set(PROBE_FEATURES)
        for per_latent in report.results.values():
            assert set(per_latent) == {"pre_ego", "post_ego"}
            for result in per_latent.values():
                assert np.isfinite(result.r2)
