import math

import numpy as np
import pytest

from rpslab.data_io import ModelAgent, RandomAgent, simulate_games
from rpslab.dsl import DslModel, get_builtin
from rpslab.evaluation import (
    cross_generalization,
    normalized_likelihood,
    partition,
    twofold_cv,
    wilcoxon_signed_rank,
    win_rate_stats,
)
from rpslab.fitting import FitConfig
from rpslab.game import GameTrajectory, RoundRecord, payoff
from rpslab.models import NashModel


def make_games(n, T=20, seed=0, bot_id=1):
    rng = np.random.default_rng(seed)
    games = []
    for i in range(n):
        rounds = []
        for t in range(T):
            e, o = int(rng.integers(3)), int(rng.integers(3))
            rounds.append(RoundRecord(t, e, o, payoff(e, o)[0]))
        games.append(GameTrajectory(f"g{i}", "rand", bot_id, rounds))
    return games


def test_partition_examples():
    games = make_games(4)
    train, eval_set = partition(games)
    assert [g.game_id for g in eval_set] == ["g0", "g2"]
    assert [g.game_id for g in train] == ["g1", "g3"]

    single = make_games(1)
    train, eval_set = partition(single)
    assert train == [] and len(eval_set) == 1

    for n in (1, 2, 7):
        train, eval_set = partition(make_games(n))
        assert len(train) + len(eval_set) == n


def test_normalized_likelihood_values():
    m = 120
    assert normalized_likelihood(m * math.log(3), m) == pytest.approx(1 / 3, abs=1e-15)
    assert normalized_likelihood(0.0, m) == 1.0
    assert normalized_likelihood(m * math.log(2), m) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        normalized_likelihood(1.0, 0)


def test_normalized_likelihood_strictly_decreasing():
    values = [normalized_likelihood(x, 50) for x in np.linspace(0, 100, 25)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_twofold_cv_nash_is_one_third():
    games = make_games(6, T=30, seed=1)
    for seed in (0, 1, 99):
        score = twofold_cv(NashModel(), games, FitConfig(seed=0), seed=seed)
        assert score.normalized_likelihood == pytest.approx(1 / 3, abs=1e-9)
        assert score.fold_scores[0] == pytest.approx(1 / 3, abs=1e-9)
    assert score.predictions == 6 * 29


def test_twofold_cv_deterministic_and_guarded():
    games = make_games(5, T=25, seed=2)
    m = DslModel(get_builtin("gptoss_sbb"))
    cfg = FitConfig(restarts=1, max_steps=100, window=30, seed=3)
    a = twofold_cv(m, games, cfg, seed=11)
    b = twofold_cv(m, games, cfg, seed=11)
    assert a == b
    with pytest.raises(ValueError, match="at least 2"):
        twofold_cv(m, games[:1], cfg, seed=0)


def test_twofold_cv_generator_beats_nash():
    gen = DslModel(get_builtin("gemini_sbb"))
    theta_star = np.array([0.8, 2.0, 1.2, 2.5, 0.8])
    ds = simulate_games(ModelAgent(gen, theta_star), bot_id=6, n_games=6, T=200, seed=17)
    cfg = FitConfig(restarts=2, max_steps=400, window=50, seed=5)
    score = twofold_cv(gen, ds.games, cfg, seed=1)
    nash = twofold_cv(NashModel(), ds.games, cfg, seed=1)
    assert score.normalized_likelihood >= nash.normalized_likelihood + 0.05


def test_win_rate_stats_all_win():
    rounds = [RoundRecord(t, 1, 0, 3) for t in range(30)]
    g = GameTrajectory("w", "x", 2, rounds)
    stats = win_rate_stats([g], window=10)
    assert stats.aggregate == (1.0, 0.0)
    assert stats.per_bot[2] == (1.0, 0.0)
    assert [w[1] for w in stats.over_time] == [1.0, 1.0, 1.0]


def test_win_rate_aggregate_is_mean_of_game_means():
    games = make_games(8, T=40, seed=4)
    stats = win_rate_stats(games, window=10)
    assert stats.aggregate[0] == pytest.approx(np.mean([g.win_rate() for g in games]))
    rows = stats.to_rows()
    assert any(r["kind"] == "over_time" for r in rows)


def test_random_vs_random_one_third():
    ds = simulate_games(RandomAgent(), bot_id=1, n_games=30, T=100, seed=3)
    stats = win_rate_stats(ds.games)
    assert abs(stats.aggregate[0] - 1 / 3) < 0.03


def test_wilcoxon_hand_ranked_example():
    # differences 1,-2,3,-4,5: |d| ranks are 1..5, positives get 1+3+5
    x = np.array([1.0, 0.0, 3.0, 0.0, 5.0])
    y = np.array([0.0, 2.0, 0.0, 4.0, 0.0])
    res = wilcoxon_signed_rank(x, y)
    assert res.w_plus == 9
    assert res.w_minus == 6
    assert res.statistic == 6
    assert res.p > 0.05  # tiny sample, no significance


def test_wilcoxon_identical_inputs_error():
    x = np.arange(10.0)
    with pytest.raises(ValueError, match="nonzero"):
        wilcoxon_signed_rank(x, x)


def test_wilcoxon_all_positive_n20():
    y = np.random.default_rng(0).normal(size=20)
    res = wilcoxon_signed_rank(y + 100, y)
    assert res.w_minus == 0
    assert res.p < 0.001
    # every difference equals 100, so the tie correction applies in full
    sigma2 = 20 * 21 * 41 / 24 - (20**3 - 20) / 48
    assert res.z == pytest.approx((0 - 20 * 21 / 4) / math.sqrt(sigma2), abs=1e-12)


def test_wilcoxon_ties_share_ranks():
    x = np.array([1.0, -1.0, 1.0, 2.0, -2.0, 3.0])
    res = wilcoxon_signed_rank(x, np.zeros(6))
    # |d| = 1,1,1,2,2,3 -> ranks 2,2,2,4.5,4.5,6
    assert res.w_plus == pytest.approx(2 + 2 + 4.5 + 6)
    assert res.w_minus == pytest.approx(2 + 4.5)


def test_cross_generalization_shape_and_nash_column():
    datasets = {
        "a": make_games(4, T=30, seed=6),
        "b": make_games(4, T=30, seed=7),
    }
    models = {"nash": NashModel(), "gptoss": DslModel(get_builtin("gptoss_sbb"))}
    cfg = FitConfig(restarts=1, max_steps=80, window=25, seed=0)
    matrix = cross_generalization(models, datasets, cfg, seed=1)
    assert matrix.dataset_names == ["a", "b"]
    assert matrix.program_names == ["nash", "gptoss"]
    for d in datasets:
        row = matrix.row(d)
        assert row["nash"].normalized_likelihood == pytest.approx(1 / 3, abs=1e-9)
    assert len(matrix.to_rows()) == 4
