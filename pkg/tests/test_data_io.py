import numpy as np
import pytest

from rpslab.data_io import (
    DatasetError,
    DatasetFile,
    ModelAgent,
    OracleAgent,
    PreprocessConfig,
    RandomAgent,
    RawGame,
    RawRound,
    game_to_raw,
    import_tabular,
    load,
    preprocess,
    replay_eval,
    save,
    simulate_games,
)
from rpslab.dsl import DslModel, get_builtin
from rpslab.game import GameTrajectory, RoundRecord, payoff
from rpslab.models import NashModel


def test_save_load_round_trip_bytes(tmp_path):
    ds = simulate_games(RandomAgent(), bot_id=2, n_games=2, T=40, seed=5)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save(ds, p1)
    save(load(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_inconsistent_reward(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"schema_version":1,"agent_label":"x"}\n'
        '{"game_id":"g9","agent_label":"x","bot_id":1,"rounds":[[0,0,2,0]]}\n'
    )
    with pytest.raises(DatasetError, match="g9.*round 0"):
        load(path)


def test_load_rejects_string_actions(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"schema_version":1,"agent_label":"x"}\n'
        '{"game_id":"g0","agent_label":"x","bot_id":1,"rounds":[[0,"R","S",3]]}\n'
    )
    with pytest.raises(DatasetError, match="integers"):
        load(path)


def test_load_rejects_unknown_schema(tmp_path):
    path = tmp_path / "v2.jsonl"
    path.write_text('{"schema_version":99}\n')
    with pytest.raises(DatasetError, match="schema_version"):
        load(path)


def full_raw_game(game_id="ok", T=300):
    rounds = []
    rng = np.random.default_rng(1)
    for t in range(T):
        e, o = int(rng.integers(3)), int(rng.integers(3))
        rounds.append(RawRound(t, e, o, payoff(e, o)[0]))
    return RawGame(game_id=game_id, bot_id=4, rounds=rounds)


def test_preprocess_exclusions():
    short = RawGame("short", 1, [RawRound(t, 0, 0, 0) for t in range(49)])
    leaky = full_raw_game("leaky")
    for t in range(11):
        leaky.rounds[t].ego = None
        leaky.rounds[t].reward = None
    banned = full_raw_game("banned")
    ds, report = preprocess([short, leaky, banned, full_raw_game("keep")], PreprocessConfig(excluded_ids=("banned",)))
    assert [g.game_id for g in ds.games] == ["keep"]
    reasons = {e["game_id"]: e["reason"] for e in report["excluded"]}
    assert "fewer than 50" in reasons["short"]
    assert "more than 10" in reasons["leaky"]
    assert reasons["banned"] == "excluded_id"


def test_preprocess_deduction_and_imputation():
    raw = full_raw_game("g")
    raw.rounds[3] = RawRound(3, None, 1, 3)  # vs paper earning 3: must be scissors
    raw.rounds[5] = RawRound(5, None, None, None)  # nothing known: rock-vs-rock
    raw.rounds[7] = RawRound(7, None, 2, None)  # opp known, reward missing: rock-vs-rock
    ds, report = preprocess([raw])
    g = ds.games[0]
    assert (g.rounds[3].ego, g.rounds[3].opp, g.rounds[3].reward) == (2, 1, 3)
    assert (g.rounds[5].ego, g.rounds[5].opp, g.rounds[5].reward) == (0, 0, 0)
    assert (g.rounds[7].ego, g.rounds[7].opp, g.rounds[7].reward) == (0, 0, 0)
    assert report["deduced"] == 1
    assert report["imputed"] == 2


def test_preprocess_padding_and_idempotence():
    raw = full_raw_game("short_ok", T=120)
    ds, report = preprocess([raw])
    g = ds.games[0]
    assert g.T == 300
    assert report["padded"]["short_ok"] == 180
    assert all(r.ego == 0 and r.opp == 0 and r.reward == 0 for r in g.rounds[120:])
    g.validate()

    again, report2 = preprocess([game_to_raw(g)])
    assert again.games[0] == g
    assert report2["imputed"] == 0 and report2["deduced"] == 0 and not report2["padded"]


def test_simulate_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save(simulate_games(RandomAgent(), 1, 3, T=50, seed=9), a)
    save(simulate_games(RandomAgent(), 1, 3, T=50, seed=9), b)
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    save(simulate_games(RandomAgent(), 1, 3, T=50, seed=10), c)
    assert a.read_bytes() != c.read_bytes()


def test_simulate_round_counts():
    ds = simulate_games(RandomAgent(), bot_id=1, n_games=20, T=300, seed=0)
    assert sum(g.T for g in ds.games) == 6000
    wr = np.mean([g.win_rate() for g in ds.games])
    assert abs(wr - 1 / 3) < 0.03
    for g in ds.games:
        g.validate()


def test_simulate_unknown_bot():
    with pytest.raises(ValueError, match="unknown bot_id"):
        simulate_games(RandomAgent(), bot_id=99, n_games=1)


def test_replay_nash_one_third():
    ds = simulate_games(RandomAgent(), bot_id=5, n_games=10, T=150, seed=2)
    stats = replay_eval(NashModel(), np.zeros(0), ds.games, seed=0)
    assert abs(stats.aggregate[0] - 1 / 3) < 0.03


def test_replay_self_consistency():
    gen = DslModel(get_builtin("human_sbb"))
    theta_star = np.array([0.6, 1.5, 1.1, 2.2, 0.9])
    ds = simulate_games(ModelAgent(gen, theta_star), bot_id=6, n_games=10, T=300, seed=33)
    truth = np.mean([g.win_rate() for g in ds.games])
    stats = replay_eval(gen, theta_star, ds.games, seed=1)
    assert abs(stats.aggregate[0] - truth) < 0.05


def test_import_tabular(tmp_path):
    path = tmp_path / "toy.csv"
    rows = ["game,round,me,bot,pts"]
    for gid in ("A", "B"):
        for t in range(60):
            rows.append(f"{gid},{t},rock,PAPER,-1")
    rows[5] = "A,4,,PAPER,-1"  # missing player move -> imputation path
    path.write_text("\n".join(rows) + "\n")
    colmap = {"game_id": "game", "round": "round", "player_move": "me", "bot_move": "bot", "reward": "pts"}
    ds, report = import_tabular(path, colmap, PreprocessConfig(pad_to=60))
    assert len(ds.games) == 2
    g = ds.games[0]
    assert g.rounds[0].ego == 0 and g.rounds[0].opp == 1 and g.rounds[0].reward == -1
    # the blank cell is deducible: losing to paper means rock
    assert report["deduced"] == 1
    assert g.rounds[4].ego == 0


def test_import_tabular_bad_token(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("game,me,bot,pts\nA,lizard,rock,0\n")
    with pytest.raises(DatasetError, match="lizard"):
        import_tabular(path, {"game_id": "game", "player_move": "me", "bot_move": "bot", "reward": "pts"})


def test_import_tabular_missing_column():
    with pytest.raises(DatasetError, match="player_move"):
        import_tabular("nope.csv", {"game_id": "g", "bot_move": "b", "reward": "r"})
