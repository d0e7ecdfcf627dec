"""Acceptance suite: one test per criterion, printing one PASS/FAIL line each.

Run it alone with ``pytest tests/test_acceptance.py -v -s``.  Expected wall
time is dominated by the model-recovery search (a 500-candidate evolutionary
run, typically 15-25 minutes); everything else finishes in a couple of
minutes.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from rpslab.bots import default_roster
from rpslab.cli import main as cli_main
from rpslab.data_io import (
    DatasetFile,
    ModelAgent,
    OracleAgent,
    RandomAgent,
    RawGame,
    RawRound,
    game_to_raw,
    preprocess,
    replay_eval,
    save,
    simulate_games,
)
from rpslab.discovery import Archive, Candidate, brute_force_frontier, sbb
from rpslab.dsl import BinOp, Const, DslModel, Param, ProgramAST, check_valid, get_builtin, halstead
from rpslab.evaluation import partition, twofold_cv, wilcoxon_signed_rank, win_rate_stats
from rpslab.fitting import FitConfig
from rpslab.game import ACTIONS, Outcome, TransitionKind, apply_transition, beats, classify_transition, outcome, payoff
from rpslab.models import CsEwaParams, CsEwaState, csewa_retrospective_update
from rpslab.data_io import PreprocessConfig

pytestmark = pytest.mark.acceptance

FRONTEND_DIR = Path(__file__).resolve().parent.parent / "frontend"


@contextmanager
def criterion(name: str):
    started = time.time()
    try:
        yield
    except Exception:
        print(f"\n[FAIL] {name}", flush=True)
        raise
    print(f"\n[PASS] {name} ({time.time() - started:.1f}s)", flush=True)


# --- primary criteria -------------------------------------------------------

def test_payoff_table():
    with criterion("payoff table matches the 3x3 reward matrix; beats/outcome consistent"):
        expected = {
            (0, 0): (0, 0), (0, 1): (-1, 3), (0, 2): (3, -1),
            (1, 0): (3, -1), (1, 1): (0, 0), (1, 2): (-1, 3),
            (2, 0): (-1, 3), (2, 1): (3, -1), (2, 2): (0, 0),
        }
        for (e, o), want in expected.items():
            assert payoff(e, o) == want
        for a in ACTIONS:
            assert payoff(beats(a), a)[0] == 3
            assert outcome(beats(a), a) is Outcome.WIN
            assert outcome(a, a) is Outcome.TIE
            assert outcome(a, beats(a)) is Outcome.LOSS


def test_transition_algebra():
    with criterion("transition algebra: apply/classify round-trip on all pairs"):
        for prev in ACTIONS:
            for nxt in ACTIONS:
                assert apply_transition(prev, classify_transition(prev, nxt)) == nxt
            for kind in TransitionKind:
                assert classify_transition(prev, apply_transition(prev, kind)) is kind
            assert apply_transition(prev, TransitionKind.POSITIVE) == (prev + 1) % 3
            assert apply_transition(prev, TransitionKind.NEGATIVE) == (prev - 1) % 3
            assert apply_transition(prev, TransitionKind.NIL) == prev


def test_nash_score_cli(tmp_path):
    with criterion("evaluate --model nash scores 1/3 within 1e-9 in under 5s on 100 games"):
        games = []
        for i, bot_id in enumerate([1, 4, 8, 12]):
            games.extend(simulate_games(RandomAgent(), bot_id, 25, T=300, seed=50 + i).games)
        data = tmp_path / "hundred.jsonl"
        save(DatasetFile.new(games, agent_label="random"), data)
        runner = CliRunner()
        t0 = time.time()
        result = runner.invoke(cli_main, ["evaluate", "--model", "nash", "--data", str(data), "--seed", "0"])
        elapsed = time.time() - t0
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert abs(payload["normalized_likelihood"] - 1 / 3) <= 1e-9
        assert elapsed < 5.0, f"evaluate took {elapsed:.2f}s"


def test_bot_exploitability():
    with criterion("oracle beats all 15 bots (>1/3+0.05); nonadaptive at 0.933 +/- 0.02"):
        t0 = time.time()
        for spec in default_roster():
            ds = simulate_games(OracleAgent(), spec.bot_id, n_games=20, T=300, seed=1000 + spec.bot_id)
            wr = float(np.mean([g.win_rate() for g in ds.games]))
            assert wr > 1 / 3 + 0.05, f"bot {spec.bot_id}: oracle win rate {wr:.3f}"
            if spec.bot_class == "nonadaptive":
                assert abs(wr - 0.933) <= 0.02, f"bot {spec.bot_id}: {wr:.4f} outside 0.933 +/- 0.02"
        assert time.time() - t0 < 30.0


def test_random_baseline():
    with criterion("random agent wins 1/3 +/- 0.02 aggregate over 100+ games"):
        t0 = time.time()
        games = []
        for spec in default_roster():
            games.extend(simulate_games(RandomAgent(), spec.bot_id, n_games=7, T=300, seed=2000 + spec.bot_id).games)
        assert len(games) >= 100
        stats = win_rate_stats(games)
        assert abs(stats.aggregate[0] - 1 / 3) <= 0.02, f"aggregate {stats.aggregate[0]:.4f}"
        assert time.time() - t0 < 30.0


def test_ewa_hand_checks():
    with criterion("CS-EWA worked updates (delta=1 and delta=0) match to 1e-12"):
        p = CsEwaParams(alpha=0.5, alpha_prime=0.5, phi_ewa=1.0, delta=1.0, rho=1.0, beta=1.0)
        state = CsEwaState(last_state_index=0)
        out = csewa_retrospective_update(state, p, a_prev=1, a_opp_prev=0)  # paper vs rock
        assert np.allclose(out.shadow_table[0], [-0.5, 0.0, 1.5], atol=1e-12)
        assert np.allclose(out.self_table[0], [0.0, 1.5, -0.5], atol=1e-12)
        assert abs(out.self_n[0] - 2.0) <= 1e-12

        p0 = CsEwaParams(alpha=0.5, alpha_prime=0.5, phi_ewa=1.0, delta=0.0, rho=1.0, beta=1.0)
        out = csewa_retrospective_update(CsEwaState(last_state_index=2), p0, a_prev=0, a_opp_prev=2)
        assert abs(out.self_table[2, 0] - 1.5) <= 1e-12  # only rock reinforced: 3/2
        assert abs(out.self_table[2, 1]) <= 1e-12
        assert abs(out.self_table[2, 2]) <= 1e-12


def test_gradient_fidelity():
    with criterion("analytic gradients match finite differences (<=1e-4 rel) for CS-EWA and all builtins"):
        from rpslab.models import CsEwaModel

        t0 = time.time()
        models = [CsEwaModel()]
        for name in ("nash", "human_sbb", "gemini_sbb", "gpt51_sbb", "gptoss_sbb"):
            models.append(DslModel(get_builtin(name)))
        rng = np.random.default_rng(77)
        for model in models:
            for _ in range(10):
                ego = rng.integers(0, 3, (1, 50)).astype(np.int64)
                opp = rng.integers(0, 3, (1, 50)).astype(np.int64)
                rew = rng.choice([3.0, 0.0, -1.0], (1, 50))
                if model.param_count == 0:
                    assert model.nll_and_grad(np.zeros(0), ego, opp, rew)[1].size == 0
                    continue
                theta = rng.standard_normal(model.param_count)
                _, grad = model.nll_and_grad(theta, ego, opp, rew)
                eps = 1e-5
                for k in range(model.param_count):
                    up, down = theta.copy(), theta.copy()
                    up[k] += eps
                    down[k] -= eps
                    fd = (model.nll_and_grad(up, ego, opp, rew)[0] - model.nll_and_grad(down, ego, opp, rew)[0]) / (2 * eps)
                    rel = abs(grad[k] - fd) / max(abs(fd), 1e-6)
                    assert rel <= 1e-4, f"{model.name} param {k}: rel err {rel:.2e}"
        assert time.time() - t0 < 60.0


def test_halstead_worked_report_and_ordering():
    with criterion("Halstead worked report matches to 1e-3; effort ordering holds"):
        policy = BinOp("add", BinOp("mul", Param(0), Const(1.0)), BinOp("add", BinOp("mul", Param(0), Const(1.0)), Const(2.0)))
        rep = halstead(check_valid(ProgramAST("tiny", 1, (), policy)))
        assert (rep.eta1, rep.eta2, rep.N1, rep.N2) == (2, 3, 4, 5)
        assert abs(rep.volume - 20.897) <= 1e-3
        assert abs(rep.difficulty - 1.667) <= 1e-3
        assert abs(rep.effort - 34.83) <= 1e-2
        e = {n: halstead(get_builtin(n)).effort for n in ("gptoss_sbb", "human_sbb", "gpt51_sbb")}
        assert e["gptoss_sbb"] < e["human_sbb"] < e["gpt51_sbb"], e


def test_pareto_and_sbb_correctness():
    with criterion("frontier matches brute force on 1000-candidate archives; SBB toy + monotonicity"):
        t0 = time.time()
        rng = np.random.default_rng(5)

        def synth(i, score, effort):
            p = get_builtin("nash")
            return Candidate(program=p, train_score=score, effort=effort, lineage=("", "synthetic"), id=f"c{i}")

        for trial in range(3):
            archive = Archive(seed=trial)
            for i in range(1000):
                archive.insert(synth(f"{trial}-{i}", float(rng.uniform(0.3, 0.7)), float(rng.integers(1, 2000))))
            assert [c.id for c in archive.frontier()] == [c.id for c in brute_force_frontier(archive.ordered())]

        toy = Archive(seed=0)
        a, b, c = synth("a", 0.400, 100), synth("b", 0.398, 50), synth("c", 0.370, 10)
        for cand in (a, b, c):
            toy.insert(cand)
        scores = {"ca": 0.400, "cb": 0.398, "cc": 0.370}
        pick = sbb(toy, scores, epsilon=0.005)
        assert pick.id == "cb"

        efforts = []
        for eps in (0.005, 0.02, 0.05, 1.0):
            efforts.append(sbb(toy, scores, eps).effort)
        assert all(x >= y for x, y in zip(efforts, efforts[1:]))
        assert time.time() - t0 < 10.0


def test_preprocessing_rules():
    with criterion("preprocessing: exclusions, deduction (opp=paper,r=3 => scissors), imputation, idempotence"):
        rng = np.random.default_rng(3)

        def healthy(gid, T=300):
            rounds = []
            for t in range(T):
                e, o = int(rng.integers(3)), int(rng.integers(3))
                rounds.append(RawRound(t, e, o, payoff(e, o)[0]))
            return RawGame(game_id=gid, bot_id=2, rounds=rounds)

        short = RawGame("short", 1, [RawRound(t, 0, 0, 0) for t in range(49)])
        holes = healthy("holes")
        for t in range(11):
            holes.rounds[t].ego = None
            holes.rounds[t].reward = None
        keep = healthy("keep", T=200)
        keep.rounds[0] = RawRound(0, None, 1, 3)  # opp=paper, reward=3 -> scissors
        keep.rounds[1] = RawRound(1, None, None, None)  # rock-vs-rock
        ds, report = preprocess([short, holes, keep])
        assert [e["game_id"] for e in report["excluded"]] == ["short", "holes"]
        g = ds.games[0]
        assert (g.rounds[0].ego, g.rounds[0].opp, g.rounds[0].reward) == (2, 1, 3)
        assert (g.rounds[1].ego, g.rounds[1].opp, g.rounds[1].reward) == (0, 0, 0)
        assert g.T == 300 and report["padded"]["keep"] == 100
        ds2, rep2 = preprocess([game_to_raw(g)])
        assert ds2.games[0] == g
        assert rep2["deduced"] == 0 and rep2["imputed"] == 0 and not rep2["padded"]


def test_wilcoxon_examples():
    with criterion("Wilcoxon: hand-ranked example (W-=6) and all-positive n=20 (p<0.001)"):
        res = wilcoxon_signed_rank([1.0, 0.0, 3.0, 0.0, 5.0], [0.0, 2.0, 0.0, 4.0, 0.0])
        assert res.w_plus == 9 and res.w_minus == 6 and res.statistic == 6
        base = np.random.default_rng(1).normal(size=20)
        res = wilcoxon_signed_rank(base + 100, base)
        assert res.w_minus == 0
        assert res.p < 0.001


def test_replay_fidelity():
    with criterion("replay of human_sbb on its own data reproduces win rate within 0.05"):
        gen = DslModel(get_builtin("human_sbb"))
        theta_star = np.array([0.6, 1.5, 1.1, 2.2, 0.9])
        ds = simulate_games(ModelAgent(gen, theta_star), bot_id=6, n_games=20, T=300, seed=808)
        truth = float(np.mean([g.win_rate() for g in ds.games]))
        stats = replay_eval(gen, theta_star, ds.games, seed=3)
        assert abs(stats.aggregate[0] - truth) <= 0.05, f"synthetic {stats.aggregate[0]:.3f} vs truth {truth:.3f}"


def test_cross_generalization_diagonal_dominance(tmp_path):
    with criterion("cross-generalization matrix is diagonally dominant on 3 synthetic datasets"):
        from rpslab.evaluation import cross_generalization

        t0 = time.time()
        generators = {
            "human_sbb": np.array([0.7, 1.5, 1.2, 1.5, 1.5]),
            "gpt51_sbb": np.array([0.7, 1.5, 1.0, 3.0]),
            "gptoss_sbb": np.array([0.5, 1.5, 1.5, 2.0, 1.5]),
        }
        datasets = {}
        for name, theta in generators.items():
            model = DslModel(get_builtin(name))
            datasets[name] = simulate_games(ModelAgent(model, theta), bot_id=6, n_games=12, T=300, seed=100 + hash(name) % 50).games
        models = {name: DslModel(get_builtin(name)) for name in generators}
        matrix = cross_generalization(models, datasets, FitConfig(restarts=4, max_steps=2000, seed=0), seed=0)
        for dname in matrix.dataset_names:
            row = {p: s.normalized_likelihood for p, s in matrix.row(dname).items()}
            best = max(row, key=row.get)
            assert best == dname, f"row {dname}: diagonal {row[dname]:.4f} beaten by {best} {row[best]:.4f}"
        assert time.time() - t0 < 600.0


def test_recovery_experiment(tmp_path):
    with criterion("recovery: 500-candidate search matches the generating program (eval within 0.01, effort <= 1.25x)"):
        t0 = time.time()
        gen_program = get_builtin("gemini_sbb")
        gen = DslModel(gen_program)
        theta_star = np.array([0.8, 2.0, 1.2, 2.5, 0.8])
        ds = simulate_games(ModelAgent(gen, theta_star), bot_id=6, n_games=40, T=300, seed=4242)
        data = tmp_path / "recovery.jsonl"
        save(ds, data)
        out = tmp_path / "run"
        runner = CliRunner()
        result = runner.invoke(
            cli_main,
            ["discover", "--train", str(data), "--budget", "500", "--mutator", "rule", "--seed", "7", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out / "sbb_report.json").read_text())

        _, eval_set = partition(ds.games)
        gen_score = twofold_cv(gen, eval_set, FitConfig(restarts=4, max_steps=2000, seed=7), seed=7).normalized_likelihood
        sbb_score = report["eval_score"]
        assert sbb_score >= gen_score - 0.01, f"SBB eval {sbb_score:.4f} vs generator {gen_score:.4f}"
        gen_effort = halstead(gen_program).effort
        assert report["effort"] <= gen_effort * 1.25, f"SBB effort {report['effort']:.1f} vs generator {gen_effort:.1f}"
        elapsed_min = (time.time() - t0) / 60
        assert elapsed_min < 30.0, f"recovery took {elapsed_min:.1f} min"
        print(f"\n  recovery: sbb={sbb_score:.4f} gen={gen_score:.4f} effort {report['effort']:.0f}/{gen_effort:.0f} in {elapsed_min:.1f} min", flush=True)


# --- secondary criteria ------------------------------------------------------

def test_secondary_live_play_round_trip(tmp_path):
    with criterion("[secondary] scripted 300-round live session renders every field; export validates"):
        from fastapi.testclient import TestClient

        from rpslab.data_io import load
        from rpslab.game import GameTrajectory, RoundRecord
        from rpslab.service import create_app

        client = TestClient(create_app())
        created = client.post("/sessions", json={"bot_id": 9, "seed": 21}).json()
        sid = created["session_id"]
        assert created["T"] == 300
        tally = 0
        rng = np.random.default_rng(0)
        for t in range(300):
            resp = client.post(f"/sessions/{sid}/move", json={"action": int(rng.integers(3))})
            assert resp.status_code == 200
            body = resp.json()
            assert {"round", "ego", "opp", "reward", "outcome", "tally", "progress"} <= set(body)
            assert body["round"] == t
            assert body["reward"] == payoff(body["ego"], body["opp"])[0]
            assert body["outcome"] in ("win", "tie", "loss")
            tally += body["reward"]
            assert body["tally"] == tally
            assert abs(body["progress"] - (t + 1) / 300) < 1e-12
        exported = client.get(f"/sessions/{sid}/export").json()
        game = GameTrajectory(
            game_id=exported["game_id"],
            agent_label=exported["agent_label"],
            bot_id=exported["bot_id"],
            rounds=[RoundRecord(*r) for r in exported["rounds"]],
        )
        game.validate()  # reward re-verification
        assert game.T == 300
        path = tmp_path / "export.jsonl"
        save(DatasetFile.new([game], agent_label="human"), path)
        assert load(path).games[0] == game


def test_secondary_hidden_bot_contract():
    with criterion("[secondary] no response before completion contains the bot identity"):
        from fastapi.testclient import TestClient

        from rpslab.service import create_app

        client = TestClient(create_app())
        responses = [client.post("/sessions", json={"bot_id": 11, "seed": 2, "rounds": 40})]
        sid = responses[0].json()["session_id"]
        for t in range(39):
            responses.append(client.post(f"/sessions/{sid}/move", json={"action": t % 3}))
        responses.append(client.get(f"/sessions/{sid}/export", params={"allow_partial": "true"}))
        for resp in responses:
            body = resp.json()
            flat = json.dumps(body)
            assert '"bot_id": 11' not in flat and '"bot_id":11' not in flat
            if "bot_id" in body:
                assert body["bot_id"] is None
        responses.append(client.post(f"/sessions/{sid}/move", json={"action": 0}))
        final = client.get(f"/sessions/{sid}/export").json()
        assert final["bot_id"] == 11


def test_secondary_frontend_suite():
    with criterion("[secondary] browser client builds and its test suite passes"):
        if shutil.which("npx") is None:
            pytest.fail("node toolchain unavailable; install node 20+ and run: cd frontend && npm install")
        if not (FRONTEND_DIR / "node_modules").exists():
            install = subprocess.run(["npm", "install", "--no-audit", "--no-fund"], cwd=FRONTEND_DIR, capture_output=True, text=True, timeout=600)
            assert install.returncode == 0, install.stderr[-2000:]
        build = subprocess.run(["npx", "tsc", "-p", "tsconfig.json"], cwd=FRONTEND_DIR, capture_output=True, text=True, timeout=300)
        assert build.returncode == 0, build.stdout[-2000:] + build.stderr[-2000:]
        tests = subprocess.run(["npx", "vitest", "run"], cwd=FRONTEND_DIR, capture_output=True, text=True, timeout=600)
        assert tests.returncode == 0, tests.stdout[-3000:] + tests.stderr[-3000:]
