"""Dataset persistence, preprocessing, simulation, and offline replay.

File format: JSONL with one header line followed by one game per line.
Actions are stored as integers 0/1/2 only; rewards must match the payoff
table.  Preprocessing applies the exclusion / logical-deduction /
rock-vs-rock imputation / padding pipeline to raw games with missing moves
and reports every action it takes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bots import BotSpec, bot_act, bot_observe, init_state, oracle_best_response, roster_by_id
from .game import GameTrajectory, RoundRecord, payoff, trajectories_to_arrays
from .models.base import BehavioralModel, softmax

SCHEMA_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class DatasetFile:
    header: dict
    games: list[GameTrajectory]

    @classmethod
    def new(cls, games: list[GameTrajectory], agent_label: str, seed: int | None = None, created: str | None = None) -> "DatasetFile":
        header = {"schema_version": SCHEMA_VERSION, "agent_label": agent_label}
        if seed is not None:
            header["seed"] = seed
        if created is not None:
            header["created"] = created
        return cls(header=header, games=games)

    @property
    def agent_label(self) -> str:
        return self.header.get("agent_label", "")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save(dataset: DatasetFile, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(_dump(dataset.header) + "\n")
        for g in dataset.games:
            obj = {
                "game_id": g.game_id,
                "agent_label": g.agent_label,
                "bot_id": g.bot_id,
                "rounds": [[r.t, r.ego, r.opp, r.reward] for r in g.rounds],
            }
            if g.padded_from is not None:
                obj["padded_from"] = g.padded_from
            fh.write(_dump(obj) + "\n")


def load(path: str | Path) -> DatasetFile:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}:1: bad header: {exc}") from exc
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"{path}:1: unknown schema_version {header.get('schema_version')!r}")
    games = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        rounds = []
        for item in obj.get("rounds", []):
            t, ego, opp, reward = item
            if not (isinstance(ego, int) and isinstance(opp, int) and isinstance(reward, int)):
                raise DatasetError(f"{path}:{lineno}: game {obj.get('game_id')!r} round {t}: actions and rewards must be integers")
            rounds.append(RoundRecord(t=t, ego=ego, opp=opp, reward=reward))
        game = GameTrajectory(
            game_id=str(obj["game_id"]),
            agent_label=str(obj.get("agent_label", header.get("agent_label", ""))),
            bot_id=int(obj["bot_id"]),
            rounds=rounds,
            padded_from=obj.get("padded_from"),
        )
        try:
            game.validate()
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from exc
        games.append(game)
    return DatasetFile(header=header, games=games)


# --- preprocessing --------------------------------------------------------

@dataclass
class RawRound:
    t: int
    ego: int | None
    opp: int | None
    reward: int | None


@dataclass
class RawGame:
    game_id: str
    bot_id: int
    rounds: list[RawRound]
    agent_label: str = ""


@dataclass(frozen=True)
class PreprocessConfig:
    min_rounds: int = 50
    max_missing: int = 10
    pad_to: int = 300
    excluded_ids: tuple[str, ...] = ()


def game_to_raw(game: GameTrajectory) -> RawGame:
    return RawGame(
        game_id=game.game_id,
        bot_id=game.bot_id,
        agent_label=game.agent_label,
        rounds=[RawRound(r.t, r.ego, r.opp, r.reward) for r in game.rounds],
    )


def _deduce_ego(opp: int | None, reward: int | None) -> int | None:
    """The unique move earning ``reward`` against ``opp``, if determined."""
    if opp is None or reward is None:
        return None
    for ego in (0, 1, 2):
        if payoff(ego, opp)[0] == reward:
            return ego
    return None


def _deduce_opp(ego: int | None, reward: int | None) -> int | None:
    """The unique opponent move against which ``ego`` earns ``reward``."""
    if ego is None or reward is None:
        return None
    for opp in (0, 1, 2):
        if payoff(ego, opp)[0] == reward:
            return opp
    return None


def preprocess(raw_games: list[RawGame], cfg: PreprocessConfig | None = None, agent_label: str = "") -> tuple[DatasetFile, dict]:
    cfg = cfg or PreprocessConfig()
    report = {"excluded": [], "deduced": 0, "imputed": 0, "padded": {}, "rewards_fixed": 0}
    games: list[GameTrajectory] = []
    for raw in raw_games:
        if raw.game_id in cfg.excluded_ids:
            report["excluded"].append({"game_id": raw.game_id, "reason": "excluded_id"})
            continue
        if len(raw.rounds) < cfg.min_rounds:
            report["excluded"].append({"game_id": raw.game_id, "reason": f"fewer than {cfg.min_rounds} rounds"})
            continue
        n_missing = sum(1 for r in raw.rounds if r.ego is None)
        if n_missing > cfg.max_missing:
            report["excluded"].append({"game_id": raw.game_id, "reason": f"more than {cfg.max_missing} missing moves"})
            continue
        rounds: list[RoundRecord] = []
        for idx, r in enumerate(raw.rounds):
            ego, opp, reward = r.ego, r.opp, r.reward
            if ego is None:
                ded = _deduce_ego(opp, reward)
                if ded is not None:
                    ego = ded
                    report["deduced"] += 1
                else:
                    ego, opp, reward = 0, 0, 0  # rock-vs-rock tie
                    report["imputed"] += 1
            elif opp is None:
                ded = _deduce_opp(ego, reward)
                if ded is not None:
                    opp = ded
                    report["deduced"] += 1
                else:
                    ego, opp, reward = 0, 0, 0
                    report["imputed"] += 1
            expected = payoff(ego, opp)[0]
            if reward != expected:
                if reward is not None:
                    report["rewards_fixed"] += 1
                reward = expected
            rounds.append(RoundRecord(t=idx, ego=ego, opp=opp, reward=reward))
        padded_from = None
        if len(rounds) < cfg.pad_to:
            padded_from = len(rounds)
            report["padded"][raw.game_id] = cfg.pad_to - len(rounds)
            for t in range(len(rounds), cfg.pad_to):
                rounds.append(RoundRecord(t=t, ego=0, opp=0, reward=0))
        game = GameTrajectory(
            game_id=raw.game_id,
            agent_label=raw.agent_label or agent_label,
            bot_id=raw.bot_id,
            rounds=rounds,
            padded_from=padded_from,
        )
        game.validate()
        games.append(game)
    return DatasetFile.new(games, agent_label=agent_label), report


def load_raw(path: str | Path) -> list[RawGame]:
    """Read a dataset-shaped JSONL file whose rounds may contain nulls."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file")
    header = json.loads(lines[0])
    games = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        rounds = [RawRound(t=r[0], ego=r[1], opp=r[2], reward=r[3]) for r in obj.get("rounds", [])]
        games.append(
            RawGame(
                game_id=str(obj["game_id"]),
                bot_id=int(obj.get("bot_id", 0)),
                rounds=rounds,
                agent_label=str(obj.get("agent_label", header.get("agent_label", ""))),
            )
        )
    return games


# --- agents and simulation -------------------------------------------------

class RandomAgent:
    name = "random"

    def reset(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def act(self, bot_spec: BotSpec, bot_state) -> int:
        return int(self.rng.integers(3))

    def observe(self, ego: int, opp: int, reward: float) -> None:
        pass


class OracleAgent:
    """Best response computed from the bot's own rule and memory."""

    name = "oracle"

    def reset(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def act(self, bot_spec: BotSpec, bot_state) -> int:
        return oracle_best_response(bot_spec, bot_state, self.rng)

    def observe(self, ego: int, opp: int, reward: float) -> None:
        pass


class ModelAgent:
    """Plays by sampling from a behavioral model's predicted distribution."""

    def __init__(self, model: BehavioralModel, theta):
        self.model = model
        self.theta = model.check_theta(theta)
        self.name = f"model:{model.name}"

    def reset(self, rng: np.random.Generator) -> None:
        self.rng = rng
        self.state = self.model.init_state()
        self.probs = self.model.initial_prediction(self.theta).probs()

    def act(self, bot_spec: BotSpec, bot_state) -> int:
        return int(self.rng.choice(3, p=self.probs))

    def observe(self, ego: int, opp: int, reward: float) -> None:
        pred, self.state = self.model.step(self.theta, ego, opp, reward, self.state)
        self.probs = pred.probs()


def play_game(agent, spec: BotSpec, T: int, seed_seq: np.random.SeedSequence, game_id: str, agent_label: str) -> GameTrajectory:
    bot_seed, agent_seed = seed_seq.spawn(2)
    bot_rng = np.random.default_rng(bot_seed)
    agent.reset(np.random.default_rng(agent_seed))
    bot_state = init_state(spec)
    rounds = []
    for t in range(T):
        # both moves drawn before either side observes the round
        ego = agent.act(spec, bot_state)
        bot = bot_act(spec, bot_state, bot_rng)
        reward = payoff(ego, bot)[0]
        rounds.append(RoundRecord(t=t, ego=ego, opp=bot, reward=reward))
        bot_observe(spec, bot_state, bot, ego)
        agent.observe(ego, bot, reward)
    return GameTrajectory(game_id=game_id, agent_label=agent_label, bot_id=spec.bot_id, rounds=rounds)


def simulate_games(
    agent,
    bot_id: int,
    n_games: int,
    T: int = 300,
    seed: int = 0,
    specs: list[BotSpec] | None = None,
    agent_label: str | None = None,
) -> DatasetFile:
    """Play ``n_games`` full games against one roster bot; fully seeded."""
    table = roster_by_id(specs)
    if bot_id not in table:
        raise ValueError(f"unknown bot_id {bot_id}")
    spec = table[bot_id]
    label = agent_label or agent.name
    seqs = np.random.SeedSequence(seed).spawn(n_games)
    games = [
        play_game(agent, spec, T, seqs[i], game_id=f"{label}-bot{bot_id}-{i:03d}", agent_label=label)
        for i in range(n_games)
    ]
    return DatasetFile.new(games, agent_label=label, seed=seed)


def replay_eval(model: BehavioralModel, theta, dataset: list[GameTrajectory], seed: int = 0, window: int = 30):
    """Replay recorded games one round at a time, sampling the model's move.

    The model sees the true history; its sampled move is scored against the
    true opponent move of the same round.  Returns win-rate statistics over
    the synthetic trajectories.
    """
    from .evaluation import win_rate_stats

    theta = model.check_theta(theta)
    ego, opp, rew = trajectories_to_arrays(dataset)
    logits = model.predict_logits(theta, ego, opp, rew)
    probs = softmax(logits)
    rng = np.random.default_rng(seed)
    u = rng.random(probs.shape[:2])
    cum = probs.cumsum(axis=2)
    # clip guards the fp edge where u lands above the last cumulative bin
    sampled = np.minimum((u[:, :, None] > cum).sum(axis=2), 2)
    synthetic = []
    for i, g in enumerate(dataset):
        rounds = [
            RoundRecord(t=t, ego=int(sampled[i, t]), opp=g.rounds[t].opp, reward=payoff(int(sampled[i, t]), g.rounds[t].opp)[0])
            for t in range(g.T)
        ]
        synthetic.append(GameTrajectory(game_id=f"replay-{g.game_id}", agent_label=f"replay:{model.name}", bot_id=g.bot_id, rounds=rounds))
    return win_rate_stats(synthetic, window=window)


# --- tabular import ---------------------------------------------------------

_MOVE_TOKENS = {
    "0": 0, "1": 1, "2": 2,
    "r": 0, "p": 1, "s": 2,
    "rock": 0, "paper": 1, "scissors": 2, "scissor": 2,
}


def _parse_move(token: str | None) -> int | None:
    if token is None:
        return None
    token = token.strip().lower()
    if not token or token in ("na", "nan", "none", "null"):
        return None
    if token in _MOVE_TOKENS:
        return _MOVE_TOKENS[token]
    raise DatasetError(f"unparseable move token {token!r}")


def import_tabular(
    path: str | Path,
    column_map: dict[str, str],
    cfg: PreprocessConfig | None = None,
    agent_label: str = "imported",
) -> tuple[DatasetFile, dict]:
    """Read a delimited file of per-round rows and run it through preprocessing.

    ``column_map`` maps the roles game_id / player_move / bot_move / reward
    (and optionally round, bot_id) to column names.
    """
    required = ("game_id", "player_move", "bot_move", "reward")
    for role in required:
        if role not in column_map:
            raise DatasetError(f"column_map is missing required role {role!r}")
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0])
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(text.splitlines(), dialect=dialect)
    by_game: dict[str, list[dict]] = {}
    for row in reader:
        gid = row.get(column_map["game_id"], "")
        by_game.setdefault(gid, []).append(row)

    raw_games = []
    for gid, rows in by_game.items():
        if "round" in column_map:
            rows = sorted(rows, key=lambda r: int(r[column_map["round"]]))
        rounds = []
        for idx, row in enumerate(rows):
            ego = _parse_move(row.get(column_map["player_move"]))
            opp = _parse_move(row.get(column_map["bot_move"]))
            reward_tok = (row.get(column_map["reward"]) or "").strip()
            reward = None
            if reward_tok:
                try:
                    reward = int(float(reward_tok))
                except ValueError:
                    raise DatasetError(f"game {gid!r}: unparseable reward {reward_tok!r}") from None
            rounds.append(RawRound(t=idx, ego=ego, opp=opp, reward=reward))
        bot_id = 0
        if "bot_id" in column_map:
            bot_id = int(rows[0].get(column_map["bot_id"], 0) or 0)
        raw_games.append(RawGame(game_id=gid, bot_id=bot_id, rounds=rounds, agent_label=agent_label))
    return preprocess(raw_games, cfg, agent_label=agent_label)
