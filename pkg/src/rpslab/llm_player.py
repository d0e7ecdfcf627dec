"""Collect matched gameplay from a chat-completion endpoint, one query per round.

Every query is stateless: the prompt reconstructs the rules, the full history
of prior rounds, and the running score.  Rounds whose replies never contain a
move are recorded as missing and resolved by the preprocessing imputation
path.  Collection writes an append-only per-round checkpoint so an
interrupted run resumes to a byte-identical dataset (the bot streams are
seeded, and replaying the recorded rounds reproduces them exactly).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .bots import bot_act, bot_observe, init_state, roster_by_id
from .data_io import DatasetFile, PreprocessConfig, RawGame, RawRound, preprocess, save
from .game import Outcome, RoundRecord, outcome, payoff

_MOVE_RE = re.compile(r"rock|paper|scissors", re.IGNORECASE)
_MOVE_INDEX = {"rock": 0, "paper": 1, "scissors": 2}
_MOVE_NAME = ("rock", "paper", "scissors")
PROMPT_RESOURCE = "gameplay_prompt_v1.txt"


class MoveParseError(ValueError):
    pass


@dataclass(frozen=True)
class LlmClientConfig:
    base_url: str
    model: str
    credential_env: str | None = None
    temperature: float = 0.5
    max_retries: int = 3
    timeout: float = 120.0
    prompt_path: str = "messages.0.content"  # where the prompt goes in the request
    response_path: str = "choices.0.message.content"  # where the reply text lives
    options: dict = field(default_factory=dict)  # passthrough request fields

    @classmethod
    def from_file(cls, path: str | Path) -> "LlmClientConfig":
        obj = json.loads(Path(path).read_text())
        return cls(**obj)


def _set_path(obj, path: str, value):
    parts = path.split(".")
    here = obj
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        key = int(part) if part.isdigit() else part
        if isinstance(key, int):
            while len(here) <= key:
                here.append({})
            if last:
                here[key] = value
            else:
                here = here[key]
        else:
            if last:
                here[key] = value
            else:
                nxt = parts[i + 1]
                here = here.setdefault(key, [] if nxt.isdigit() else {})
    return obj


def _get_path(obj, path: str):
    here = obj
    for part in path.split("."):
        here = here[int(part)] if part.isdigit() else here[part]
    return here


class HttpChatClient:
    """Minimal JSON-over-HTTP chat client; field locations are configurable."""

    def __init__(self, cfg: LlmClientConfig):
        self.cfg = cfg

    def complete(self, prompt: str) -> str:
        import os

        import requests

        payload: dict = {"model": self.cfg.model, "temperature": self.cfg.temperature}
        payload.update(self.cfg.options)
        if self.cfg.prompt_path.startswith("messages."):
            payload.setdefault("messages", [{"role": "user", "content": ""}])
        _set_path(payload, self.cfg.prompt_path, prompt)
        headers = {}
        if self.cfg.credential_env:
            credential = os.environ.get(self.cfg.credential_env)
            if credential:
                headers["Authorization"] = f"Bearer {credential}"
        resp = requests.post(self.cfg.base_url, json=payload, headers=headers, timeout=self.cfg.timeout)
        resp.raise_for_status()
        return str(_get_path(resp.json(), self.cfg.response_path))


def _prompt_template() -> str:
    return resources.files("rpslab.resources").joinpath(PROMPT_RESOURCE).read_text(encoding="utf-8")


_OUTCOME_TEXT = {Outcome.WIN: "you won (+3)", Outcome.TIE: "tie (0)", Outcome.LOSS: "you lost (-1)"}


def build_prompt(history: list[RoundRecord], total_rounds: int, round_index: int) -> str:
    """Deterministic per-round prompt: rules, full history, tally, move request."""
    if len(history) != round_index:
        raise ValueError("history length must equal the current round index")
    tally = sum(r.reward for r in history)
    if history:
        lines = [
            f"Round {r.t + 1}: you played {_MOVE_NAME[r.ego]}, the opponent played {_MOVE_NAME[r.opp]} - {_OUTCOME_TEXT[outcome(r.ego, r.opp)]}."
            for r in history
        ]
        history_block = "History so far:\n" + "\n".join(lines) + "\n\n"
    else:
        history_block = ""
    return _prompt_template().format(
        total_rounds=total_rounds,
        history_block=history_block,
        tally=tally,
        round_number=round_index + 1,
    )


def parse_move(text: str) -> int:
    """First case-insensitive occurrence of rock/paper/scissors."""
    m = _MOVE_RE.search(text)
    if not m:
        raise MoveParseError(f"no move found in reply: {text[:80]!r}")
    return _MOVE_INDEX[m.group(0).lower()]


@dataclass
class CollectStats:
    retries: int = 0
    missing_rounds: int = 0
    resumed_rounds: int = 0


def _checkpoint_path(out_path: str | Path) -> Path:
    return Path(str(out_path) + ".ckpt")


def _load_checkpoint(path: Path) -> dict[int, list[dict]]:
    games: dict[int, list[dict]] = {}
    if not path.exists():
        return games
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        games.setdefault(obj["g"], []).append(obj)
    return games


def collect(
    client,
    bot_id: int,
    n_games: int = 20,
    T: int = 300,
    seed: int = 0,
    out_path: str | Path = "llm_dataset.jsonl",
    agent_label: str = "llm",
    specs=None,
    max_retries: int = 3,
    concurrency: int = 1,
) -> tuple[DatasetFile, CollectStats]:
    """Play ``n_games`` against one bot via per-round endpoint queries.

    ``client`` needs one method: ``complete(prompt) -> str``.  Raises on
    persistent transport failure after writing the checkpoint; re-running
    with the same arguments resumes and produces an identical dataset.
    Games run sequentially by default; ``concurrency`` > 1 plays independent
    games in parallel threads (the client must then be thread-safe).
    """
    spec = roster_by_id(specs)[bot_id]
    ckpt_path = _checkpoint_path(out_path)
    recorded = _load_checkpoint(ckpt_path)
    stats = CollectStats(resumed_rounds=sum(len(v) for v in recorded.values()))
    seqs = np.random.SeedSequence(seed).spawn(n_games)

    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    import threading

    ckpt_lock = threading.Lock()
    with ckpt_path.open("a", encoding="utf-8") as ckpt:

        def play_one(g: int) -> RawGame:
            bot_rng = np.random.default_rng(seqs[g])
            bot_state = init_state(spec)
            raw_rounds: list[RawRound] = []
            display: list[RoundRecord] = []  # history as shown to the model

            def commit(t: int, ego: int | None, bot_move: int, persist: bool) -> None:
                reward = payoff(ego, bot_move)[0] if ego is not None else None
                raw_rounds.append(RawRound(t=t, ego=ego, opp=bot_move, reward=reward))
                shown = ego if ego is not None else 0  # imputation-consistent continuation
                display.append(RoundRecord(t=t, ego=shown, opp=bot_move, reward=payoff(shown, bot_move)[0]))
                bot_observe(spec, bot_state, bot_move, shown)
                if persist:
                    with ckpt_lock:
                        ckpt.write(json.dumps({"g": g, "t": t, "ego": ego, "opp": bot_move}) + "\n")
                        ckpt.flush()

            # replay checkpointed rounds; the seeded bot stream reproduces them
            for obj in recorded.get(g, []):
                bot_move = bot_act(spec, bot_state, bot_rng)
                assert bot_move == obj["opp"], "checkpoint does not match the seeded bot stream"
                commit(obj["t"], obj["ego"], bot_move, persist=False)

            for t in range(len(raw_rounds), T):
                prompt = build_prompt(display, T, t)
                ego: int | None = None
                for _ in range(max_retries + 1):
                    try:
                        ego = parse_move(client.complete(prompt))
                        break
                    except MoveParseError:
                        with ckpt_lock:
                            stats.retries += 1
                if ego is None:
                    with ckpt_lock:
                        stats.missing_rounds += 1
                bot_move = bot_act(spec, bot_state, bot_rng)
                commit(t, ego, bot_move, persist=True)
            return RawGame(game_id=f"{agent_label}-bot{bot_id}-{g:03d}", bot_id=bot_id, rounds=raw_rounds, agent_label=agent_label)

        if concurrency > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                raw_games = list(pool.map(play_one, range(n_games)))
        else:
            raw_games = [play_one(g) for g in range(n_games)]

    # imputation and padding only: collected games are complete by
    # construction, so the raw-data exclusion thresholds do not apply here
    dataset, _report = preprocess(raw_games, PreprocessConfig(min_rounds=1, max_missing=T, pad_to=T), agent_label=agent_label)
    dataset.header["seed"] = seed
    save(dataset, out_path)
    ckpt_path.unlink(missing_ok=True)
    return dataset, stats
