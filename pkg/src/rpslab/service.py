"""HTTP session service for live human-vs-bot play.

Sessions live in memory (optionally mirrored to disk) and expose the
data-collection protocol: create a session against a hidden bot, submit one
move per round, and export the finished game in the standard dataset format.
The bot's move for a round is drawn from its seeded stream before the
submitted action is shown to it, so play is simultaneous by construction,
and the bot's identity appears in no response until the game is complete.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .bots import BotSpec, BotState, bot_act, bot_observe, init_state, roster_by_id
from .game import DEFAULT_ROUNDS, RoundRecord, outcome, payoff

RULES_TEXT = (
    "Rock-paper-scissors, 300 rounds against a fixed opponent strategy. "
    "Rock beats scissors, scissors beats paper, paper beats rock. "
    "Each round you earn 3 points for a win, 0 for a tie, and -1 for a loss. "
    "The opponent's strategy does not change during the game, but it is not revealed. "
    "Moves are encoded as 0=rock, 1=paper, 2=scissors."
)


@dataclass
class Session:
    session_id: str
    spec: BotSpec
    bot_state: BotState
    bot_rng: np.random.Generator
    T: int = DEFAULT_ROUNDS
    rounds: list[RoundRecord] = field(default_factory=list)
    tally: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def complete(self) -> bool:
        return len(self.rounds) >= self.T

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "bot_id": self.spec.bot_id,
            "T": self.T,
            "tally": self.tally,
            "rounds": [[r.t, r.ego, r.opp, r.reward] for r in self.rounds],
            "rng_state": self.bot_rng.bit_generator.state,
            "bot_history": list(self.bot_state.history),
            "bot_n_seen": self.bot_state.n_seen,
            "bot_counts": self.bot_state.counts.tolist() if self.bot_state.counts is not None else None,
        }


class CreateSession(BaseModel):
    bot_id: int | None = None
    seed: int | None = None
    rounds: int | None = None


class MoveBody(BaseModel):
    action: int


def _restore_session(obj: dict, specs) -> Session:
    spec = roster_by_id(specs)[obj["bot_id"]]
    state = init_state(spec)
    state.n_seen = obj["bot_n_seen"]
    for pair in obj["bot_history"]:
        state.history.append(tuple(pair))
    if obj["bot_counts"] is not None:
        state.counts = np.asarray(obj["bot_counts"], dtype=np.int64)
    rng = np.random.default_rng()
    rng.bit_generator.state = obj["rng_state"]
    session = Session(
        session_id=obj["session_id"],
        spec=spec,
        bot_state=state,
        bot_rng=rng,
        T=obj["T"],
        rounds=[RoundRecord(*r) for r in obj["rounds"]],
        tally=obj["tally"],
    )
    return session


def create_app(specs: list[BotSpec] | None = None, persist_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="rpslab session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    table = roster_by_id(specs)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    persist = Path(persist_dir) if persist_dir else None
    if persist:
        persist.mkdir(parents=True, exist_ok=True)
    app.state.sessions = sessions

    def store(session: Session) -> None:
        if persist:
            (persist / f"{session.session_id}.json").write_text(json.dumps(session.to_json()))

    def lookup(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
            if session is None and persist:
                path = persist / f"{session_id}.json"
                if path.exists():
                    session = _restore_session(json.loads(path.read_text()), specs)
                    sessions[session_id] = session
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession):
        if body.bot_id is not None and body.bot_id not in table:
            raise HTTPException(status_code=400, detail=f"unknown bot_id {body.bot_id}")
        seed_seq = np.random.SeedSequence(body.seed) if body.seed is not None else np.random.SeedSequence()
        choice_rng = np.random.default_rng(seed_seq.spawn(1)[0])
        bot_id = body.bot_id if body.bot_id is not None else int(sorted(table)[choice_rng.integers(len(table))])
        spec = table[bot_id]
        session = Session(
            session_id=uuid.uuid4().hex,
            spec=spec,
            bot_state=init_state(spec),
            bot_rng=np.random.default_rng(seed_seq.spawn(2)[1]),
            T=body.rounds or DEFAULT_ROUNDS,
        )
        with registry_lock:
            sessions[session.session_id] = session
        store(session)
        return {"session_id": session.session_id, "T": session.T, "rules": RULES_TEXT}

    @app.post("/sessions/{session_id}/move")
    def submit_move(session_id: str, body: MoveBody):
        session = lookup(session_id)
        if body.action not in (0, 1, 2):
            raise HTTPException(status_code=400, detail="action must be 0, 1 or 2")
        with session.lock:
            if session.complete:
                raise HTTPException(status_code=409, detail="session complete")
            # the bot's move depends only on (seed, history): simultaneous play
            bot_move = bot_act(session.spec, session.bot_state, session.bot_rng)
            reward = payoff(body.action, bot_move)[0]
            t = len(session.rounds)
            session.rounds.append(RoundRecord(t=t, ego=body.action, opp=bot_move, reward=reward))
            bot_observe(session.spec, session.bot_state, bot_move, body.action)
            session.tally += reward
            store(session)
            return {
                "round": t,
                "ego": body.action,
                "opp": bot_move,
                "reward": reward,
                "outcome": outcome(body.action, bot_move).value,
                "tally": session.tally,
                "progress": len(session.rounds) / session.T,
                "complete": session.complete,
            }

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str, allow_partial: bool = False):
        session = lookup(session_id)
        with session.lock:
            if not session.complete and not allow_partial:
                raise HTTPException(status_code=409, detail="session still active; pass allow_partial=true to export anyway")
            return {
                "game_id": session.session_id,
                "agent_label": "human",
                # the bot stays hidden until the game is over
                "bot_id": session.spec.bot_id if session.complete else None,
                "rounds": [[r.t, r.ego, r.opp, r.reward] for r in session.rounds],
            }

    return app
