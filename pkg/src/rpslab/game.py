"""Core rock-paper-scissors formalism: actions, payoffs, transitions, trajectories.

Actions are encoded as integers project-wide: 0=Rock, 1=Paper, 2=Scissors.
All cyclic structure (what beats what, transition arithmetic) is mod-3
arithmetic on this encoding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

ROCK, PAPER, SCISSORS = 0, 1, 2
ACTIONS = (ROCK, PAPER, SCISSORS)
ACTION_NAMES = ("rock", "paper", "scissors")

DEFAULT_ROUNDS = 300

# Ego reward for (ego, opponent): win 3, tie 0, loss -1.
REWARDS = np.array(
    [
        [0, -1, 3],
        [3, 0, -1],
        [-1, 3, 0],
    ],
    dtype=np.int64,
)


class Outcome(enum.Enum):
    WIN = "win"
    TIE = "tie"
    LOSS = "loss"


class TransitionKind(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NIL = "nil"


_TRANSITION_DELTA = {
    TransitionKind.POSITIVE: 1,
    TransitionKind.NEGATIVE: -1,
    TransitionKind.NIL: 0,
}


def check_action(a: int) -> int:
    if a not in (0, 1, 2):
        raise ValueError(f"invalid action {a!r}: must be 0 (rock), 1 (paper) or 2 (scissors)")
    return a


def beats(a: int) -> int:
    """The unique action that defeats ``a``."""
    check_action(a)
    return (a + 1) % 3


def payoff(ego: int, opp: int) -> tuple[int, int]:
    """Rewards (ego, opponent) for one simultaneous round."""
    check_action(ego)
    check_action(opp)
    return int(REWARDS[ego, opp]), int(REWARDS[opp, ego])


def outcome(ego: int, opp: int) -> Outcome:
    r = payoff(ego, opp)[0]
    if r == 3:
        return Outcome.WIN
    if r == 0:
        return Outcome.TIE
    return Outcome.LOSS


def apply_transition(a: int, kind: TransitionKind) -> int:
    check_action(a)
    return (a + _TRANSITION_DELTA[kind]) % 3


def classify_transition(prev: int, nxt: int) -> TransitionKind:
    check_action(prev)
    check_action(nxt)
    delta = (nxt - prev) % 3
    if delta == 0:
        return TransitionKind.NIL
    if delta == 1:
        return TransitionKind.POSITIVE
    return TransitionKind.NEGATIVE


@dataclass(frozen=True)
class RoundRecord:
    """One completed round from the ego player's perspective."""

    t: int
    ego: int
    opp: int
    reward: int

    def validate(self) -> None:
        check_action(self.ego)
        check_action(self.opp)
        expected = payoff(self.ego, self.opp)[0]
        if self.reward != expected:
            raise ValueError(
                f"round {self.t}: reward {self.reward} inconsistent with moves "
                f"(ego={self.ego}, opp={self.opp} implies {expected})"
            )


@dataclass
class GameTrajectory:
    """One full game: an ordered, gap-free sequence of rounds against one bot.

    ``padded_from`` marks the first synthetic tie appended by preprocessing,
    when the game was shorter than the target length.
    """

    game_id: str
    agent_label: str
    bot_id: int
    rounds: list[RoundRecord] = field(default_factory=list)
    # provenance marker, not identity: equal games may differ in padding origin
    padded_from: int | None = field(default=None, compare=False)

    @property
    def T(self) -> int:
        return len(self.rounds)

    def validate(self) -> None:
        for i, rec in enumerate(self.rounds):
            if rec.t != i:
                raise ValueError(f"game {self.game_id}: rounds not contiguous at index {i} (t={rec.t})")
            try:
                rec.validate()
            except ValueError as exc:
                raise ValueError(f"game {self.game_id}: {exc}") from exc

    def win_rate(self) -> float:
        if not self.rounds:
            return 0.0
        wins = sum(1 for r in self.rounds if r.reward == 3)
        return wins / len(self.rounds)


def trajectories_to_arrays(games: list[GameTrajectory]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack games into rectangular (ego, opp, reward) arrays for the kernels.

    All games must have equal length (guaranteed after preprocessing).
    """
    if not games:
        raise ValueError("empty dataset")
    T = games[0].T
    for g in games:
        if g.T != T:
            raise ValueError(f"game {g.game_id} has {g.T} rounds, expected {T}; preprocess the dataset first")
    n = len(games)
    ego = np.empty((n, T), dtype=np.int64)
    opp = np.empty((n, T), dtype=np.int64)
    rew = np.empty((n, T), dtype=np.float64)
    for i, g in enumerate(games):
        for t, rec in enumerate(g.rounds):
            ego[i, t] = rec.ego
            opp[i, t] = rec.opp
            rew[i, t] = rec.reward
    return ego, opp, rew


def padding_mask(games: list[GameTrajectory]) -> np.ndarray:
    """Per-round weights: 1.0 for genuine rounds, 0.0 for appended padding."""
    if not games:
        raise ValueError("empty dataset")
    T = games[0].T
    mask = np.ones((len(games), T), dtype=np.float64)
    for i, g in enumerate(games):
        if g.padded_from is not None:
            mask[i, g.padded_from :] = 0.0
    return mask
