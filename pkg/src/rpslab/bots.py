"""The 15 opponent policies: 7 nonadaptive transition bots, 8 adaptive pattern counters.

Nonadaptive bots map a fixed rule over recent history to a move and follow it
with probability 0.9, otherwise playing uniformly at random over all three
actions.  Adaptive bots count opponent patterns keyed by a conditioning
context, predict the opponent's next move as the argmax of the relevant count
slice (ties broken uniformly at random), and play the counter with
probability 1.  Every bot plays uniformly at random until it has enough
history for its rule.

The roster is data-driven: specs serialize to/from a JSON config file so the
rule set can be adjusted without code changes.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .game import (
    TransitionKind,
    apply_transition,
    beats,
    check_action,
    classify_transition,
    payoff,
)

NONADAPTIVE_NOISE = 0.1

# Conditioning features for adaptive count tables.  Every feature takes
# values in {0,1,2}: moves directly, outcomes as win=0/tie=1/loss=2 from the
# tracked player's perspective.
_FEATURES = ("opp_prev", "bot_prev", "opp_prev2", "outcome_prev")


@dataclass(frozen=True)
class BotSpec:
    bot_id: int
    bot_class: str  # "nonadaptive" | "adaptive"
    rule: dict
    noise: float
    warmup_needed: int
    # how the noise mass is spread: over all three actions (default, so the
    # rule move keeps probability 0.9 + noise/3) or over the two others only
    noise_mode: str = "uniform_all"

    def to_json(self) -> dict:
        return {
            "bot_id": self.bot_id,
            "class": self.bot_class,
            "rule": self.rule,
            "noise": self.noise,
            "warmup_needed": self.warmup_needed,
            "noise_mode": self.noise_mode,
        }


@dataclass
class BotState:
    """Mutable per-game memory: recent rounds plus pattern counts (adaptive)."""

    history: deque = field(default_factory=lambda: deque(maxlen=4))  # (bot, opp) pairs
    n_seen: int = 0
    counts: np.ndarray | None = None


def _transition_spec(reference: str, kind: str) -> dict:
    return {"type": "transition", "reference": reference, "kind": kind}


def _counts_spec(context: list[str], target: dict) -> dict:
    return {"type": "counts", "context": context, "target": target}


def default_roster() -> list[BotSpec]:
    """The default 15-bot roster, ordered roughly by complexity within class."""
    specs = [
        BotSpec(1, "nonadaptive", {"type": "bias", "move": 0}, NONADAPTIVE_NOISE, 0),
        BotSpec(2, "nonadaptive", _transition_spec("self", "nil"), NONADAPTIVE_NOISE, 1),
        BotSpec(3, "nonadaptive", _transition_spec("self", "positive"), NONADAPTIVE_NOISE, 1),
        BotSpec(4, "nonadaptive", _transition_spec("self", "negative"), NONADAPTIVE_NOISE, 1),
        BotSpec(5, "nonadaptive", _transition_spec("opponent", "nil"), NONADAPTIVE_NOISE, 1),
        BotSpec(6, "nonadaptive", _transition_spec("opponent", "positive"), NONADAPTIVE_NOISE, 1),
        BotSpec(7, "nonadaptive", _transition_spec("opponent", "negative"), NONADAPTIVE_NOISE, 1),
        # Adaptive: what is counted, conditioned on what.
        BotSpec(8, "adaptive", _counts_spec([], {"kind": "move"}), 0.0, 0),
        BotSpec(9, "adaptive", _counts_spec([], {"kind": "transition", "base": "opp_prev"}), 0.0, 1),
        BotSpec(10, "adaptive", _counts_spec([], {"kind": "transition", "base": "bot_prev"}), 0.0, 1),
        BotSpec(11, "adaptive", _counts_spec(["opp_prev"], {"kind": "move"}), 0.0, 1),
        BotSpec(12, "adaptive", _counts_spec(["bot_prev"], {"kind": "move"}), 0.0, 1),
        BotSpec(13, "adaptive", _counts_spec(["bot_prev", "opp_prev"], {"kind": "move"}), 0.0, 1),
        BotSpec(14, "adaptive", _counts_spec(["outcome_prev"], {"kind": "transition", "base": "opp_prev"}), 0.0, 1),
        BotSpec(15, "adaptive", _counts_spec(["opp_prev2", "opp_prev"], {"kind": "move"}), 0.0, 2),
    ]
    return specs


def roster() -> list[BotSpec]:
    return default_roster()


def roster_by_id(specs: list[BotSpec] | None = None) -> dict[int, BotSpec]:
    return {s.bot_id: s for s in (specs or default_roster())}


def save_roster(specs: list[BotSpec], path: str | Path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in specs], indent=2) + "\n")


def load_roster(path: str | Path) -> list[BotSpec]:
    """Load and validate a roster config file."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError("roster config must be a JSON list of bot specs")
    specs = []
    seen_ids = set()
    for i, item in enumerate(raw):
        for key in ("bot_id", "class", "rule", "noise", "warmup_needed"):
            if key not in item:
                raise ValueError(f"roster entry {i}: missing field {key!r}")
        if item["class"] not in ("nonadaptive", "adaptive"):
            raise ValueError(f"roster entry {i}: unknown class {item['class']!r}")
        if item["class"] == "adaptive" and item["noise"] != 0.0:
            raise ValueError(f"roster entry {i}: adaptive bots must have noise 0.0")
        if item.get("noise_mode", "uniform_all") not in ("uniform_all", "uniform_other"):
            raise ValueError(f"roster entry {i}: noise_mode must be uniform_all|uniform_other")
        if item["bot_id"] in seen_ids:
            raise ValueError(f"roster entry {i}: duplicate bot_id {item['bot_id']}")
        seen_ids.add(item["bot_id"])
        _check_rule(item["rule"], i)
        specs.append(
            BotSpec(
                bot_id=int(item["bot_id"]),
                bot_class=item["class"],
                rule=item["rule"],
                noise=float(item["noise"]),
                warmup_needed=int(item["warmup_needed"]),
                noise_mode=item.get("noise_mode", "uniform_all"),
            )
        )
    return specs


def _check_rule(rule: dict, index: int) -> None:
    kind = rule.get("type")
    if kind == "bias":
        check_action(rule["move"])
    elif kind == "transition":
        if rule.get("reference") not in ("self", "opponent"):
            raise ValueError(f"roster entry {index}: transition reference must be self|opponent")
        if rule.get("kind") not in ("positive", "negative", "nil"):
            raise ValueError(f"roster entry {index}: transition kind must be positive|negative|nil")
    elif kind == "counts":
        for feat in rule.get("context", []):
            if feat not in _FEATURES:
                raise ValueError(f"roster entry {index}: unknown context feature {feat!r}")
        target = rule.get("target", {})
        if target.get("kind") not in ("move", "transition"):
            raise ValueError(f"roster entry {index}: target kind must be move|transition")
        if target.get("kind") == "transition" and target.get("base") not in ("opp_prev", "bot_prev"):
            raise ValueError(f"roster entry {index}: transition target needs base opp_prev|bot_prev")
    else:
        raise ValueError(f"roster entry {index}: unknown rule type {kind!r}")


def init_state(spec: BotSpec) -> BotState:
    counts = None
    if spec.bot_class == "adaptive":
        rank = len(spec.rule["context"]) + 1
        counts = np.zeros((3,) * rank, dtype=np.int64)
    return BotState(counts=counts)


# --- feature extraction -------------------------------------------------

def _feature(name: str, state: BotState) -> int | None:
    """Value of a conditioning feature from current history, None if undefined.

    "opp" is the player the bot is tracking (its opponent, the ego agent);
    history entries are (bot_move, opp_move) pairs, most recent last.
    """
    h = state.history
    if name == "opp_prev":
        return h[-1][1] if len(h) >= 1 else None
    if name == "bot_prev":
        return h[-1][0] if len(h) >= 1 else None
    if name == "opp_prev2":
        return h[-2][1] if len(h) >= 2 else None
    if name == "outcome_prev":
        if len(h) < 1:
            return None
        bot_move, opp_move = h[-1]
        r = payoff(opp_move, bot_move)[0]  # outcome from the tracked player's side
        return {3: 0, 0: 1, -1: 2}[r]
    raise ValueError(f"unknown feature {name!r}")


_KIND_BY_NAME = {
    "positive": TransitionKind.POSITIVE,
    "negative": TransitionKind.NEGATIVE,
    "nil": TransitionKind.NIL,
}
_KIND_INDEX = {TransitionKind.NIL: 0, TransitionKind.POSITIVE: 1, TransitionKind.NEGATIVE: 2}
_KIND_FROM_INDEX = {v: k for k, v in _KIND_INDEX.items()}


def _rule_move(spec: BotSpec, state: BotState) -> int:
    """The nonadaptive rule's move given current history (warmup satisfied)."""
    rule = spec.rule
    if rule["type"] == "bias":
        return rule["move"]
    bot_prev, opp_prev = state.history[-1]
    base = bot_prev if rule["reference"] == "self" else opp_prev
    return apply_transition(base, _KIND_BY_NAME[rule["kind"]])


def _predicted_moves(spec: BotSpec, state: BotState) -> list[int]:
    """Adaptive prediction: argmax set of the conditioned count slice, as moves."""
    rule = spec.rule
    idx = []
    for feat in rule["context"]:
        v = _feature(feat, state)
        if v is None:  # warmup guard should prevent this
            return [0, 1, 2]
    idx = tuple(_feature(feat, state) for feat in rule["context"])
    sl = state.counts[idx]
    top = np.flatnonzero(sl == sl.max())
    if rule["target"]["kind"] == "move":
        return [int(m) for m in top]
    base = _feature(rule["target"]["base"], state)
    return [apply_transition(base, _KIND_FROM_INDEX[int(k)]) for k in top]


def bot_act(spec: BotSpec, state: BotState, rng: np.random.Generator) -> int:
    """Draw the bot's move for the current round."""
    if state.n_seen < spec.warmup_needed:
        return int(rng.integers(3))
    if spec.bot_class == "nonadaptive":
        if rng.random() < spec.noise:
            if spec.noise_mode == "uniform_other":
                move = _rule_move(spec, state)
                return (move + 1 + int(rng.integers(2))) % 3
            return int(rng.integers(3))
        return _rule_move(spec, state)
    preds = _predicted_moves(spec, state)
    pred = preds[0] if len(preds) == 1 else int(preds[rng.integers(len(preds))])
    return beats(pred)


def bot_observe(spec: BotSpec, state: BotState, bot_move: int, opp_move: int) -> BotState:
    """Record one completed round, updating pattern counts for adaptive bots."""
    check_action(bot_move)
    check_action(opp_move)
    if spec.bot_class == "adaptive":
        rule = spec.rule
        ctx = [_feature(feat, state) for feat in rule["context"]]
        target = None
        if rule["target"]["kind"] == "move":
            target = opp_move
        else:
            base = _feature(rule["target"]["base"], state)
            if base is not None:
                target = _KIND_INDEX[classify_transition(base, opp_move)]
        if target is not None and all(v is not None for v in ctx):
            state.counts[tuple(ctx) + (target,)] += 1
    state.history.append((bot_move, opp_move))
    state.n_seen += 1
    return state


def oracle_best_response(spec: BotSpec, state: BotState, rng: np.random.Generator) -> int:
    """Best response given full knowledge of the bot's rule and memory.

    During warmup the bot is uniform, so the oracle is too.  For adaptive
    bots with tied predictions the oracle mirrors the bot's tie-break
    sampling with its own rng (it cannot see the bot's draw).
    """
    if state.n_seen < spec.warmup_needed:
        return int(rng.integers(3))
    if spec.bot_class == "nonadaptive":
        return beats(_rule_move(spec, state))
    preds = _predicted_moves(spec, state)
    pred = preds[0] if len(preds) == 1 else int(preds[rng.integers(len(preds))])
    return beats(beats(pred))
