"""Built-in programs.

``nash`` is the uniform-play template every search starts from.  The four
``*_sbb`` programs are canonical simplest-but-best structures, named for the
agent dataset each models best.  They share one recipe: a reward-tracking Q
tensor (running average with decay), an opponent move model whose
conditioning rank is the distinguishing feature, a counter-map of the
forecast, and in some cases a stickiness bonus toward repeating one's
previous move.  All are level-1: the forecast feeds action values directly,
with no recursive opponent reasoning.
"""

from __future__ import annotations

from functools import lru_cache

from .ast import ProgramAST, check_valid
from .parser import parse

_SOURCES = {
    "nash": """
(program nash
  (params 0)
  (policy (const 1.0)))
""",
    # 3x3x3 Q keyed by (next action, prior joint action), scalar opponent
    # move frequencies, and stickiness.
    "human_sbb": """
(program human_sbb
  (params 5)
  (state q (shape 3 3 3) (init 0.0) (at a prev_a_opp prev_a)
    (update (ema (slice q a prev_a_opp prev_a) (input r) (param 0 sigmoid))))
  (state opp_freq (shape 3) (init 0.0) (at free)
    (update (add (decay (slice opp_freq free) (param 1 sigmoid)) (onehot a_opp))))
  (policy
    (add
      (add
        (mul (param 2) (slice q free a_opp a))
        (mul (param 3)
          (counter (div (slice opp_freq free) (sum (slice opp_freq free) 0)))))
      (mul (param 4) (onehot a)))))
""",
    # Like human_sbb but the opponent model conditions on the opponent's
    # previous move (3x3).
    "gemini_sbb": """
(program gemini_sbb
  (params 5)
  (state q (shape 3 3 3) (init 0.0) (at a prev_a_opp prev_a)
    (update (ema (slice q a prev_a_opp prev_a) (input r) (param 0 sigmoid))))
  (state opp_model (shape 3 3) (init 0.0) (at prev_a_opp free)
    (update (add (decay (slice opp_model prev_a_opp free) (param 1 sigmoid)) (onehot a_opp))))
  (policy
    (add
      (add
        (mul (param 2) (slice q free a_opp a))
        (mul (param 3)
          (counter (div (slice opp_model a_opp free) (sum (slice opp_model a_opp free) 0)))))
      (mul (param 4) (onehot a)))))
""",
    # Opponent model conditioned on the full prior joint action (3x3x3);
    # no stickiness term.
    "gpt51_sbb": """
(program gpt51_sbb
  (params 4)
  (state q (shape 3 3 3) (init 0.0) (at a prev_a_opp prev_a)
    (update (ema (slice q a prev_a_opp prev_a) (input r) (param 0 sigmoid))))
  (state opp_model (shape 3 3 3) (init 0.0) (at prev_a prev_a_opp free)
    (update (add (decay (slice opp_model prev_a prev_a_opp free) (param 1 sigmoid)) (onehot a_opp))))
  (policy
    (add
      (mul (param 2) (slice q free a_opp a))
      (mul (param 3)
        (counter (div (slice opp_model a a_opp free) (sum (slice opp_model a a_opp free) 0)))))))
""",
    # Single-dimensional Q vector and opponent frequencies, with stickiness.
    "gptoss_sbb": """
(program gptoss_sbb
  (params 5)
  (state q (shape 3) (init 0.0) (at a)
    (update (ema (slice q a) (input r) (param 0 sigmoid))))
  (state opp_freq (shape 3) (init 0.0) (at free)
    (update (add (decay (slice opp_freq free) (param 1 sigmoid)) (onehot a_opp))))
  (policy
    (add
      (add
        (mul (param 2) (slice q free))
        (mul (param 3)
          (counter (div (slice opp_freq free) (sum (slice opp_freq free) 0)))))
      (mul (param 4) (onehot a)))))
""",
}

BUILTIN_NAMES = tuple(_SOURCES)


@lru_cache(maxsize=None)
def _table() -> dict[str, ProgramAST]:
    return {name: check_valid(parse(src)) for name, src in _SOURCES.items()}


def builtins() -> dict[str, ProgramAST]:
    return dict(_table())


def get_builtin(name: str) -> ProgramAST:
    table = _table()
    if name not in table:
        raise KeyError(f"unknown builtin {name!r}; available: {', '.join(table)}")
    return table[name]
