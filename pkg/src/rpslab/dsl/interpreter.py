"""Program execution: the single-step API and the batched model wrapper."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..game import REWARDS
from ..models.base import BehavioralModel, Prediction, StateMismatchError
from .ast import ProgramAST
from .compile import Tape, compile_program
from .kernels import dataset_logits, dataset_nll_grad, tape_step
from .parser import serialize

_REWARDS_F = REWARDS.astype(np.float64)


def program_id(program: ProgramAST) -> str:
    """Stable identity: hash of the canonical serialization."""
    return hashlib.sha256(serialize(program).encode()).hexdigest()[:16]


@dataclass
class DslState:
    """Interpreter state: flat state tensors plus the previous joint action."""

    program_id: str
    values: np.ndarray
    prev_a: int = -1
    prev_a_opp: int = -1
    t: int = 0

    def copy(self) -> "DslState":
        return DslState(self.program_id, self.values.copy(), self.prev_a, self.prev_a_opp, self.t)


class DslModel(BehavioralModel):
    """A compiled DSL program exposed through the behavioral-model interface."""

    def __init__(self, program: ProgramAST):
        self.tape: Tape = compile_program(program)
        self.program = program
        self.name = program.name
        self.param_count = program.param_count
        self.program_id = program_id(program)

    def init_state(self) -> DslState:
        return DslState(self.program_id, self.tape.initial_state_values())

    def _check_state(self, state) -> DslState:
        if not isinstance(state, DslState) or state.program_id != self.program_id:
            raise StateMismatchError(f"state does not belong to program {self.name!r}")
        return state

    def _step_buffers(self):
        n_regs = self.tape.arrays[0].shape[0]
        return (
            np.zeros((n_regs, 27)),
            np.zeros((n_regs, 27, 0)),
            np.zeros(max(self.tape.n_states, 1), dtype=np.bool_),
            np.zeros(3),
            np.zeros((3, 0)),
        )

    def step(self, theta, a, a_opp, r, state) -> tuple[Prediction, DslState]:
        theta = self.check_theta(theta)
        state = self._check_state(state)
        new = state.copy()
        regs, gregs, skipbuf, logits, glogits = self._step_buffers()
        grads = np.zeros((new.values.shape[0], 0))
        tape_step(
            self.tape.arrays, self.tape.policy_reg, theta, _REWARDS_F,
            regs, gregs, new.values, grads, skipbuf,
            a, a_opp, float(r), state.prev_a, state.prev_a_opp, 1, 1,
            logits, glogits,
        )
        new.prev_a = a
        new.prev_a_opp = a_opp
        new.t = state.t + 1
        return Prediction(logits), new

    def initial_prediction(self, theta) -> Prediction:
        theta = self.check_theta(theta)
        regs, gregs, skipbuf, logits, glogits = self._step_buffers()
        values = self.tape.initial_state_values()
        grads = np.zeros((values.shape[0], 0))
        tape_step(
            self.tape.arrays, self.tape.policy_reg, theta, _REWARDS_F,
            regs, gregs, values, grads, skipbuf,
            -1, -1, 0.0, -1, -1, 0, 1,
            logits, glogits,
        )
        return Prediction(logits)

    def predict_logits(self, theta, ego, opp, rew) -> np.ndarray:
        theta = self.check_theta(theta)
        return dataset_logits(
            self.tape.arrays,
            self.tape.policy_reg,
            self.tape.total_size,
            theta,
            _REWARDS_F,
            np.ascontiguousarray(ego, dtype=np.int64),
            np.ascontiguousarray(opp, dtype=np.int64),
            np.ascontiguousarray(rew, dtype=np.float64),
        )

    def nll_and_grad(self, theta, ego, opp, rew, weights=None) -> tuple[float, np.ndarray]:
        theta = self.check_theta(theta)
        if weights is None:
            weights = np.ones(ego.shape, dtype=np.float64)
        nll, grad = dataset_nll_grad(
            self.tape.arrays,
            self.tape.policy_reg,
            self.tape.total_size,
            self.param_count,
            theta,
            _REWARDS_F,
            np.ascontiguousarray(ego, dtype=np.int64),
            np.ascontiguousarray(opp, dtype=np.int64),
            np.ascontiguousarray(rew, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
        )
        return float(nll), grad


@lru_cache(maxsize=256)
def _model_for(program: ProgramAST) -> DslModel:
    return DslModel(program)


def interpret_step(program: ProgramAST, theta, a: int, a_opp: int, r: float, state: DslState | None = None) -> tuple[Prediction, DslState]:
    """Apply one observed round to a program, returning (prediction, new state)."""
    model = _model_for(program)
    if state is None:
        state = model.init_state()
    return model.step(theta, a, a_opp, r, state)


def initial_prediction(program: ProgramAST, theta) -> Prediction:
    """The pre-observation prediction; always a valid distribution."""
    return _model_for(program).initial_prediction(theta)
