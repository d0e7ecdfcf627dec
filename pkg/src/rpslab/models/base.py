"""Shared behavioral-model interface.

A behavioral model consumes one observed round (own action, opponent action,
reward) plus its internal state and emits logits over the ego player's next
move along with the updated state.  Implementations must be pure: stepping
is a function of (theta, inputs, state) only.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Prediction:
    """Next-move distribution as raw logits."""

    logits: np.ndarray

    def probs(self) -> np.ndarray:
        return softmax(self.logits)


class StateMismatchError(ValueError):
    """Raised when a state object is fed to a model that did not produce it."""


class BehavioralModel(ABC):
    name: str = "model"
    param_count: int = 0

    @abstractmethod
    def init_state(self):
        """Fresh pre-game state."""

    @abstractmethod
    def step(self, theta: np.ndarray, a: int, a_opp: int, r: float, state) -> tuple[Prediction, object]:
        """Process one observed round; return next-move prediction and new state."""

    def initial_prediction(self, theta: np.ndarray) -> Prediction:
        """Prediction before any observation. Uniform unless overridden."""
        return Prediction(np.zeros(3))

    def check_theta(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        if th.shape[0] != self.param_count:
            raise ValueError(f"{self.name}: expected {self.param_count} parameters, got {th.shape[0]}")
        if not np.all(np.isfinite(th)):
            raise ValueError(f"{self.name}: non-finite parameters")
        return th

    # --- whole-dataset paths (overridden with kernels where it matters) ---

    def predict_logits(self, theta: np.ndarray, ego: np.ndarray, opp: np.ndarray, rew: np.ndarray) -> np.ndarray:
        """Logits (n_games, T, 3); index t holds the prediction for round t."""
        theta = self.check_theta(theta)
        n, T = ego.shape
        out = np.zeros((n, T, 3))
        for i in range(n):
            state = self.init_state()
            out[i, 0] = self.initial_prediction(theta).logits
            for t in range(T - 1):
                pred, state = self.step(theta, int(ego[i, t]), int(opp[i, t]), float(rew[i, t]), state)
                out[i, t + 1] = pred.logits
        return out

    @abstractmethod
    def nll_and_grad(
        self, theta: np.ndarray, ego: np.ndarray, opp: np.ndarray, rew: np.ndarray, weights: np.ndarray | None = None
    ) -> tuple[float, np.ndarray]:
        """Weighted NLL over predictions for rounds 1..T-1 and its theta-gradient.

        ``weights[i, t]`` scales round t's scored prediction; None means all
        ones.  Zero weights mask rounds (padding) out of the objective.
        """


def model_step(model: BehavioralModel, theta, a: int, a_opp: int, r: float, state) -> tuple[Prediction, object]:
    """Step any model, enforcing the theta/state contracts."""
    return model.step(model.check_theta(theta), a, a_opp, r, state)


class NashModel(BehavioralModel):
    """Uniform random play: equal logits regardless of history. No parameters."""

    name = "nash"
    param_count = 0

    def init_state(self):
        return None

    def step(self, theta, a, a_opp, r, state):
        return Prediction(np.zeros(3)), None

    def nll_and_grad(self, theta, ego, opp, rew, weights=None):
        theta = self.check_theta(theta)
        n, T = ego.shape
        m = n * (T - 1) if weights is None else float(np.sum(weights[:, 1:]))
        return m * float(np.log(3.0)), np.zeros(0)
