"""Contextual sophisticated experience-weighted attraction (CS-EWA).

Attraction learning conditioned on the joint action history of length L=2:
two tables of 81 (=3^4) contexts x 3 actions.  The self table tracks the
agent's own payoffs (its adaptive policy); the shadow table applies the same
update from the opponent's seat to forecast the opponent.  Decision mixing:

    forecast  pi_opp = a' * softmax(b*A_shadow[S]) + (1-a') * softmax(b*EV_soph)
    action    p      = a  * softmax(b*A_self[S])   + (1-a)  * softmax(b*EV(.|pi_opp))

where EV_soph is the opponent's expected payoff against the agent's own
adaptive policy (the "sophisticated opponent" hypothesis).  The six
parameters (alpha, alpha', phi, delta, rho, beta) are fit through smooth
bijections from unconstrained space: sigmoid for the unit-interval
parameters and softplus for the temperature beta.

Before two joint actions exist predictions are uniform and no table updates
occur.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..game import REWARDS
from .base import BehavioralModel, Prediction, StateMismatchError, softmax
from .csewa_kernels import csewa_logits, csewa_nll_grad, sigmoid, softplus

HISTORY_LEN = 2
N_CONTEXTS = 3 ** (2 * HISTORY_LEN)

_REWARDS_F = REWARDS.astype(np.float64)


@dataclass(frozen=True)
class CsEwaParams:
    alpha: float  # weight on the adaptive (self) strategy
    alpha_prime: float  # weight on the shadow-table opponent forecast
    phi_ewa: float  # attraction decay
    delta: float  # counterfactual reinforcement weight
    rho: float  # experience-weight decay
    beta: float  # softmax temperature

    @classmethod
    def from_unconstrained(cls, theta: np.ndarray) -> "CsEwaParams":
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != 6:
            raise ValueError("CS-EWA takes 6 unconstrained parameters")
        return cls(
            alpha=float(sigmoid(theta[0])),
            alpha_prime=float(sigmoid(theta[1])),
            phi_ewa=float(sigmoid(theta[2])),
            delta=float(sigmoid(theta[3])),
            rho=float(sigmoid(theta[4])),
            beta=float(softplus(theta[5])),
        )


@dataclass
class CsEwaState:
    self_table: np.ndarray = field(default_factory=lambda: np.zeros((N_CONTEXTS, 3)))
    shadow_table: np.ndarray = field(default_factory=lambda: np.zeros((N_CONTEXTS, 3)))
    self_n: np.ndarray = field(default_factory=lambda: np.ones(N_CONTEXTS))
    shadow_n: np.ndarray = field(default_factory=lambda: np.ones(N_CONTEXTS))
    last_state_index: int = -1
    # most recent joint actions, -1 while unset: (a_{t-2}, ao_{t-2}, a_{t-1}, ao_{t-1})
    history: tuple[int, int, int, int] = (-1, -1, -1, -1)

    def copy(self) -> "CsEwaState":
        return CsEwaState(
            self.self_table.copy(),
            self.shadow_table.copy(),
            self.self_n.copy(),
            self.shadow_n.copy(),
            self.last_state_index,
            self.history,
        )


def state_index(history: tuple[int, int, int, int]) -> int:
    """Base-3 encoding of the last two joint actions, oldest first; -1 if undefined."""
    if any(v < 0 for v in history):
        return -1
    a2, ao2, a1, ao1 = history
    return ((a2 * 3 + ao2) * 3 + a1) * 3 + ao1


def _ewa_update_row(table: np.ndarray, n_weights: np.ndarray, s: int, chosen: int, payoffs: np.ndarray, p: CsEwaParams) -> None:
    n_old = n_weights[s]
    n_new = p.rho * n_old + 1.0
    for j in range(3):
        w = 1.0 if j == chosen else p.delta
        table[s, j] = (p.phi_ewa * n_old * table[s, j] + w * payoffs[j]) / n_new
    n_weights[s] = n_new


def csewa_retrospective_update(state: CsEwaState, p: CsEwaParams, a_prev: int, a_opp_prev: int) -> CsEwaState:
    """Apply the EWA rule to both tables at the context of the observed round."""
    s = state.last_state_index
    if s < 0:
        raise ValueError("retrospective update requires a defined context index")
    out = state.copy()
    # self seat: our choice vs their move
    _ewa_update_row(out.self_table, out.self_n, s, a_prev, _REWARDS_F[:, a_opp_prev], p)
    # opponent seat: their choice vs our move
    _ewa_update_row(out.shadow_table, out.shadow_n, s, a_opp_prev, _REWARDS_F[:, a_prev], p)
    return out


def csewa_forecast(state: CsEwaState, p: CsEwaParams) -> np.ndarray:
    """Forecast distribution over the opponent's next move."""
    s = state.last_state_index
    if s < 0:
        return np.full(3, 1.0 / 3.0)
    sigma_self = softmax(p.beta * state.self_table[s])
    ev_soph = _REWARDS_F @ sigma_self  # opponent payoff for each reply to our policy
    pi_soph = softmax(p.beta * ev_soph)
    pi_shadow = softmax(p.beta * state.shadow_table[s])
    return p.alpha_prime * pi_shadow + (1.0 - p.alpha_prime) * pi_soph


def csewa_act(state: CsEwaState, p: CsEwaParams) -> Prediction:
    """Mix the adaptive policy with the best response to the forecast."""
    s = state.last_state_index
    if s < 0:
        return Prediction(np.zeros(3))
    pi_opp = csewa_forecast(state, p)
    sigma_self = softmax(p.beta * state.self_table[s])
    ev_self = _REWARDS_F @ pi_opp
    probs = p.alpha * sigma_self + (1.0 - p.alpha) * softmax(p.beta * ev_self)
    return Prediction(np.log(probs))


class CsEwaModel(BehavioralModel):
    name = "csewa"
    param_count = 6

    def init_state(self) -> CsEwaState:
        return CsEwaState()

    def step(self, theta, a, a_opp, r, state) -> tuple[Prediction, CsEwaState]:
        theta = self.check_theta(theta)
        if not isinstance(state, CsEwaState):
            raise StateMismatchError("state does not belong to the CS-EWA model")
        p = CsEwaParams.from_unconstrained(theta)
        if state.last_state_index >= 0:
            state = csewa_retrospective_update(state, p, a, a_opp)
        else:
            state = state.copy()
        _, _, a1, ao1 = state.history
        state.history = (a1, ao1, a, a_opp)
        state.last_state_index = state_index(state.history)
        return csewa_act(state, p), state

    def predict_logits(self, theta, ego, opp, rew) -> np.ndarray:
        theta = self.check_theta(theta)
        return csewa_logits(
            theta,
            _REWARDS_F,
            np.ascontiguousarray(ego, dtype=np.int64),
            np.ascontiguousarray(opp, dtype=np.int64),
        )

    def nll_and_grad(self, theta, ego, opp, rew, weights=None) -> tuple[float, np.ndarray]:
        theta = self.check_theta(theta)
        if weights is None:
            weights = np.ones(ego.shape, dtype=np.float64)
        nll, grad = csewa_nll_grad(
            theta,
            _REWARDS_F,
            np.ascontiguousarray(ego, dtype=np.int64),
            np.ascontiguousarray(opp, dtype=np.int64),
            np.ascontiguousarray(weights, dtype=np.float64),
        )
        return float(nll), grad
