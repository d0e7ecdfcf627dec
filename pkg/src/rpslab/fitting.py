"""Maximum-likelihood parameter estimation for behavioral models.

Adaptive gradient descent (AdaBelief) on the unconstrained parameter vector,
restarted from several seeded standard-normal initializations; the restart
with the lowest final NLL wins.  Fitting is always aggregate: one parameter
vector per dataset, never per game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import trajectories_to_arrays
from .models.base import BehavioralModel


class FitError(RuntimeError):
    pass


class NonFiniteLogits(FitError):
    def __init__(self, game_id: str, round_index: int):
        self.game_id = game_id
        self.round_index = round_index
        super().__init__(f"non-finite logits at game {game_id!r}, round {round_index}")


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 5e-2
    max_steps: int = 10_000
    window: int = 100
    rel_tol: float = 1e-2
    restarts: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    minibatch_games: int | None = None  # full-batch by default
    mask_padding: bool = False  # exclude preprocessing padding from the objective
    jobs: int = 1  # concurrent restarts
    track_trace: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_steps <= 0 or self.window <= 0 or self.rel_tol <= 0:
            raise ValueError("learning_rate, max_steps, window and rel_tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class FitResult:
    theta: np.ndarray
    nll: float
    steps_used: int
    restart_index: int
    converged: bool
    nll_trace: list[float] | None = None

    def to_json(self) -> dict:
        return {
            "theta": [float(x) for x in self.theta],
            "nll": self.nll,
            "steps_used": self.steps_used,
            "restart_index": self.restart_index,
            "converged": self.converged,
        }


def _as_arrays(dataset):
    if isinstance(dataset, tuple) and len(dataset) == 3:
        return dataset
    return trajectories_to_arrays(list(dataset))


def nll(model: BehavioralModel, theta, dataset, weights: np.ndarray | None = None) -> float:
    """Summed negative log likelihood of next-move predictions (rounds 1..T-1)."""
    ego, opp, rew = _as_arrays(dataset)
    value, _ = model.nll_and_grad(theta, ego, opp, rew, weights)
    if not math.isfinite(value):
        _locate_bad_round(model, theta, dataset)
        raise FitError("non-finite NLL")  # pragma: no cover - locate raises first
    return value


def gradient(model: BehavioralModel, theta, dataset, weights: np.ndarray | None = None) -> np.ndarray:
    ego, opp, rew = _as_arrays(dataset)
    value, grad = model.nll_and_grad(theta, ego, opp, rew, weights)
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        _locate_bad_round(model, theta, dataset)
        raise FitError("non-finite gradient")  # pragma: no cover
    return grad


def _locate_bad_round(model, theta, dataset) -> None:
    """Name the first offending (game, round) for a non-finite objective."""
    games = list(dataset) if not isinstance(dataset, tuple) else None
    ego, opp, rew = _as_arrays(dataset)
    logits = model.predict_logits(theta, ego, opp, rew)
    bad = ~np.isfinite(logits).all(axis=2)
    for i in range(bad.shape[0]):
        ts = np.flatnonzero(bad[i])
        if ts.size:
            game_id = games[i].game_id if games else str(i)
            raise NonFiniteLogits(game_id, int(ts[0]))


def prediction_count(dataset) -> int:
    ego, _, _ = _as_arrays(dataset)
    n, T = ego.shape
    return n * (T - 1)


def _run_adabelief(model, arrays, weights, theta0: np.ndarray, cfg: FitConfig, rng: np.random.Generator):
    """One optimization run; returns (theta, nll, steps, converged, trace)."""
    ego, opp, rew = arrays
    theta = theta0.copy()
    m = np.zeros_like(theta)
    s = np.zeros_like(theta)
    trace: list[float] = []
    window_vals: list[float] = []
    converged = False
    step = 0
    n_games = ego.shape[0]
    for step in range(1, cfg.max_steps + 1):
        if cfg.minibatch_games and cfg.minibatch_games < n_games:
            pick = rng.choice(n_games, size=cfg.minibatch_games, replace=False)
            wsub = weights[pick] if weights is not None else None
            value, grad = model.nll_and_grad(theta, ego[pick], opp[pick], rew[pick], wsub)
            value *= n_games / cfg.minibatch_games
            grad = grad * (n_games / cfg.minibatch_games)
        else:
            value, grad = model.nll_and_grad(theta, ego, opp, rew, weights)
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            return theta, math.inf, step, False, trace
        if cfg.track_trace:
            trace.append(min(value, trace[-1]) if trace else value)
        window_vals.append(value)
        if len(window_vals) > cfg.window:
            old = window_vals[-cfg.window - 1]
            if abs(old - value) / max(abs(old), 1e-12) < cfg.rel_tol:
                converged = True
                break
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        diff = grad - m
        s = cfg.beta2 * s + (1.0 - cfg.beta2) * diff * diff + cfg.eps
        mhat = m / (1.0 - cfg.beta1**step)
        shat = s / (1.0 - cfg.beta2**step)
        theta = theta - cfg.learning_rate * mhat / (np.sqrt(shat) + cfg.eps)
    final, _ = model.nll_and_grad(theta, ego, opp, rew, weights)
    if not math.isfinite(final):
        return theta, math.inf, step, False, trace
    return theta, float(final), step, converged, trace


def fit(model: BehavioralModel, dataset, cfg: FitConfig | None = None) -> FitResult:
    """MLE fit: best of ``cfg.restarts`` seeded runs by final NLL."""
    cfg = cfg or FitConfig()
    try:
        arrays = _as_arrays(dataset)
    except ValueError as exc:
        raise FitError(str(exc)) from exc
    if arrays[0].shape[0] == 0:
        raise FitError("empty dataset")
    weights = None
    if cfg.mask_padding and not isinstance(dataset, tuple):
        from .game import padding_mask

        weights = padding_mask(list(dataset))

    if model.param_count == 0:
        value, _ = model.nll_and_grad(np.zeros(0), *arrays, weights)
        return FitResult(np.zeros(0), float(value), 0, 0, True, [value] if cfg.track_trace else None)

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    def run_one(ri: int):
        rng = np.random.default_rng(seeds[ri])
        theta0 = rng.standard_normal(model.param_count)
        return ri, _run_adabelief(model, arrays, weights, theta0, cfg, rng)

    if cfg.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(run_one, range(cfg.restarts)))
    else:
        outcomes = [run_one(ri) for ri in range(cfg.restarts)]

    best: FitResult | None = None
    for ri, (theta, value, steps, converged, trace) in outcomes:  # deterministic order
        if best is None or value < best.nll:
            best = FitResult(theta, value, steps, ri, converged, trace if cfg.track_trace else None)
    if best is None or not math.isfinite(best.nll):
        raise FitError("all restarts diverged to non-finite NLL")
    return best


def fit_config_for_search(seed: int = 0) -> FitConfig:
    """Lighter settings used to score candidates inside discovery runs."""
    return FitConfig(restarts=2, max_steps=400, window=50, rel_tol=1e-2, seed=seed)
