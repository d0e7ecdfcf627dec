"""Evaluation machinery: data partitioning, cross-validated normalized
likelihood, win-rate statistics, signed-rank tests, and cross-generalization
matrices.

The normalized likelihood is the geometric-mean per-choice likelihood
exp(-NLL/M); uniform play scores exactly 1/3 under it.  Cross-generalization
results are only comparable within a row (one evaluation dataset), and the
matrix type deliberately exposes row access only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fitting import FitConfig, fit, nll as nll_of, prediction_count
from .game import GameTrajectory, trajectories_to_arrays
from .models.base import BehavioralModel


@dataclass(frozen=True)
class EvalScore:
    normalized_likelihood: float
    nll: float
    predictions: int
    fold_scores: tuple[float, float]

    def to_json(self) -> dict:
        return {
            "normalized_likelihood": self.normalized_likelihood,
            "nll": self.nll,
            "predictions": self.predictions,
            "fold_scores": list(self.fold_scores),
        }


def partition(dataset: list[GameTrajectory]) -> tuple[list[GameTrajectory], list[GameTrajectory]]:
    """(train, eval): odd-indexed games train, even-indexed games evaluate."""
    eval_set = [g for i, g in enumerate(dataset) if i % 2 == 0]
    train_set = [g for i, g in enumerate(dataset) if i % 2 == 1]
    return train_set, eval_set


def normalized_likelihood(nll: float, predictions: int) -> float:
    """Geometric-mean per-choice likelihood exp(-NLL/M)."""
    if predictions <= 0:
        raise ValueError("normalized likelihood needs at least one prediction")
    return math.exp(-nll / predictions)


def twofold_cv(model: BehavioralModel, eval_set: list[GameTrajectory], cfg: FitConfig | None = None, seed: int = 0) -> EvalScore:
    """Random two-fold split: fit on one fold, score held-out NLL on the other."""
    cfg = cfg or FitConfig()
    if len(eval_set) < 2:
        raise ValueError("two-fold cross-validation needs at least 2 games")
    order = np.random.default_rng(seed).permutation(len(eval_set))
    half = len(eval_set) // 2
    fold_a = [eval_set[i] for i in order[:half]]
    fold_b = [eval_set[i] for i in order[half:]]

    theta_a = fit(model, fold_a, cfg).theta
    theta_b = fit(model, fold_b, cfg).theta
    nll_b = nll_of(model, theta_a, fold_b)
    nll_a = nll_of(model, theta_b, fold_a)
    m_a = prediction_count(trajectories_to_arrays(fold_a))
    m_b = prediction_count(trajectories_to_arrays(fold_b))
    total = nll_a + nll_b
    m = m_a + m_b
    return EvalScore(
        normalized_likelihood=normalized_likelihood(total, m),
        nll=total,
        predictions=m,
        fold_scores=(normalized_likelihood(nll_b, m_b), normalized_likelihood(nll_a, m_a)),
    )


# --- win rates ------------------------------------------------------------

@dataclass
class WinRateStats:
    aggregate: tuple[float, float]  # (mean, 95% CI half-width)
    per_bot: dict[int, tuple[float, float]]
    over_time: list[tuple[int, float, float]]  # (window start round, mean, ci)
    window: int
    n_games: int

    def to_rows(self) -> list[dict]:
        rows = [
            {"kind": "aggregate", "key": "", "mean": self.aggregate[0], "ci": self.aggregate[1]},
        ]
        for bot_id in sorted(self.per_bot):
            mean, ci = self.per_bot[bot_id]
            rows.append({"kind": "per_bot", "key": str(bot_id), "mean": mean, "ci": ci})
        for start, mean, ci in self.over_time:
            rows.append({"kind": "over_time", "key": str(start), "mean": mean, "ci": ci})
        return rows


def _mean_ci(values: np.ndarray, method: str = "normal", seed: int = 0) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    if method == "bootstrap":
        rng = np.random.default_rng(seed)
        draws = rng.choice(values, size=(1000, values.size), replace=True).mean(axis=1)
        lo, hi = np.percentile(draws, [2.5, 97.5])
        return mean, float((hi - lo) / 2.0)
    return mean, float(1.96 * values.std(ddof=1) / math.sqrt(values.size))


def win_rate_stats(dataset: list[GameTrajectory], window: int = 30, ci_method: str = "normal") -> WinRateStats:
    """Win-rate summary: aggregate, per bot, and over non-overlapping windows."""
    if not dataset:
        raise ValueError("empty dataset")
    per_game = np.array([g.win_rate() for g in dataset])
    aggregate = _mean_ci(per_game, ci_method)

    per_bot: dict[int, tuple[float, float]] = {}
    by_bot: dict[int, list[float]] = {}
    for g, wr in zip(dataset, per_game):
        by_bot.setdefault(g.bot_id, []).append(wr)
    for bot_id, rates in by_bot.items():
        per_bot[bot_id] = _mean_ci(np.array(rates), ci_method)

    T = max(g.T for g in dataset)
    over_time = []
    for start in range(0, T, window):
        means = []
        for g in dataset:
            chunk = [1.0 if r.reward == 3 else 0.0 for r in g.rounds[start : start + window]]
            if chunk:
                means.append(float(np.mean(chunk)))
        if means:
            mean, ci = _mean_ci(np.array(means), ci_method)
            over_time.append((start, mean, ci))
    return WinRateStats(aggregate=aggregate, per_bot=per_bot, over_time=over_time, window=window, n_games=len(dataset))


# --- Wilcoxon signed-rank -------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    z: float
    p: float
    w_plus: float
    w_minus: float
    statistic: float  # min(w_plus, w_minus)
    n: int  # nonzero differences


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(x, y) -> WilcoxonResult:
    """Paired signed-rank test with average ranks for ties and normal approximation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("inputs must have equal length")
    d = x - y
    d = d[d != 0.0]
    n = d.size
    if n < 5:
        raise ValueError(f"need at least 5 nonzero differences, got {n}")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    mu = n * (n + 1) / 4.0
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0
    # tie correction over groups of equal |d|
    _, counts = np.unique(np.abs(d), return_counts=True)
    sigma2 -= float(((counts.astype(np.float64) ** 3 - counts).sum()) / 48.0)
    z = (w - mu) / math.sqrt(sigma2)
    p = math.erfc(abs(z) / math.sqrt(2.0))  # two-sided
    return WilcoxonResult(z=z, p=p, w_plus=w_plus, w_minus=w_minus, statistic=w, n=n)


# --- cross-generalization -------------------------------------------------

@dataclass
class XGenMatrix:
    """Scores keyed by (evaluation dataset row, program column).

    Rows are independently scaled; only row access is provided.
    """

    dataset_names: list[str]
    program_names: list[str]
    _cells: dict[tuple[str, str], EvalScore]

    def row(self, dataset_name: str) -> dict[str, EvalScore]:
        return {p: self._cells[(dataset_name, p)] for p in self.program_names}

    def to_rows(self) -> list[dict]:
        out = []
        for d in self.dataset_names:
            for p in self.program_names:
                cell = self._cells[(d, p)]
                out.append({"dataset": d, "program": p, **cell.to_json()})
        return out


def cross_generalization(
    models: dict[str, BehavioralModel],
    datasets: dict[str, list[GameTrajectory]],
    cfg: FitConfig | None = None,
    seed: int = 0,
) -> XGenMatrix:
    """Fit/score every program on every dataset's evaluation split."""
    cells: dict[tuple[str, str], EvalScore] = {}
    for dname, games in datasets.items():
        _, eval_set = partition(games)
        for pname, model in models.items():
            cells[(dname, pname)] = twofold_cv(model, eval_set, cfg, seed=seed)
    return XGenMatrix(dataset_names=list(datasets), program_names=list(models), _cells=cells)
