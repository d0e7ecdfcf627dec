"""Command-line orchestration: reproducible experiments over the library.

Every artifact-producing command writes a ``<out>.manifest.json`` beside its
outputs recording the full configuration, seeds, input file hashes, and the
package version, so runs can be replayed exactly.  Errors leave the process
with a nonzero exit code and a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bots import load_roster
from .data_io import (
    DatasetError,
    ModelAgent,
    OracleAgent,
    PreprocessConfig,
    RandomAgent,
    load,
    load_raw,
    preprocess,
    replay_eval,
    save,
    simulate_games,
)
from .discovery import SbbError, SearchConfig, evolve, pareto_frontier, save_archive, sbb
from .dsl import DslModel, get_builtin, parse, serialize
from .dsl.builtins import BUILTIN_NAMES
from .evaluation import cross_generalization, partition, twofold_cv, win_rate_stats
from .fitting import FitConfig, FitError, fit
from .llm_player import HttpChatClient, LlmClientConfig, collect
from .models import CsEwaModel, NashModel


class CliError(click.ClickException):
    def show(self, file=None):
        payload = {"error": self.__class__.__name__, "message": self.message}
        print(json.dumps(payload), file=sys.stderr)


def _fail(exc: Exception) -> CliError:
    err = CliError(str(exc))
    err.__class__ = type(exc.__class__.__name__, (CliError,), {})
    return CliError(f"{exc.__class__.__name__}: {exc}")


def _version() -> str:
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).parent,
        )
        if described.returncode == 0:
            return f"{__version__}+{described.stdout.strip()}"
    except (OSError, subprocess.TimeoutExpired):
        pass
    return __version__


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class Manifest:
    def __init__(self, command: str, config: dict, seed: int | None, inputs: list[str]):
        self.data = {
            "command": command,
            "config": config,
            "seeds": {"seed": seed},
            "input_hashes": {p: _sha256(Path(p)) for p in inputs if p and Path(p).exists()},
            "version": _version(),
            "started": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }

    def write(self, beside: str | Path) -> None:
        self.data["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        path = Path(str(beside) + ".manifest.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def resolve_model(spec: str):
    """nash | csewa | a builtin name | dsl:PATH."""
    if spec == "nash":
        return NashModel()
    if spec == "csewa":
        return CsEwaModel()
    if spec.startswith("dsl:"):
        return DslModel(parse(Path(spec[4:]).read_text()))
    if spec in BUILTIN_NAMES:
        return DslModel(get_builtin(spec))
    raise CliError(f"unknown model {spec!r}: use nash, csewa, a builtin name, or dsl:FILE")


def _theta_from(value: str | None, model) -> np.ndarray:
    if value is None:
        return np.zeros(model.param_count)
    if value.startswith("@"):
        obj = json.loads(Path(value[1:]).read_text())
        if isinstance(obj, dict):
            obj = obj["theta"]
        return np.asarray(obj, dtype=float)
    return np.asarray(json.loads(value), dtype=float)


def _bots_arg(value: str) -> list[int]:
    if value == "all":
        return list(range(1, 16))
    if ".." in value:
        lo, hi = value.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(value)]


def _specs(bots_config: str | None):
    return load_roster(bots_config) if bots_config else None


@click.group()
@click.version_option(__version__)
def main():
    """Iterated rock-paper-scissors laboratory."""


@main.command()
@click.option("--agent", type=click.Choice(["random", "oracle", "model"]), required=True)
@click.option("--bots", default="all", help="all, a single ID, or LO..HI")
@click.option("--games", default=20, show_default=True)
@click.option("--rounds", default=300, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--model", "model_spec", default=None, help="for --agent model: nash|csewa|builtin|dsl:FILE")
@click.option("--theta", default=None, help="JSON list or @file (for --agent model)")
@click.option("--bots-config", default=None, help="roster JSON file")
@click.option("--jobs", default=1, show_default=True, help="bots simulated concurrently (limited gains: bot stepping is pure python)")
@click.option("--out", required=True)
def simulate(agent, bots, games, rounds, seed, model_spec, theta, bots_config, jobs, out):
    """Simulate games of a scripted agent against roster bots."""
    try:
        specs = _specs(bots_config)
        label = agent

        def make_player():
            nonlocal label
            if agent == "random":
                return RandomAgent()
            if agent == "oracle":
                return OracleAgent()
            if not model_spec:
                raise CliError("--agent model requires --model")
            m = resolve_model(model_spec)
            player = ModelAgent(m, _theta_from(theta, m))
            label = player.name
            return player

        bot_ids = _bots_arg(bots)

        def run_bot(pair):
            i, bot_id = pair
            return simulate_games(make_player(), bot_id, games, rounds, seed + i, specs=specs).games

        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                chunks = list(pool.map(run_bot, list(enumerate(bot_ids))))
        else:
            chunks = [run_bot(p) for p in enumerate(bot_ids)]
        all_games = [g for chunk in chunks for g in chunk]
        from .data_io import DatasetFile

        manifest = Manifest("simulate", {"agent": agent, "bots": bots, "games": games, "rounds": rounds, "model": model_spec, "theta": theta}, seed, [bots_config or ""])
        save(DatasetFile.new(all_games, agent_label=label, seed=seed), out)
        manifest.write(out)
        stats = win_rate_stats(all_games)
        click.echo(json.dumps({"games": len(all_games), "win_rate": stats.aggregate[0], "ci": stats.aggregate[1]}))
    except (ValueError, DatasetError, FitError) as exc:
        raise _fail(exc) from exc


@main.command("collect-llm")
@click.option("--config", "config_path", required=True, help="LlmClientConfig JSON")
@click.option("--bots", default="all")
@click.option("--games", default=20, show_default=True)
@click.option("--rounds", default=300, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--bots-config", default=None)
@click.option("--concurrency", default=1, show_default=True, help="games played in parallel per bot")
@click.option("--out", required=True)
def collect_llm(config_path, bots, games, rounds, seed, bots_config, concurrency, out):
    """Collect gameplay from a chat endpoint, one query per round."""
    try:
        cfg = LlmClientConfig.from_file(config_path)
        client = HttpChatClient(cfg)
        specs = _specs(bots_config)
        bot_ids = _bots_arg(bots)
        manifest = Manifest("collect-llm", {"config": config_path, "bots": bots, "games": games, "rounds": rounds}, seed, [config_path, bots_config or ""])
        results = {}
        for i, bot_id in enumerate(bot_ids):
            path = out if len(bot_ids) == 1 else str(Path(out).with_suffix("")) + f".bot{bot_id}.jsonl"
            dataset, stats = collect(
                client, bot_id, n_games=games, T=rounds, seed=seed + i,
                out_path=path, agent_label=cfg.model, specs=specs,
                max_retries=cfg.max_retries, concurrency=concurrency,
            )
            results[bot_id] = {"path": path, "retries": stats.retries, "missing_rounds": stats.missing_rounds}
        manifest.write(out)
        click.echo(json.dumps(results))
    except (ValueError, DatasetError, OSError) as exc:
        raise _fail(exc) from exc


@main.command("preprocess")
@click.option("--in", "in_path", required=True)
@click.option("--out", required=True)
@click.option("--config", "config_path", default=None, help="PreprocessConfig JSON")
def preprocess_cmd(in_path, out, config_path):
    """Clean a raw dataset: exclusion, deduction, imputation, padding."""
    try:
        cfg = PreprocessConfig()
        if config_path:
            obj = json.loads(Path(config_path).read_text())
            if "excluded_ids" in obj:
                obj["excluded_ids"] = tuple(obj["excluded_ids"])
            cfg = PreprocessConfig(**obj)
        raw = load_raw(in_path)
        manifest = Manifest("preprocess", {"in": in_path, "config": config_path}, None, [in_path, config_path or ""])
        dataset, report = preprocess(raw, cfg)
        save(dataset, out)
        Path(str(out) + ".report.json").write_text(json.dumps(report, indent=2) + "\n")
        manifest.write(out)
        click.echo(json.dumps({"kept": len(dataset.games), "excluded": len(report["excluded"]), "deduced": report["deduced"], "imputed": report["imputed"]}))
    except (ValueError, DatasetError) as exc:
        raise _fail(exc) from exc


@main.command("fit")
@click.option("--model", "model_spec", required=True)
@click.option("--data", "data_path", required=True)
@click.option("--restarts", default=10, show_default=True)
@click.option("--lr", default=5e-2, show_default=True)
@click.option("--max-steps", default=10_000, show_default=True)
@click.option("--window", default=100, show_default=True)
@click.option("--rel-tol", default=1e-2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mask-padding", is_flag=True, help="exclude preprocessing padding from the objective")
@click.option("--jobs", default=1, show_default=True, help="concurrent restarts")
@click.option("--out", required=True)
def fit_cmd(model_spec, data_path, restarts, lr, max_steps, window, rel_tol, seed, mask_padding, jobs, out):
    """Maximum-likelihood fit of a model to a dataset."""
    try:
        model = resolve_model(model_spec)
        dataset = load(data_path)
        cfg = FitConfig(learning_rate=lr, max_steps=max_steps, window=window, rel_tol=rel_tol, restarts=restarts, seed=seed, mask_padding=mask_padding, jobs=jobs)
        manifest = Manifest("fit", {"model": model_spec, "data": data_path, **cfg.__dict__}, seed, [data_path])
        result = fit(model, dataset.games, cfg)
        payload = {"model": model_spec, **result.to_json()}
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps(payload, indent=2) + "\n")
        manifest.write(out)
        click.echo(json.dumps({"nll": result.nll, "converged": result.converged}))
    except (ValueError, DatasetError, FitError) as exc:
        raise _fail(exc) from exc


@main.command("evaluate")
@click.option("--model", "model_spec", required=True)
@click.option("--data", "data_path", required=True)
@click.option("--restarts", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True, help="concurrent restarts")
@click.option("--out", default=None)
def evaluate_cmd(model_spec, data_path, restarts, seed, jobs, out):
    """Two-fold cross-validated normalized likelihood on the evaluation split."""
    try:
        model = resolve_model(model_spec)
        dataset = load(data_path)
        _, eval_set = partition(dataset.games)
        cfg = FitConfig(restarts=restarts, seed=seed, jobs=jobs)
        manifest = Manifest("evaluate", {"model": model_spec, "data": data_path, "restarts": restarts}, seed, [data_path])
        score = twofold_cv(model, eval_set, cfg, seed=seed)
        payload = {"model": model_spec, "eval_games": len(eval_set), **score.to_json()}
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(json.dumps(payload, indent=2) + "\n")
            manifest.write(out)
        click.echo(json.dumps(payload))
    except (ValueError, DatasetError, FitError) as exc:
        raise _fail(exc) from exc


@main.command("discover")
@click.option("--train", "train_path", required=True, help="dataset file; odd-indexed games feed the search, even-indexed games score SBB")
@click.option("--budget", default=500, show_default=True)
@click.option("--mutator", type=click.Choice(["rule", "external"]), default="rule", show_default=True)
@click.option("--epsilon", default=0.005, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--endpoint", default=None, help="external mutator base URL")
@click.option("--credential-env", default=None)
@click.option("--eval-restarts", default=4, show_default=True, help="restarts when scoring frontier programs on the eval split")
@click.option("--jobs", default=1, show_default=True, help="candidates scored concurrently (affects the search trajectory)")
@click.option("--out", "out_dir", required=True)
def discover_cmd(train_path, budget, mutator, epsilon, seed, endpoint, credential_env, eval_restarts, jobs, out_dir):
    """Evolve programs on the training split; report frontier and SBB pick."""
    try:
        dataset = load(train_path)
        train_set, eval_set = partition(dataset.games)
        cfg = SearchConfig(budget=budget, mutator=mutator, epsilon=epsilon, seed=seed, jobs=jobs)
        manifest = Manifest("discover", {"train": train_path, "budget": budget, "mutator": mutator, "epsilon": epsilon, "eval_restarts": eval_restarts}, seed, [train_path])

        mut = None
        if mutator == "external":
            from .discovery import EndpointConfig, ExternalMutator

            if not endpoint:
                raise CliError("--mutator external requires --endpoint")
            mut = ExternalMutator(EndpointConfig(base_url=endpoint, credential_env=credential_env))

        t0 = time.time()
        archive = evolve(train_set, cfg, mutator=mut)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_archive(archive, out / "archive.jsonl")

        frontier = pareto_frontier(archive)
        eval_cfg = FitConfig(restarts=eval_restarts, max_steps=2000, seed=seed)
        eval_scores = {c.id: twofold_cv(DslModel(c.program), eval_set, eval_cfg, seed=seed).normalized_likelihood for c in frontier}
        (out / "frontier.json").write_text(
            json.dumps(
                [
                    {"id": c.id, "train_score": c.train_score, "effort": c.effort, "eval_score": eval_scores[c.id], "program": serialize(c.program)}
                    for c in frontier
                ],
                indent=2,
            )
            + "\n"
        )
        pick = sbb(archive, eval_scores, epsilon)
        report = {
            "sbb_id": pick.id,
            "sbb_name": pick.program.name,
            "eval_score": eval_scores[pick.id],
            "effort": pick.effort,
            "epsilon": epsilon,
            "program": serialize(pick.program),
            "archive_size": len(archive),
            "diagnostics": archive.diagnostics,
            "elapsed_seconds": time.time() - t0,
        }
        (out / "sbb_report.json").write_text(json.dumps(report, indent=2) + "\n")
        manifest.write(out / "run")
        click.echo(json.dumps({"archive": len(archive), "frontier": len(frontier), "sbb": pick.id, "eval_score": eval_scores[pick.id]}))
    except (ValueError, DatasetError, FitError, SbbError) as exc:
        raise _fail(exc) from exc


@main.group()
def analyze():
    """Batch analyses producing plot-ready tables."""


@analyze.command("xgen")
@click.option("--programs", "programs_dir", required=True, help="directory of DSL program files")
@click.option("--datasets", "dataset_paths", required=True, multiple=True)
@click.option("--restarts", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True)
def xgen_cmd(programs_dir, dataset_paths, restarts, seed, out):
    """Cross-generalization matrix of programs over datasets."""
    try:
        models = {}
        for path in sorted(Path(programs_dir).glob("*")):
            if path.is_file():
                program = parse(path.read_text())
                models[program.name] = DslModel(program)
        if not models:
            raise CliError(f"no program files found in {programs_dir}")
        datasets = {Path(p).stem: load(p).games for p in dataset_paths}
        manifest = Manifest("analyze-xgen", {"programs": programs_dir, "datasets": list(dataset_paths), "restarts": restarts}, seed, list(dataset_paths))
        matrix = cross_generalization(models, datasets, FitConfig(restarts=restarts, max_steps=2000, seed=seed), seed=seed)
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps(matrix.to_rows(), indent=2) + "\n")
        manifest.write(out)
        click.echo(json.dumps({"rows": len(matrix.dataset_names), "cols": len(matrix.program_names)}))
    except (ValueError, DatasetError, FitError) as exc:
        raise _fail(exc) from exc


@analyze.command("winrates")
@click.option("--data", "data_path", required=True)
@click.option("--window", default=30, show_default=True)
@click.option("--out", required=True)
def winrates_cmd(data_path, window, out):
    """Win-rate tables: aggregate, per bot, and over time."""
    try:
        dataset = load(data_path)
        manifest = Manifest("analyze-winrates", {"data": data_path, "window": window}, None, [data_path])
        stats = win_rate_stats(dataset.games, window=window)
        rows = stats.to_rows()
        outp = Path(out)
        outp.parent.mkdir(parents=True, exist_ok=True)
        if outp.suffix == ".csv":
            import csv as _csv

            with outp.open("w", newline="") as fh:
                writer = _csv.DictWriter(fh, fieldnames=["kind", "key", "mean", "ci"])
                writer.writeheader()
                writer.writerows(rows)
        else:
            outp.write_text(json.dumps(rows, indent=2) + "\n")
        manifest.write(out)
        click.echo(json.dumps({"aggregate": stats.aggregate[0], "ci": stats.aggregate[1], "games": stats.n_games}))
    except (ValueError, DatasetError) as exc:
        raise _fail(exc) from exc


@analyze.command("replay")
@click.option("--model", "model_spec", required=True)
@click.option("--data", "data_path", required=True)
@click.option("--theta", default=None, help="JSON list or @file; fit on the data when omitted")
@click.option("--seed", default=0, show_default=True)
@click.option("--window", default=30, show_default=True)
@click.option("--out", required=True)
def replay_cmd(model_spec, data_path, theta, seed, window, out):
    """Offline replay: sample the model round by round against true histories."""
    try:
        model = resolve_model(model_spec)
        dataset = load(data_path)
        manifest = Manifest("analyze-replay", {"model": model_spec, "data": data_path, "theta": theta, "window": window}, seed, [data_path])
        if theta is None and model.param_count > 0:
            theta_vec = fit(model, dataset.games, FitConfig(restarts=4, max_steps=2000, seed=seed)).theta
        else:
            theta_vec = _theta_from(theta, model)
        stats = replay_eval(model, theta_vec, dataset.games, seed=seed, window=window)
        truth = win_rate_stats(dataset.games, window=window)
        payload = {
            "synthetic": stats.to_rows(),
            "ground_truth": truth.to_rows(),
            "synthetic_aggregate": stats.aggregate[0],
            "truth_aggregate": truth.aggregate[0],
        }
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps(payload, indent=2) + "\n")
        manifest.write(out)
        click.echo(json.dumps({"synthetic": stats.aggregate[0], "truth": truth.aggregate[0]}))
    except (ValueError, DatasetError, FitError) as exc:
        raise _fail(exc) from exc


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--bots-config", default=None)
@click.option("--persist-dir", default=None)
def serve_cmd(host, port, bots_config, persist_dir):
    """Run the live-play HTTP session service."""
    import uvicorn

    from .service import create_app

    app = create_app(specs=_specs(bots_config), persist_dir=persist_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("bench")
@click.option("--games", default=10, show_default=True)
@click.option("--rounds", default=300, show_default=True)
@click.option("--repeats", default=20, show_default=True)
@click.option("--json", "as_json", is_flag=True, hidden=True)
def bench_cmd(games, rounds, repeats, as_json):
    """Compare the numba kernels against the pure-python fallback path.

    The fallback is measured in a subprocess with RPSLAB_NO_NUMBA=1 so the
    whole call tree runs uncompiled.
    """
    import os
    import subprocess
    import sys

    from ._accel import NUMBA_ENABLED

    measurements = _bench_measurements(games, rounds, repeats if NUMBA_ENABLED else 1)
    mode = "numba" if NUMBA_ENABLED else "python fallback"
    if as_json:
        click.echo(json.dumps(measurements))
        return
    for name, seconds in measurements.items():
        click.echo(f"{name:18s} {mode:16s} {seconds * 1e3:10.2f} ms/call  ({games}x{rounds} rounds)")
    if NUMBA_ENABLED:
        env = dict(os.environ, RPSLAB_NO_NUMBA="1")
        probe = subprocess.run(
            [sys.executable, "-m", "rpslab.cli", "bench", "--games", str(games), "--rounds", str(rounds), "--repeats", "1", "--json"],
            capture_output=True, text=True, env=env, timeout=1800,
        )
        if probe.returncode != 0:
            raise CliError(f"fallback probe failed: {probe.stderr[-500:]}")
        fallback = json.loads(probe.stdout.strip().splitlines()[-1])
        for name, seconds in fallback.items():
            click.echo(f"{name:18s} {'python fallback':16s} {seconds * 1e3:10.2f} ms/call  ({games}x{rounds} rounds)")
        for name in measurements:
            click.echo(f"speedup {name}: {fallback[name] / measurements[name]:.1f}x")


def _bench_measurements(games: int, rounds: int, repeats: int) -> dict[str, float]:
    from .models.csewa_kernels import csewa_nll_grad
    from .game import REWARDS

    rng = np.random.default_rng(0)
    ego = rng.integers(0, 3, (games, rounds)).astype(np.int64)
    opp = rng.integers(0, 3, (games, rounds)).astype(np.int64)
    rew = rng.choice([3.0, 0.0, -1.0], (games, rounds))
    rewards = REWARDS.astype(np.float64)
    weights = np.ones((games, rounds))
    model = resolve_model("gemini_sbb")
    theta = rng.standard_normal(model.param_count)
    theta6 = rng.standard_normal(6)

    def time_fn(fn, fn_args, reps):
        fn(*fn_args)  # warm up / compile
        t0 = time.perf_counter()
        for _ in range(reps):
            fn(*fn_args)
        return (time.perf_counter() - t0) / reps

    from .dsl import kernels

    dsl_args = (model.tape.arrays, model.tape.policy_reg, model.tape.total_size, model.param_count, theta, rewards, ego, opp, rew, weights)
    return {
        "dsl nll+grad": time_fn(kernels.dataset_nll_grad, dsl_args, repeats),
        "cs-ewa nll+grad": time_fn(csewa_nll_grad, (theta6, rewards, ego, opp, weights), repeats),
    }


if __name__ == "__main__":
    main()
