"""Command line driver.

`run` executes a strategy preset on a CSV file, `simulate` drives the
simulation bench from a JSON config, `serve` starts the HTTP session
service, and `replay` re-runs a recorded session log and checks it against
its own digests.  CHISEL_SEED in the environment overrides any configured
seed.  Output is JSON; floats print as their shortest round-trip decimal,
with non-finite values as "inf"/"-inf"/"nan".
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace

import click

from .core import load_dataset
from .scorers import ScorerSpec
from .service import create_app, dataset_from_payload, jsonable, replay_events
from .simbench import ExperimentConfig, run_experiment
from .strategies import PRESETS, StrategyConfig, report_from_session, run_preset
from .testing import ModeConfig


def _seed_override(seed: int) -> int:
    env = os.environ.get("CHISEL_SEED")
    return int(env) if env not in (None, "") else int(seed)


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(jsonable(obj), indent=2, allow_nan=False)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@click.group()
def main() -> None:
    """Interactive subgroup selection with a sequential error budget."""


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV with a header; outcome column per --y-col.")
@click.option("--preset", default="proportional", show_default=True,
              type=click.Choice(sorted(PRESETS)))
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--cutoff", default=0.0, show_default=True)
@click.option("--mode", default="gaussian", show_default=True,
              type=click.Choice(["gaussian", "binary"]))
@click.option("--p", default=0.2, show_default=True,
              help="fraction revealed up front (or held out, for splits)")
@click.option("--alpha0", default=0.0, show_default=True)
@click.option("--scorer", default="linear", show_default=True)
@click.option("--n-min", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--y-col", default="y", show_default=True)
@click.option("--w-col", default="w", show_default=True)
@click.option("--e-col", default="e", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="write the report here instead of stdout")
def run(data, preset, alpha, cutoff, mode, p, alpha0, scorer, n_min, seed,
        y_col, w_col, e_col, out):
    """Run one strategy preset on a CSV dataset and print its report."""
    seed = _seed_override(seed)
    dataset = load_dataset(data, schema={"y": y_col, "w": w_col, "e": e_col},
                           seed=seed)
    cfg = StrategyConfig(
        mode_config=ModeConfig(mode=mode, cutoff=cutoff, n_min=n_min),
        alpha=alpha, p=p, alpha0=alpha0, scorer=ScorerSpec(scorer),
    )
    report = run_preset(preset, dataset, cfg)
    _emit(report.to_dict(), out)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="directory for metrics.csv, metrics.json, plot_data.json")
def simulate(config_path, out):
    """Run a bench experiment from a JSON config and write its outputs."""
    with open(config_path, encoding="utf-8") as fh:
        config = ExperimentConfig.from_json(fh.read())
    env = os.environ.get("CHISEL_SEED")
    if env not in (None, ""):
        config = replace(config, seed=int(env))
    result = run_experiment(config)
    paths = result.write_outputs(out)
    click.echo(json.dumps(jsonable({
        "experiment": config.name,
        "replicates": config.replicates,
        "flags": result.flags,
        "outputs": paths,
    }), indent=2))


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--log-dir", default="chisel-sessions", show_default=True,
              help="where per-session JSONL logs land")
def serve(port, host, log_dir):
    """Start the HTTP session service."""
    import uvicorn

    uvicorn.run(create_app(log_dir=log_dir), host=host, port=port)


@main.command()
@click.option("--log", "log_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL session log written by the service")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="CSV to substitute for the logged dataset")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def replay(log_path, data_path, out):
    """Re-run a session log and verify digests; exits 1 on divergence."""
    with open(log_path, encoding="utf-8") as fh:
        events = [json.loads(line) for line in fh if line.strip()]
    if not events or events[0]["command"].get("kind") != "create":
        raise click.ClickException("log does not start with a create event")
    create = events[0]["command"]
    payload = dict(create["dataset"])
    if data_path is not None:
        with open(data_path, encoding="utf-8") as fh:
            payload = {**payload, "kind": "csv", "csv": fh.read()}
    if payload.get("kind") == "csv" and "csv" not in payload:
        raise click.ClickException(
            "log holds no dataset content; pass the CSV with --data")
    if payload.get("kind") == "dgp" and "family" not in payload:
        raise click.ClickException(
            "log was redacted; replay needs the operator's on-disk log")
    dataset = dataset_from_payload(payload)
    want = create["dataset"].get("dataset_id")
    if want and dataset.dataset_id != want:
        raise click.ClickException(
            f"dataset mismatch: log expects {want}, got {dataset.dataset_id}")
    cfg = ModeConfig.from_dict(create["cfg"])
    result = replay_events(payload, cfg, float(create["alpha"]),
                           create.get("session_seed"), events)
    session = result.pop("_session")
    # the operator owns the log; report the full records, not the redaction
    result["report"] = report_from_session(session).to_dict()
    _emit(result, out)
    if not result["match"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
