import functools
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import click

from config.settings import EVAL_SETTINGS
from opeval import __version__
from opeval.core.harness import SWEEPS, CorrelationExperiment, ExperimentConfig, SweepPoint, annotate
from opeval.models.enums import Orientation
from opeval.models.episode import Dataset, validate_annotations
from opeval.models.errors import DegenerateScoreError, DomainError, ValidationError
from opeval.services.config_loader import load_config
from opeval.services.log_store import (
    RunManifest,
    read_episode_log,
    read_qtable,
    write_episode_log,
    write_reports_csv,
    write_scores_csv,
    write_summary_csv,
    write_sweep_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DEGENERATE = 2
EXIT_IO = 3


class DegenerateResults(Exception):
    """Every requested score or correlation came out degenerate"""


def handle_errors(command):
    """Map domain failures onto the documented exit codes"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            for message in e.messages:
                click.echo(f"error: {message}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (DomainError, DegenerateScoreError) as e:
            click.echo(f"error: {str(e)}", err=True)
            sys.exit(EXIT_VALIDATION)
        except DegenerateResults as e:
            click.echo(f"degenerate: {str(e)}", err=True)
            sys.exit(EXIT_DEGENERATE)
        except OSError as e:
            logger.error(f"I/O failure: {str(e)}")
            click.echo(f"I/O error: {str(e)}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _experiment_config(config_path: Optional[str], seed: Optional[int], threads: Optional[int]) -> ExperimentConfig:
    cfg = load_config(config_path)
    if seed is not None:
        cfg = replace(cfg, master_seed=seed)
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    return cfg


def _manifest(command: str, cfg: ExperimentConfig, config_path: Optional[str]) -> RunManifest:
    manifest = RunManifest(command=command, config=cfg.to_dict(), master_seed=cfg.master_seed)
    if config_path:
        manifest.add_input(config_path)
    return manifest


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML experiment config")
seed_option = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override experiment.master_seed")
threads_option = click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads (else OPEVAL_THREADS)")
qtable_option = click.option("--q-table", "q_table", type=click.Path(dir_okay=False), help="Q-table JSON used to annotate the log")
binary_option = click.option("--binary-strict", is_flag=True, help="Enforce binary terminal rewards")


@click.group()
@click.version_option(__version__, prog_name="opeval")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def cli(verbose: bool) -> None:
    """Rank Q-functions from off-policy episodes by classification scores."""
    level = logging.DEBUG if verbose else getattr(logging, EVAL_SETTINGS["log_level"])
    logging.getLogger().setLevel(level)


@cli.command()
@config_option
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Episode log to write (JSON lines)")
@seed_option
@handle_errors
def collect(config_path: Optional[str], out: str, seed: Optional[int]) -> None:
    """Roll out the behavior policy and write an unannotated episode log."""
    cfg = _experiment_config(config_path, seed, None)
    experiment = CorrelationExperiment(cfg)
    dataset = experiment.collect()
    write_episode_log(out, dataset, experiment.env.state_count, experiment.env.action_count)
    click.echo(f"{dataset.n_episodes} episodes -> {out}", err=True)


def _load_scored_dataset(log: str, q_table: Optional[str], binary: bool) -> Dataset:
    table = read_qtable(q_table) if q_table else None
    bounds = {"state_count": table.state_count, "action_count": table.action_count} if table else {}
    dataset = read_episode_log(log, binary=binary, **bounds)
    if table is not None:
        return annotate(dataset, table)
    if not dataset.is_annotated:
        raise ValidationError([f"{log}: log carries no Q annotations and no --q-table was given"])
    return dataset


@cli.command()
@click.argument("log", type=click.Path(dir_okay=False))
@qtable_option
@config_option
@click.option("--prior", type=float, default=None, help="Class prior p(y=1) for OPC/SoftOPC")
@click.option("--gamma", type=float, default=None, help="Discount for the baseline metrics")
@click.option("--extended", is_flag=True, help="Also score extended OPC")
@binary_option
@handle_errors
def score(
    log: str,
    q_table: Optional[str],
    config_path: Optional[str],
    prior: Optional[float],
    gamma: Optional[float],
    extended: bool,
    binary_strict: bool,
) -> None:
    """Score one Q-function on an episode log; CSV on standard output."""
    metrics = load_config(config_path).metrics
    overrides = {
        name: value
        for name, value in (("prior", prior), ("gamma", gamma), ("extended", extended or None))
        if value is not None
    }
    suite = replace(metrics, **overrides).build()

    dataset = _load_scored_dataset(log, q_table, binary_strict)
    scores = suite.metric_scores(dataset)
    write_scores_csv(sys.stdout, scores)

    classification = [s for s in scores if s.orientation == Orientation.HIGHER_BETTER]
    if classification and all(s.degenerate for s in classification):
        raise DegenerateResults(f"every classification score is degenerate on {log}")


def _degenerate_only(summaries) -> bool:
    return all(not s.defined for s in summaries)


@cli.command()
@config_option
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@seed_option
@threads_option
@handle_errors
def correlate(config_path: Optional[str], out: str, seed: Optional[int], threads: Optional[int]) -> None:
    """Correlate every metric with the true return over a random Q-function suite."""
    cfg = _experiment_config(config_path, seed, threads)
    manifest = _manifest("correlate", cfg, config_path)
    experiment = CorrelationExperiment(cfg)
    result = experiment.run()

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.add_output(write_reports_csv(out_dir / "reports.csv", result.reports, result.metric_names))
    manifest.add_output(write_summary_csv(out_dir / "summary.csv", result.summaries))
    manifest.write(out_dir / "manifest.json")

    for summary in result.summaries:
        click.echo(str(summary), err=True)
    if _degenerate_only(result.summaries):
        raise DegenerateResults("no metric has a defined correlation")


def _point_label(point: SweepPoint) -> str:
    value = f"{point.value:g}" if isinstance(point.value, float) else str(point.value)
    return f"{point.parameter}_{value}"


def _sweep_rows(points: List[SweepPoint]) -> List[Dict]:
    return [
        {"sweep": p.sweep, "parameter": p.parameter, "value": p.value, "summary": s}
        for p in points
        for s in p.result.summaries
    ]


@cli.command()
@click.option("--kind", required=True, type=click.Choice(sorted(SWEEPS)), help="Which sweep to run")
@config_option
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@seed_option
@threads_option
@handle_errors
def sweep(kind: str, config_path: Optional[str], out: str, seed: Optional[int], threads: Optional[int]) -> None:
    """Run a prior, stochastic, magnitude or behavior sweep."""
    cfg = _experiment_config(config_path, seed, threads)
    manifest = _manifest(f"sweep --kind {kind}", cfg, config_path)
    points = SWEEPS[kind](cfg)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.add_output(write_sweep_csv(out_dir / "sweep.csv", _sweep_rows(points)))
    for point in points:
        manifest.add_output(write_summary_csv(out_dir / f"summary_{_point_label(point)}.csv", point.result.summaries))
        if point.details:
            logger.info(f"{_point_label(point)}: {point.details}")
    manifest.details = {_point_label(p): p.details for p in points if p.details}
    manifest.write(out_dir / "manifest.json")

    if all(_degenerate_only(p.result.summaries) for p in points):
        raise DegenerateResults(f"{kind} sweep produced no defined correlation")


@cli.command()
@click.argument("log", type=click.Path(dir_okay=False))
@qtable_option
@binary_option
@handle_errors
def validate(log: str, q_table: Optional[str], binary_strict: bool) -> None:
    """Check a log's structure and, given a Q-table, its annotations."""
    table = read_qtable(q_table) if q_table else None
    bounds = {"state_count": table.state_count, "action_count": table.action_count} if table else {}
    dataset = read_episode_log(log, binary=binary_strict, **bounds)
    if table is not None and dataset.is_annotated:
        validate_annotations(dataset, table)
    click.echo(f"ok: {dataset.n_episodes} episodes, {dataset.n_transitions} transitions", err=True)
