"""File boundary: JSON-lines episode logs, Q-table files, CSV results, run manifests.

Episode logs hold one EpisodeRecord per line (UTF-8, '\\n' separated). A
sidecar `<log>.meta.json` carries the dataset metadata so a collected log
reads back to an identical Dataset. CSV floats use 17 significant digits.
"""
import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from config.settings import EVAL_SETTINGS
from opeval import __version__
from opeval.models.enums import MetricName
from opeval.models.episode import Dataset, Episode
from opeval.models.errors import DomainError, ValidationError
from opeval.models.qtable import QTable
from opeval.models.report import CorrelationSummary, MetricReport, MetricScore

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    if value is None:
        return ""
    value = float(value)
    if np.isnan(value):
        return "nan"
    return format(value, f".{EVAL_SETTINGS['float_digits']}g")


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sidecar_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


# -- episode logs --------------------------------------------------------


def write_episode_log(
    path: PathLike,
    dataset: Dataset,
    state_count: Optional[int] = None,
    action_count: Optional[int] = None,
) -> Path:
    """JSONL log plus sidecar; env sizes, when known, become the default bounds on read"""
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("w", encoding="utf-8", newline="\n") as f:
            for episode in dataset.episodes:
                f.write(json.dumps(episode.to_dict(), ensure_ascii=False) + "\n")
        meta = {**dataset.metadata(), "n_episodes": dataset.n_episodes, "sha256": sha256_file(p)}
        if state_count is not None:
            meta["state_count"] = int(state_count)
        if action_count is not None:
            meta["action_count"] = int(action_count)
        sidecar_path(p).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Wrote {dataset.n_episodes} episodes to {p}")
        return p
    except OSError as e:
        logger.error(f"Failed to write episode log {p}: {str(e)}")
        raise


def read_episode_log(
    path: PathLike,
    binary: bool = False,
    state_count: Optional[int] = None,
    action_count: Optional[int] = None,
) -> Dataset:
    """Parse and validate a log; every problem is reported with its line number

    Bounds not given explicitly fall back to the env sizes in the sidecar.
    """
    p = Path(path)
    meta = read_sidecar(p)
    if state_count is None and "state_count" in meta:
        state_count = int(meta["state_count"])
    if action_count is None and "action_count" in meta:
        action_count = int(meta["action_count"])
    episodes: List[Episode] = []
    issues: List[str] = []
    seen: Dict[str, int] = {}
    annotated_lines: Dict[bool, List[int]] = {True: [], False: []}

    try:
        with p.open("r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    episode = Episode.from_dict(json.loads(line))
                except json.JSONDecodeError as e:
                    issues.append(f"line {line_no}: invalid JSON ({e.msg})")
                    continue
                except (ValueError, DomainError) as e:
                    issues.append(f"line {line_no}: {str(e)}")
                    continue

                problems = episode.problems(binary=binary)
                for tr in episode.transitions:
                    if state_count is not None and tr.state >= state_count:
                        problems.append(f"step {tr.t} has state {tr.state} outside [0, {state_count})")
                    if action_count is not None and tr.action >= action_count:
                        problems.append(f"step {tr.t} has action {tr.action} outside [0, {action_count})")
                if episode.id in seen:
                    problems.append(f"episode_id {episode.id!r} already used on line {seen[episode.id]}")
                seen.setdefault(episode.id, line_no)

                issues.extend(f"line {line_no} (episode {episode.id}): {msg}" for msg in problems)
                if not problems:
                    episodes.append(episode)
                    annotated_lines[episode.transitions[0].annotated].append(line_no)
    except OSError as e:
        logger.error(f"Failed to read episode log {p}: {str(e)}")
        raise

    if annotated_lines[True] and annotated_lines[False]:
        issues.append(
            f"log mixes annotated and unannotated episodes "
            f"(first unannotated on line {annotated_lines[False][0]})"
        )
    if not episodes and not issues:
        issues.append("log contains no episodes")
    if issues:
        logger.error(f"{p}: {len(issues)} validation problem(s)")
        raise ValidationError(issues)

    return Dataset.from_episodes(
        episodes,
        meta.get("env_id", "external"),
        meta.get("behavior_descriptor", "unknown"),
        int(meta.get("seed", 0)),
    )


def read_sidecar(path: PathLike) -> Dict:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        return {}
    try:
        return json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError([f"{meta_path}: invalid JSON ({e.msg})"])


# -- Q-tables ------------------------------------------------------------


def write_qtable(path: PathLike, q: QTable) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(q.to_dict()) + "\n", encoding="utf-8")
    return p


def read_qtable(path: PathLike) -> QTable:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError([f"{p}: invalid JSON ({e.msg})"])
    if not isinstance(data, dict):
        raise ValidationError([f"{p}: Q-table file must hold a JSON object"])
    try:
        return QTable.from_dict(data)
    except (ValueError, TypeError) as e:
        raise ValidationError([f"{p}: {str(e)}"])


# -- CSV -----------------------------------------------------------------


def write_scores_csv(stream: IO[str], scores: Sequence[MetricScore]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["metric", "value", "orientation", "degenerate"])
    for s in scores:
        writer.writerow([s.metric_name.value, format_float(s.value), s.orientation.value, str(s.degenerate).lower()])


def write_reports_csv(path: PathLike, reports: Sequence[MetricReport], metric_names: Sequence[MetricName]) -> Path:
    p = Path(path)
    with p.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["q_id", "true_return"] + [m.value for m in metric_names] + ["degenerate"])
        for r in reports:
            writer.writerow(
                [r.q_id, format_float(r.true_return)]
                + [format_float(r.scores.get(m)) for m in metric_names]
                + [";".join(sorted(m.value for m in r.degenerate_flags))]
            )
    logger.info(f"Wrote {len(reports)} report rows to {p}")
    return p


SUMMARY_HEADER = ["metric", "r_squared", "spearman", "n_models", "n_excluded", "error"]


def _summary_row(s: CorrelationSummary) -> List[str]:
    return [
        s.metric_name.value,
        format_float(s.r_squared),
        format_float(s.spearman),
        str(s.n_models),
        str(s.n_excluded),
        s.error or "",
    ]


def write_summary_csv(path: PathLike, summaries: Sequence[CorrelationSummary]) -> Path:
    p = Path(path)
    with p.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            writer.writerow(_summary_row(s))
    return p


def write_sweep_csv(path: PathLike, rows: Iterable[Dict]) -> Path:
    """One row per (grid point, metric): parameter, value, then the summary columns"""
    p = Path(path)
    with p.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["sweep", "parameter", "value"] + SUMMARY_HEADER)
        count = 0
        for row in rows:
            value = row["value"]
            value = format_float(value) if isinstance(value, float) else str(value)
            writer.writerow([row["sweep"], row["parameter"], value] + _summary_row(row["summary"]))
            count += 1
    logger.info(f"Wrote {count} sweep rows to {p}")
    return p


def read_summary_csv(path: PathLike) -> List[Dict]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


# -- manifests -----------------------------------------------------------


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: Dict
    master_seed: int
    version: str = __version__
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    details: Dict = field(default_factory=dict)
    started_at: str = field(default_factory=utc_now)
    finished_at: Optional[str] = None

    def add_input(self, path: PathLike) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: PathLike) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def to_dict(self) -> Dict:
        return {
            "command": self.command,
            "version": self.version,
            "master_seed": self.master_seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "details": self.details,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def write(self, path: PathLike) -> Path:
        self.finished_at = utc_now()
        p = Path(path)
        p.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Wrote run manifest to {p}")
        return p
