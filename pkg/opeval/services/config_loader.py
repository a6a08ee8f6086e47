import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import yaml

from opeval.core.harness import (
    BehaviorConfig,
    EnvConfig,
    ExperimentConfig,
    MetricConfig,
    Regime,
    SweepConfig,
)
from opeval.models.enums import AdvantageStart, PolicyKind, QDistribution, Weighting
from opeval.models.errors import ConfigError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _number(value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"expected a number, got {value!r}")
    return float(value)


def _integer(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"expected an integer, got {value!r}")
    return value


def _optional_integer(value: Any) -> Optional[int]:
    return None if value is None else _integer(value)


def _boolean(value: Any) -> bool:
    if not isinstance(value, bool):
        raise ValueError(f"expected true or false, got {value!r}")
    return value


def _choice(*allowed: str) -> Callable[[Any], str]:
    def convert(value: Any) -> str:
        if value not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {value!r}")
        return value

    return convert


def _list_of(item: Callable[[Any], Any]) -> Callable[[Any], Tuple]:
    def convert(value: Any) -> Tuple:
        if not isinstance(value, list):
            raise ValueError(f"expected a list, got {value!r}")
        return tuple(item(v) for v in value)

    return convert


def _enum_values(enum) -> Tuple[str, ...]:
    return tuple(member.value for member in enum)


WEIGHTING = _choice(*_enum_values(Weighting))

ENV_SCHEMA = {
    "kind": _choice("tree", "chain"),
    "depth": _integer,
    "layout": _choice("one_success", "one_failure", "custom"),
    "success_leaves": _list_of(_integer),
    "slip": _number,
    "chain_rewards": _list_of(_number),
    "horizon": _optional_integer,
}

BEHAVIOR_SCHEMA = {
    "kind": _choice(*_enum_values(PolicyKind)),
    "epsilon": _number,
}

EXPERIMENT_SCHEMA = {
    "n_qfunctions": _integer,
    "q_distribution": _choice(*_enum_values(QDistribution)),
    "q_scale": _number,
    "n_validation_episodes": _integer,
    "master_seed": _integer,
    "threads": _optional_integer,
    "behavior": BEHAVIOR_SCHEMA,
}

METRICS_SCHEMA = {
    "prior": _number,
    "gamma": _number,
    "extended": _boolean,
    "opc_weighting": WEIGHTING,
    "softopc_weighting": WEIGHTING,
    "td_error_weighting": WEIGHTING,
    "sum_advantages_weighting": WEIGHTING,
    "mcc_error_weighting": WEIGHTING,
    "sum_advantages_start": _choice(*_enum_values(AdvantageStart)),
}

REGIME_SCHEMA = {
    "name": str,
    "distribution": _choice(*_enum_values(QDistribution)),
    "scale": _number,
}

SWEEPS_SCHEMA = {
    "priors": _list_of(_number),
    "slips": _list_of(_number),
    "regimes": [REGIME_SCHEMA],
    "behavior_epsilons": _list_of(_number),
}

SCHEMA = {
    "env": ENV_SCHEMA,
    "experiment": EXPERIMENT_SCHEMA,
    "metrics": METRICS_SCHEMA,
    "sweeps": SWEEPS_SCHEMA,
}


def _check(data: Any, schema: Any, key: str, issues: List[str]) -> Any:
    """Convert data against schema, appending one message per violation"""
    if isinstance(schema, dict):
        if not isinstance(data, dict):
            issues.append(f"{key or 'document'}: expected a mapping, got {type(data).__name__}")
            return {}
        converted = {}
        for name, value in data.items():
            path = f"{key}.{name}" if key else str(name)
            if name not in schema:
                issues.append(f"{path}: unknown key")
                continue
            converted[name] = _check(value, schema[name], path, issues)
        return converted
    if isinstance(schema, list):
        if not isinstance(data, list):
            issues.append(f"{key}: expected a list, got {data!r}")
            return []
        return [_check(item, schema[0], f"{key}[{i}]", issues) for i, item in enumerate(data)]
    try:
        return schema(data)
    except (ValueError, TypeError) as e:
        issues.append(f"{key}: {str(e)}")
        return None


def build_config(data: Optional[Dict]) -> ExperimentConfig:
    """ExperimentConfig from a parsed document; raises ConfigError listing every violation"""
    issues: List[str] = []
    doc = _check(data or {}, SCHEMA, "", issues)
    if issues:
        raise ConfigError(issues)

    env = EnvConfig(**doc.get("env", {}))

    experiment = dict(doc.get("experiment", {}))
    behavior = dict(experiment.pop("behavior", {}))
    if "kind" in behavior:
        behavior["kind"] = PolicyKind(behavior["kind"])
    if "q_distribution" in experiment:
        experiment["q_distribution"] = QDistribution(experiment["q_distribution"])

    sweeps = dict(doc.get("sweeps", {}))
    if "regimes" in sweeps:
        regimes = []
        for i, regime in enumerate(sweeps["regimes"]):
            missing = {"name", "distribution"} - set(regime)
            if missing:
                issues.append(f"sweeps.regimes[{i}]: missing {', '.join(sorted(missing))}")
                continue
            regimes.append(Regime(regime["name"], QDistribution(regime["distribution"]), regime.get("scale", 1.0)))
        sweeps["regimes"] = tuple(regimes)
    if "behavior_epsilons" in sweeps and len(sweeps["behavior_epsilons"]) != 2:
        issues.append("sweeps.behavior_epsilons: expected exactly two values (poor, good)")

    cfg = ExperimentConfig(
        env=env,
        behavior=BehaviorConfig(**behavior),
        metrics=MetricConfig(**doc.get("metrics", {})),
        sweeps=SweepConfig(**sweeps),
        **experiment,
    )
    issues.extend(cfg.problems())
    if cfg.env.kind == "tree" and cfg.env.depth < 2:
        issues.append(f"env.depth must be at least 2, got {cfg.env.depth}")
    if not 0.0 <= cfg.metrics.prior <= 1.0:
        issues.append(f"metrics.prior must lie in [0, 1], got {cfg.metrics.prior}")
    if not 0.0 <= cfg.metrics.gamma <= 1.0:
        issues.append(f"metrics.gamma must lie in [0, 1], got {cfg.metrics.gamma}")
    if issues:
        raise ConfigError(issues)
    return cfg


def load_config(path: Optional[PathLike]) -> ExperimentConfig:
    """Read a YAML experiment config; no path means every default"""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        with p.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError([f"{p}: not valid YAML ({str(e)})"])
    except OSError as e:
        logger.error(f"Failed to read config {p}: {str(e)}")
        raise
    try:
        cfg = build_config(data)
    except ConfigError as e:
        logger.error(f"{p}: {len(e.messages)} config problem(s)")
        raise
    logger.info(f"Loaded experiment config from {p}")
    return cfg
