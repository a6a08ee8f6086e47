import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config.settings import EVAL_SETTINGS, get_thread_count
from opeval.models.enums import MetricName, PolicyKind, QDistribution
from opeval.models.episode import Dataset
from opeval.models.errors import DomainError
from opeval.models.policy import Policy
from opeval.models.qtable import QTable
from opeval.models.report import CorrelationSummary, MetricReport

from .correlation import summarize
from .dense_env import DenseChainEnv
from .evaluation import EpisodicEnv, exact_return, rollout
from .scoring import MetricSuite
from .tree_env import TreeEnv

logger = logging.getLogger(__name__)

# Child rng streams: default_rng([master_seed, stream, k])
DATASET_STREAM = 0
QFUNCTION_STREAM = 1


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "tree"  # tree | chain
    depth: int = EVAL_SETTINGS["tree_depth"]
    layout: str = "one_success"  # one_success | one_failure | custom
    success_leaves: Tuple[int, ...] = ()
    slip: float = 0.0
    chain_rewards: Tuple[float, ...] = (1.0, 1.0)
    horizon: Optional[int] = None

    def build(self) -> Union[TreeEnv, DenseChainEnv]:
        if self.kind == "chain":
            return DenseChainEnv(self.chain_rewards, self.horizon)
        if self.kind != "tree":
            raise DomainError(f"Unknown environment kind {self.kind}")
        if self.layout == "one_success":
            return TreeEnv.one_success(self.depth, slip=self.slip)
        if self.layout == "one_failure":
            return TreeEnv.one_failure(self.depth, slip=self.slip)
        if self.layout == "custom":
            return TreeEnv(self.depth, self.success_leaves, self.slip)
        raise DomainError(f"Unknown tree layout {self.layout}")

    @property
    def binary(self) -> bool:
        return self.kind == "tree"


@dataclass(frozen=True)
class BehaviorConfig:
    """Behavior policy: uniform, or epsilon-greedy around the optimal Q of the env"""

    kind: PolicyKind = PolicyKind.UNIFORM
    epsilon: float = 1.0

    def build(self, env: EpisodicEnv) -> Policy:
        if self.kind == PolicyKind.UNIFORM:
            return Policy.uniform(env.state_count, env.action_count)
        optimal = QTable(env.optimal_action_values(), f"{env.env_id}-optimal")
        if self.kind == PolicyKind.ARGMAX:
            return Policy.argmax(optimal)
        return Policy.epsilon_greedy(optimal, self.epsilon)


@dataclass(frozen=True)
class MetricConfig:
    prior: float = EVAL_SETTINGS["prior"]
    gamma: float = EVAL_SETTINGS["gamma"]
    extended: bool = False
    opc_weighting: str = EVAL_SETTINGS["opc_weighting"]
    softopc_weighting: str = EVAL_SETTINGS["softopc_weighting"]
    td_error_weighting: str = EVAL_SETTINGS["td_error_weighting"]
    sum_advantages_weighting: str = EVAL_SETTINGS["sum_advantages_weighting"]
    mcc_error_weighting: str = EVAL_SETTINGS["mcc_error_weighting"]
    sum_advantages_start: str = EVAL_SETTINGS["sum_advantages_start"]

    def build(self) -> MetricSuite:
        options = asdict(self)
        suite = MetricSuite(options.pop("prior"), options.pop("gamma"), options.pop("extended"))
        return suite.configure(**options)


@dataclass(frozen=True)
class Regime:
    name: str
    distribution: QDistribution
    scale: float = 1.0


DEFAULT_REGIMES = (
    Regime("uniform_0_1", QDistribution.UNIFORM, 1.0),
    Regime("per_index_0_k", QDistribution.PER_INDEX),
    Regime("uniform_0_1000", QDistribution.UNIFORM, 1000.0),
)


@dataclass(frozen=True)
class SweepConfig:
    priors: Tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(21))
    slips: Tuple[float, ...] = (0.4, 0.6, 0.8)
    regimes: Tuple[Regime, ...] = DEFAULT_REGIMES
    behavior_epsilons: Tuple[float, float] = (0.9, 0.3)  # poor, good


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    n_qfunctions: int = EVAL_SETTINGS["n_qfunctions"]
    q_distribution: QDistribution = QDistribution.UNIFORM
    q_scale: float = 1.0
    n_validation_episodes: int = EVAL_SETTINGS["n_validation_episodes"]
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    master_seed: int = 0
    metrics: MetricConfig = field(default_factory=MetricConfig)
    sweeps: SweepConfig = field(default_factory=SweepConfig)
    threads: Optional[int] = None

    def problems(self) -> List[str]:
        issues = []
        if self.n_qfunctions < 2:
            issues.append(f"experiment.n_qfunctions must be at least 2, got {self.n_qfunctions}")
        if self.n_validation_episodes < 1:
            issues.append(
                f"experiment.n_validation_episodes must be at least 1, got {self.n_validation_episodes}"
            )
        if self.q_scale <= 0:
            issues.append(f"experiment.q_scale must be positive, got {self.q_scale}")
        if self.master_seed < 0:
            issues.append(f"experiment.master_seed must be non-negative, got {self.master_seed}")
        if not 0.0 <= self.env.slip <= 1.0:
            issues.append(f"env.slip must lie in [0, 1], got {self.env.slip}")
        if not 0.0 <= self.behavior.epsilon <= 1.0:
            issues.append(f"experiment.behavior.epsilon must lie in [0, 1], got {self.behavior.epsilon}")
        for name, grid in (("priors", self.sweeps.priors), ("slips", self.sweeps.slips), ("regimes", self.sweeps.regimes)):
            if not grid:
                issues.append(f"sweeps.{name} must not be empty")
        issues.extend(
            f"sweeps.priors value {p} lies outside [0, 1]" for p in self.sweeps.priors if not 0.0 <= p <= 1.0
        )
        issues.extend(
            f"sweeps.slips value {s} lies outside [0, 1]" for s in self.sweeps.slips if not 0.0 <= s <= 1.0
        )
        return issues

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["q_distribution"] = self.q_distribution.value
        data["behavior"]["kind"] = self.behavior.kind.value
        data["sweeps"]["regimes"] = [
            {"name": r.name, "distribution": r.distribution.value, "scale": r.scale}
            for r in self.sweeps.regimes
        ]
        return data


@dataclass(frozen=True)
class ExperimentResult:
    reports: List[MetricReport]
    summaries: List[CorrelationSummary]
    metric_names: Tuple[MetricName, ...]
    dataset: Dataset

    def summary(self, metric: MetricName) -> CorrelationSummary:
        for s in self.summaries:
            if s.metric_name == metric:
                return s
        raise KeyError(metric)


@dataclass(frozen=True)
class SweepPoint:
    """One grid point of a sweep: its parameter and the experiment run there"""

    sweep: str
    parameter: str
    value: Union[float, str]
    result: ExperimentResult
    details: Dict = field(default_factory=dict)


def child_rng(master_seed: int, stream: int, k: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), int(stream), int(k)])


def generate_random_q(
    env: EpisodicEnv,
    distribution: QDistribution,
    k: int,
    rng: np.random.Generator,
    scale: float = 1.0,
) -> QTable:
    """kth random table: U[0, scale] entries, or U[0, k] for the per-index law (k is 1-based)"""
    distribution = QDistribution(distribution)
    if distribution == QDistribution.PER_INDEX:
        if k < 1:
            raise DomainError(f"per-index Q distribution needs k >= 1, got {k}")
        upper = float(k)
    else:
        upper = float(scale)
    # one U[0,1] draw per table, scaled, so regimes share draws
    values = rng.random((env.state_count, env.action_count)) * upper
    return QTable(values, f"q{k:04d}")


def collect_dataset(
    env: EpisodicEnv,
    behavior: Policy,
    n_episodes: int,
    rng: np.random.Generator,
    seed: int = 0,
    prefix: str = "ep",
) -> Dataset:
    if n_episodes < 1:
        raise DomainError(f"n_episodes must be at least 1, got {n_episodes}")
    episodes = [rollout(env, behavior, rng, f"{prefix}{i:05d}") for i in range(n_episodes)]
    dataset = Dataset.from_episodes(episodes, env.env_id, behavior.describe(), seed)
    successes = int(np.sum(dataset.final_rewards == 1.0))
    logger.info(
        f"Collected {n_episodes} episodes on {env.env_id} with {behavior.describe()}: "
        f"{dataset.n_transitions} transitions, {successes} successful"
    )
    return dataset


def annotate(dataset: Dataset, q: QTable) -> Dataset:
    """Fresh dataset whose transitions carry Q(s,a), max Q(s,.) and max Q(s',.) from q"""
    c = dataset.columns
    if np.any(c.state >= q.state_count) or np.any(c.action >= q.action_count):
        raise DomainError(f"{dataset!r} indexes outside QTable {q.id} of shape {q.values.shape}")
    greedy = q.greedy_values()
    next_state = np.roll(c.state, -1)
    return dataset.with_annotations(
        q_sa=q.values[c.state, c.action],
        q_greedy_s=greedy[c.state],
        q_greedy_next=greedy[next_state],
    )


class CorrelationExperiment:
    """Random Q-function suite scored on one shared validation dataset"""

    def __init__(self, cfg: ExperimentConfig):
        issues = cfg.problems()
        if issues:
            raise DomainError("; ".join(issues))
        self.cfg = cfg
        self.env = cfg.env.build()
        self.suite = cfg.metrics.build()
        if not cfg.env.binary and not self.suite.extended:
            logger.info(f"{self.env.env_id} has dense rewards; enabling extended OPC")
            self.suite.extended = True
        self.threads = get_thread_count(cfg.threads)

    def collect(self, behavior: Optional[BehaviorConfig] = None, k: int = 0, prefix: str = "ep") -> Dataset:
        behavior = behavior or self.cfg.behavior
        rng = child_rng(self.cfg.master_seed, DATASET_STREAM, k)
        return collect_dataset(
            self.env,
            behavior.build(self.env),
            self.cfg.n_validation_episodes,
            rng,
            self.cfg.master_seed,
            prefix,
        )

    def qfunctions(self, regime: Optional[Regime] = None) -> List[QTable]:
        distribution = regime.distribution if regime else self.cfg.q_distribution
        scale = regime.scale if regime else self.cfg.q_scale
        return [
            generate_random_q(
                self.env, distribution, k, child_rng(self.cfg.master_seed, QFUNCTION_STREAM, k), scale
            )
            for k in range(1, self.cfg.n_qfunctions + 1)
        ]

    def true_return(self, q: QTable) -> float:
        return exact_return(self.env, Policy.argmax(q))

    def evaluate(self, dataset: Dataset, q: QTable) -> MetricReport:
        annotated = annotate(dataset, q)
        scores, degenerate = self.suite.score(annotated)
        return MetricReport(q.id, self.true_return(q), scores, degenerate)

    def _map(self, fn, items: List) -> List:
        # executor.map yields in submission order
        if self.threads == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def run(self, dataset: Optional[Dataset] = None, regime: Optional[Regime] = None) -> ExperimentResult:
        try:
            started = time.perf_counter()
            dataset = dataset if dataset is not None else self.collect()
            tables = self.qfunctions(regime)
            reports = self._map(lambda q: self.evaluate(dataset, q), tables)
            summaries = summarize_reports(reports, self.suite.metric_names)
            logger.info(
                f"Scored {len(reports)} Q-functions on {self.env.env_id} in "
                f"{time.perf_counter() - started:.1f}s with {self.threads} thread(s)"
            )
            return ExperimentResult(reports, summaries, self.suite.metric_names, dataset)
        except Exception as e:
            logger.error(f"Correlation experiment failed: {str(e)}")
            raise


def summarize_reports(
    reports: List[MetricReport], metric_names: Tuple[MetricName, ...]
) -> List[CorrelationSummary]:
    """Per-metric correlation with true return over the non-degenerate rows"""
    summaries = []
    for metric in metric_names:
        usable = [r for r in reports if r.usable(metric) and np.isfinite(r.scores[metric])]
        excluded = len(reports) - len(usable)
        if excluded:
            logger.warning(f"{metric.value}: excluded {excluded} degenerate row(s)")
        summaries.append(
            summarize(
                metric,
                [r.scores[metric] for r in usable],
                [r.true_return for r in usable],
                excluded,
            )
        )
    return summaries


def run_correlation_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return CorrelationExperiment(cfg).run()


def prior_sweep(cfg: ExperimentConfig) -> List[SweepPoint]:
    """Correlations at every prior; baselines are scored once and shared by all grid points"""
    experiment = CorrelationExperiment(cfg)
    dataset = experiment.collect()
    tables = experiment.qfunctions()
    priors = cfg.sweeps.priors
    suite = experiment.suite

    def evaluate(q: QTable) -> List[MetricReport]:
        annotated = annotate(dataset, q)
        baselines = suite.baseline_scores(annotated)
        true_return = experiment.true_return(q)
        rows = []
        for prior in priors:
            classified, degenerate = suite.classification_scores(annotated, prior)
            scores = {**baselines, **classified}
            rows.append(
                MetricReport(q.id, true_return, {m: scores[m] for m in suite.metric_names}, degenerate)
            )
        return rows

    per_table = experiment._map(evaluate, tables)
    points = []
    for i, prior in enumerate(priors):
        reports = [rows[i] for rows in per_table]
        result = ExperimentResult(reports, summarize_reports(reports, suite.metric_names), suite.metric_names, dataset)
        points.append(SweepPoint("prior", "prior", float(prior), result))
        logger.info(
            f"prior={prior:g}: OPC spearman={result.summary(MetricName.OPC).spearman:.3f}, "
            f"SoftOPC spearman={result.summary(MetricName.SOFT_OPC).spearman:.3f}"
        )
    return points


def stochastic_sweep(cfg: ExperimentConfig) -> List[SweepPoint]:
    """One full experiment per slip level, each with its own dataset"""
    points = []
    for slip in cfg.sweeps.slips:
        point_cfg = replace(cfg, env=replace(cfg.env, slip=float(slip)))
        result = run_correlation_experiment(point_cfg)
        points.append(SweepPoint("stochastic", "slip", float(slip), result))
    return points


def magnitude_sweep(cfg: ExperimentConfig) -> List[SweepPoint]:
    """Q-value magnitude regimes over one shared dataset and shared underlying draws"""
    experiment = CorrelationExperiment(cfg)
    dataset = experiment.collect()
    points = []
    for regime in cfg.sweeps.regimes:
        result = experiment.run(dataset, regime)
        details = {"distribution": regime.distribution.value, "scale": regime.scale}
        points.append(SweepPoint("magnitude", "regime", regime.name, result, details))
    return points


def behavior_split(cfg: ExperimentConfig) -> List[SweepPoint]:
    """Correlations on data from a poor and a good behavior policy, separately and pooled"""
    experiment = CorrelationExperiment(cfg)
    poor_eps, good_eps = cfg.sweeps.behavior_epsilons
    subsets = {}
    for k, (name, eps) in enumerate((("poor", poor_eps), ("good", good_eps))):
        behavior = BehaviorConfig(PolicyKind.EPSILON_GREEDY, eps)
        subsets[name] = experiment.collect(behavior, k, prefix=f"{name}-")
    subsets["union"] = Dataset.from_episodes(
        subsets["poor"].episodes + subsets["good"].episodes,
        experiment.env.env_id,
        "union(" + ", ".join(subsets[n].behavior_descriptor for n in ("poor", "good")) + ")",
        cfg.master_seed,
    )

    points = []
    for name, dataset in subsets.items():
        success_rate = float(np.mean(dataset.final_rewards == 1.0))
        result = experiment.run(dataset)
        details = {"behavior": dataset.behavior_descriptor, "success_rate": success_rate}
        points.append(SweepPoint("behavior", "subset", name, result, details))
        logger.info(f"behavior subset {name}: success rate {success_rate:.3f}")
    return points


SWEEPS = {
    "prior": prior_sweep,
    "stochastic": stochastic_sweep,
    "magnitude": magnitude_sweep,
    "behavior": behavior_split,
}
