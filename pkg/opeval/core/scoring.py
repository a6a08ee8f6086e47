import logging
from typing import Dict, FrozenSet, List, Optional, Tuple

from config.settings import EVAL_SETTINGS
from opeval.models.enums import BINARY_METRICS, AdvantageStart, MetricName, Weighting
from opeval.models.episode import Dataset
from opeval.models.errors import DegenerateScoreError, DomainError
from opeval.models.report import MetricScore

from .dense_metrics import extended_opc
from .metrics import check_gamma, check_prior, mcc_error, opc, soft_opc, sum_advantages, td_error

logger = logging.getLogger(__name__)

Scores = Dict[MetricName, float]


class MetricSuite:
    """Scores one annotated dataset under every metric with shared parameters"""

    def __init__(
        self,
        prior: float = EVAL_SETTINGS["prior"],
        gamma: float = EVAL_SETTINGS["gamma"],
        extended: bool = False,
    ):
        self.prior = check_prior(prior)
        self.gamma = check_gamma(gamma)
        self.extended = extended

        # Load settings
        self.opc_weighting = Weighting(EVAL_SETTINGS["opc_weighting"])
        self.softopc_weighting = Weighting(EVAL_SETTINGS["softopc_weighting"])
        self.td_error_weighting = Weighting(EVAL_SETTINGS["td_error_weighting"])
        self.sum_advantages_weighting = Weighting(EVAL_SETTINGS["sum_advantages_weighting"])
        self.mcc_error_weighting = Weighting(EVAL_SETTINGS["mcc_error_weighting"])
        self.sum_advantages_start = AdvantageStart(EVAL_SETTINGS["sum_advantages_start"])

    def configure(self, **options) -> "MetricSuite":
        """Override weightings or the advantage start by setting name"""
        for name, value in options.items():
            if name == "sum_advantages_start":
                self.sum_advantages_start = AdvantageStart(value)
            elif name.endswith("_weighting") and hasattr(self, name):
                setattr(self, name, Weighting(value))
            else:
                raise DomainError(f"Unknown metric option {name}")
        return self

    @property
    def metric_names(self) -> Tuple[MetricName, ...]:
        return BINARY_METRICS + (MetricName.EXT_OPC,) if self.extended else BINARY_METRICS

    def baseline_scores(self, dataset: Dataset) -> Scores:
        """TD error, sum of advantages and MCC error; none of them uses the prior"""
        return {
            MetricName.TD_ERR: td_error(dataset, self.gamma, self.td_error_weighting),
            MetricName.SUM_ADV: sum_advantages(
                dataset, self.gamma, self.sum_advantages_weighting, self.sum_advantages_start
            ),
            MetricName.MCC_ERR: mcc_error(dataset, self.gamma, self.mcc_error_weighting),
        }

    def classification_scores(
        self, dataset: Dataset, prior: Optional[float] = None
    ) -> Tuple[Scores, FrozenSet[MetricName]]:
        """OPC-family scores; degenerate ones carry their fallback value (or NaN) and a flag"""
        prior = self.prior if prior is None else check_prior(prior)
        calls = [
            (MetricName.OPC, lambda: opc(dataset, prior, self.opc_weighting)),
            (MetricName.SOFT_OPC, lambda: soft_opc(dataset, prior, self.softopc_weighting)),
        ]
        if self.extended:
            calls.append((MetricName.EXT_OPC, lambda: extended_opc(dataset, prior, self.opc_weighting)))

        scores: Scores = {}
        degenerate = set()
        for name, call in calls:
            try:
                scores[name] = call()
            except DegenerateScoreError as e:
                logger.warning(f"Degenerate {name.value} on {dataset.env_id}: {str(e)}")
                scores[name] = float("nan") if e.value is None else e.value
                degenerate.add(name)
        return scores, frozenset(degenerate)

    def score(self, dataset: Dataset) -> Tuple[Scores, FrozenSet[MetricName]]:
        try:
            scores = self.baseline_scores(dataset)
            classified, degenerate = self.classification_scores(dataset)
            scores.update(classified)
            return {name: scores[name] for name in self.metric_names}, degenerate
        except DomainError as e:
            logger.error(f"Scoring failed on {dataset!r}: {str(e)}")
            raise

    def metric_scores(self, dataset: Dataset) -> List[MetricScore]:
        scores, degenerate = self.score(dataset)
        return [MetricScore(name, value, name in degenerate) for name, value in scores.items()]

    def describe(self) -> Dict:
        return {
            "prior": self.prior,
            "gamma": self.gamma,
            "extended": self.extended,
            "opc_weighting": self.opc_weighting.value,
            "softopc_weighting": self.softopc_weighting.value,
            "td_error_weighting": self.td_error_weighting.value,
            "sum_advantages_weighting": self.sum_advantages_weighting.value,
            "mcc_error_weighting": self.mcc_error_weighting.value,
            "sum_advantages_start": self.sum_advantages_start.value,
        }
