import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional

from .enums import ORIENTATIONS, MetricName, Orientation


@dataclass(frozen=True)
class MetricScore:
    metric_name: MetricName
    value: float
    degenerate: bool = False

    @property
    def orientation(self) -> Orientation:
        return ORIENTATIONS[self.metric_name]

    def to_dict(self) -> Dict:
        return {
            "metric": self.metric_name.value,
            "value": self.value,
            "orientation": self.orientation.value,
            "degenerate": self.degenerate,
        }

    def __str__(self) -> str:
        flag = ", degenerate" if self.degenerate else ""
        return f"MetricScore({self.metric_name.value}={self.value:.6g}{flag})"


@dataclass(frozen=True)
class MetricReport:
    """Scores of one Q-function next to the true return of its argmax policy"""

    q_id: str
    true_return: float
    scores: Dict[MetricName, float]
    degenerate_flags: FrozenSet[MetricName] = field(default_factory=frozenset)

    def usable(self, metric: MetricName) -> bool:
        return metric in self.scores and metric not in self.degenerate_flags

    def to_dict(self) -> Dict:
        row = {"q_id": self.q_id, "true_return": self.true_return}
        for metric, value in self.scores.items():
            row[metric.value] = value
        row["degenerate"] = ";".join(sorted(m.value for m in self.degenerate_flags))
        return row


@dataclass(frozen=True)
class CorrelationSummary:
    metric_name: MetricName
    r_squared: float
    spearman: float
    n_models: int
    n_excluded: int = 0
    error: Optional[str] = None

    @property
    def defined(self) -> bool:
        return self.error is None

    def spearman_or_zero(self) -> float:
        """Spearman for comparisons; an undefined ranking carries no information"""
        return self.spearman if self.defined and not math.isnan(self.spearman) else 0.0

    def to_dict(self) -> Dict:
        return {
            "metric": self.metric_name.value,
            "r_squared": self.r_squared,
            "spearman": self.spearman,
            "n_models": self.n_models,
            "n_excluded": self.n_excluded,
            "error": self.error or "",
        }

    def __str__(self) -> str:
        if not self.defined:
            return f"CorrelationSummary({self.metric_name.value}: undefined, {self.error})"
        return (
            f"CorrelationSummary({self.metric_name.value}: R2={self.r_squared:.3f}, "
            f"spearman={self.spearman:.3f}, n={self.n_models})"
        )
