import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import linregress, rankdata

from opeval.models.enums import MetricName
from opeval.models.errors import DomainError, UndefinedCorrelationError
from opeval.models.report import CorrelationSummary

logger = logging.getLogger(__name__)


def _paired(xs: Sequence[float], ys: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64).reshape(-1)
    y = np.asarray(ys, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise DomainError(f"Correlation inputs differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise DomainError(f"Correlation needs at least 2 pairs, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("Correlation inputs must be finite")
    return x, y


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = float(np.sqrt(np.sum(a * a) * np.sum(b * b)))
    if denom <= 0.0:
        raise UndefinedCorrelationError("zero variance in a correlation input")
    return float(np.clip(np.sum(a * b) / denom, -1.0, 1.0))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)"""
    x, y = _paired(xs, ys)
    return _pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def r_squared(xs: Sequence[float], ys: Sequence[float]) -> float:
    """R^2 of the least-squares line predicting ys from xs; 0 when ys is constant"""
    x, y = _paired(xs, ys)
    if np.ptp(x) == 0.0:
        raise UndefinedCorrelationError("xs is constant, no line of best fit")
    if np.ptp(y) == 0.0:
        return 0.0
    fit = linregress(x, y)
    return float(fit.rvalue**2)


def summarize(
    metric: MetricName, scores: Sequence[float], returns: Sequence[float], n_excluded: int = 0
) -> CorrelationSummary:
    """Correlation of one metric's scores with true returns; undefined cases become NaN"""
    n_models = len(scores)
    try:
        summary = CorrelationSummary(
            metric_name=metric,
            r_squared=r_squared(scores, returns),
            spearman=spearman(scores, returns),
            n_models=n_models,
            n_excluded=n_excluded,
        )
    except (UndefinedCorrelationError, DomainError) as e:
        logger.warning(f"Correlation for {metric.value} undefined over {n_models} models: {str(e)}")
        summary = CorrelationSummary(
            metric_name=metric,
            r_squared=float("nan"),
            spearman=float("nan"),
            n_models=n_models,
            n_excluded=n_excluded,
            error=str(e),
        )
    logger.debug(str(summary))
    return summary
