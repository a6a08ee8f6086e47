"""OPC for tasks whose return is not a single 0/1 terminal reward.

Each transition's value is lifted by the reward collected before it, which
is what Q looks like on the accumulated-reward augmentation of the task.
The lifted dataset is then scored once per achievable return c with success
redefined as "return >= c", and the results are combined by the tail-sum
form of an expectation.
"""
import logging
from typing import Callable, Sequence

import numpy as np

from opeval.models.enums import MetricName, Weighting
from opeval.models.episode import Dataset
from opeval.models.errors import DegenerateScoreError, DomainError

from .metrics import check_prior, opc

logger = logging.getLogger(__name__)


def tail_sum_expectation(values: Sequence[float], tail: Callable[[float], float]) -> float:
    """c_1 + sum_i (c_i - c_{i-1}) * tail(c_i) over sorted distinct c_1 < ... < c_n.

    With tail(c) = P(X >= c) this is E[X] for X supported on the values.
    """
    ordered = np.unique(np.asarray(values, dtype=np.float64))
    if ordered.size == 0:
        raise DomainError("tail_sum_expectation needs at least one value")
    total = float(ordered[0])
    for previous, current in zip(ordered[:-1], ordered[1:]):
        total += float(current - previous) * tail(float(current))
    return total


def thresholded_dataset(dataset: Dataset, threshold: float) -> Dataset:
    """Binary relabelling at `threshold` with Q annotations lifted by accumulated reward"""
    if not dataset.is_annotated:
        raise DomainError(f"{dataset!r} carries no Q annotations")
    c = dataset.columns
    accumulated = dataset.accumulated_rewards

    success = dataset.episode_returns >= threshold
    reward = np.zeros(dataset.n_transitions)
    reward[dataset.terminal_mask] = success.astype(np.float64)

    next_accumulated = accumulated + c.reward
    return dataset.with_rewards(reward).with_annotations(
        q_sa=accumulated + c.q_sa,
        q_greedy_s=accumulated + c.q_greedy_s,
        q_greedy_next=next_accumulated + c.q_greedy_next,
    )


def thresholded_opc(
    dataset: Dataset,
    threshold: float,
    prior: float = 1.0,
    weighting: Weighting = Weighting.TRANSITION,
) -> float:
    """OPC with success meaning episode return >= threshold"""
    prior = check_prior(prior)
    relabelled = thresholded_dataset(dataset, threshold)
    try:
        return opc(relabelled, prior, weighting)
    except DegenerateScoreError as e:
        raise DegenerateScoreError(
            MetricName.EXT_OPC.value, f"no episode reaches return {threshold:g}", value=e.value
        )


def extended_opc(dataset: Dataset, prior: float = 1.0, weighting: Weighting = Weighting.TRANSITION) -> float:
    """Ranking score for dense rewards built from thresholded OPC at every achieved return.

    Not a calibrated return estimate: thresholded OPC correlates with
    P(R >= c) but is not that probability.
    """
    prior = check_prior(prior)
    if not dataset.is_annotated:
        raise DomainError(f"{dataset!r} carries no Q annotations")
    thresholds = np.unique(dataset.episode_returns)
    logger.debug(f"Extended OPC over {thresholds.size} distinct returns on {dataset.env_id}")
    return tail_sum_expectation(
        thresholds, lambda c: thresholded_opc(dataset, c, prior, weighting)
    )
