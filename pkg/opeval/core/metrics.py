import logging
from typing import NamedTuple

import numpy as np

from opeval.models.enums import AdvantageStart, MetricName, Weighting
from opeval.models.episode import Dataset, label_positives
from opeval.models.errors import DegenerateScoreError, DomainError

logger = logging.getLogger(__name__)


class AnnotatedPoints(NamedTuple):
    """The number line OPC slides its threshold over.

    weight_all sums to 1 over every transition, weight_pos sums to 1 over
    the positive ones and is 0 elsewhere.
    """

    q: np.ndarray
    weight_all: np.ndarray
    weight_pos: np.ndarray


def check_prior(prior: float) -> float:
    prior = float(prior)
    if not 0.0 <= prior <= 1.0:
        raise DomainError(f"prior p(y=1) must lie in [0, 1], got {prior}")
    return prior


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma


def _require_annotations(dataset: Dataset) -> None:
    if not dataset.is_annotated:
        raise DomainError(f"{dataset!r} carries no Q annotations; annotate it or supply a Q-table")


def transition_weights(dataset: Dataset, weighting: Weighting) -> np.ndarray:
    """Unnormalised per-transition weight: 1, or 1/T of the owning episode"""
    if Weighting(weighting) == Weighting.TRANSITION:
        return np.ones(dataset.n_transitions)
    return 1.0 / dataset.episode_lengths[dataset.episode_index]


def annotated_points(dataset: Dataset, weighting: Weighting = Weighting.TRANSITION) -> AnnotatedPoints:
    _require_annotations(dataset)
    labels = label_positives(dataset)
    if labels.n_positive == 0:
        raise DegenerateScoreError(
            MetricName.OPC.value, "no transition belongs to a successful episode", value=0.0
        )
    raw = transition_weights(dataset, weighting)
    weight_all = raw / raw.sum()
    weight_pos = np.where(labels.mask, raw, 0.0)
    weight_pos = weight_pos / weight_pos.sum()
    return AnnotatedPoints(q=dataset.columns.q_sa, weight_all=weight_all, weight_pos=weight_pos)


def opc(dataset: Dataset, prior: float = 1.0, weighting: Weighting = Weighting.TRANSITION) -> float:
    """Best threshold classifier score, p * P+(Q > b) - P(Q > b), maximised over b.

    Points are sorted by decreasing Q once; the running sum of
    p * weight_pos - weight_all, read at the last point of every run of
    equal Q values, is the score of the threshold just below that value.
    b = +inf contributes 0.
    """
    prior = check_prior(prior)
    points = annotated_points(dataset, weighting)

    order = np.argsort(-points.q, kind="stable")
    q_sorted = points.q[order]
    gain = prior * points.weight_pos[order] - points.weight_all[order]
    running = np.cumsum(gain)
    run_ends = np.flatnonzero(np.append(q_sorted[1:] != q_sorted[:-1], True))

    score = max(0.0, float(running[run_ends].max()))
    logger.debug(f"OPC over {len(q_sorted)} points ({len(run_ends)} distinct values): {score:.6g}")
    return score


def opc_bruteforce(dataset: Dataset, prior: float = 1.0, weighting: Weighting = Weighting.TRANSITION) -> float:
    """OPC by recounting the objective at every candidate threshold, O(N^2)"""
    prior = check_prior(prior)
    points = annotated_points(dataset, weighting)

    best = 0.0  # b = +inf
    for value in np.unique(points.q):
        above = points.q >= value
        objective = prior * points.weight_pos[above].sum() - points.weight_all[above].sum()
        best = max(best, float(objective))
    return best


def soft_opc(dataset: Dataset, prior: float = 1.0, weighting: Weighting = Weighting.EPISODE) -> float:
    """p * E[Q | successful] - E[Q], each expectation weighted per transition"""
    prior = check_prior(prior)
    _require_annotations(dataset)
    labels = label_positives(dataset)
    if labels.n_positive == 0:
        raise DegenerateScoreError(MetricName.SOFT_OPC.value, "dataset has no successful episode")

    q = dataset.columns.q_sa
    weights = transition_weights(dataset, weighting)
    positive_mean = np.average(q[labels.mask], weights=weights[labels.mask])
    overall_mean = np.average(q, weights=weights)
    return float(prior * positive_mean - overall_mean)


def discounted_tails(dataset: Dataset, values: np.ndarray, gamma: float) -> np.ndarray:
    """tails[t] = sum over t' >= t in the same episode of gamma^(t'-t) * values[t']"""
    tails = np.array(values, dtype=np.float64)
    position = np.arange(dataset.n_transitions) - dataset.columns.offsets[dataset.episode_index]
    order = np.argsort(position, kind="stable")
    counts = np.bincount(position)
    by_position = np.split(order, np.cumsum(counts)[:-1])

    terminal = dataset.terminal_mask
    for rows in reversed(by_position):
        rows = rows[~terminal[rows]]
        tails[rows] += gamma * tails[rows + 1]
    return tails


def td_error(dataset: Dataset, gamma: float = 1.0, weighting: Weighting = Weighting.TRANSITION) -> float:
    """Mean squared one-step TD error; terminal steps bootstrap from 0"""
    gamma = check_gamma(gamma)
    _require_annotations(dataset)
    c = dataset.columns
    target = c.reward + gamma * np.nan_to_num(c.q_greedy_next, nan=0.0)
    errors = (c.q_sa - target) ** 2
    return float(np.average(errors, weights=transition_weights(dataset, weighting)))


def sum_advantages(
    dataset: Dataset,
    gamma: float = 1.0,
    weighting: Weighting = Weighting.EPISODE,
    start: AdvantageStart = AdvantageStart.ALL,
) -> float:
    """Discounted tail sums of Q(s,a) - max Q(s,.); lower is better"""
    gamma = check_gamma(gamma)
    _require_annotations(dataset)
    advantages = dataset.columns.q_sa - dataset.columns.q_greedy_s
    tails = discounted_tails(dataset, advantages, gamma)
    if AdvantageStart(start) == AdvantageStart.FIRST:
        return float(tails[dataset.columns.offsets[:-1]].mean())
    return float(np.average(tails, weights=transition_weights(dataset, weighting)))


def mcc_error(dataset: Dataset, gamma: float = 1.0, weighting: Weighting = Weighting.EPISODE) -> float:
    """Squared error to r_t + sum_{t' > t} gamma^(t'-t) (r_t' - A_t')"""
    gamma = check_gamma(gamma)
    _require_annotations(dataset)
    c = dataset.columns
    advantages = c.q_sa - c.q_greedy_s
    corrected = discounted_tails(dataset, c.reward - advantages, gamma)

    continuation = np.zeros(dataset.n_transitions)
    live = np.flatnonzero(~dataset.terminal_mask)
    continuation[live] = gamma * corrected[live + 1]
    target = c.reward + continuation
    errors = (c.q_sa - target) ** 2
    return float(np.average(errors, weights=transition_weights(dataset, weighting)))
