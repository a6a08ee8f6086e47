"""Full-size tree experiments checked against the published correlation targets.

These runs take tens of seconds each; select them with `pytest -m slow`.
"""
import numpy as np
import pytest

from opeval.core.harness import (
    CorrelationExperiment,
    EnvConfig,
    ExperimentConfig,
    magnitude_sweep,
    prior_sweep,
    run_correlation_experiment,
    stochastic_sweep,
)
from opeval.models.enums import MetricName
from opeval.models.qtable import QTable

BASELINES = (MetricName.TD_ERR, MetricName.SUM_ADV, MetricName.MCC_ERR)
PROPOSED = (MetricName.OPC, MetricName.SOFT_OPC)


def spearman(result, metric):
    return result.summary(metric).spearman_or_zero()


def assert_proposed_beat_baselines(result):
    best_baseline = max(spearman(result, m) for m in BASELINES)
    for metric in PROPOSED:
        assert spearman(result, metric) > best_baseline, metric


@pytest.mark.slow
def test_deterministic_tree_correlations():
    result = run_correlation_experiment(ExperimentConfig())

    assert len(result.reports) == 1000 and len(result.summaries) == 5
    assert spearman(result, MetricName.OPC) == pytest.approx(0.50, abs=0.10)
    assert spearman(result, MetricName.SOFT_OPC) == pytest.approx(0.51, abs=0.10)
    assert result.summary(MetricName.OPC).r_squared == pytest.approx(0.21, abs=0.10)
    assert result.summary(MetricName.SOFT_OPC).r_squared == pytest.approx(0.19, abs=0.10)
    assert abs(spearman(result, MetricName.TD_ERR)) <= 0.30
    assert abs(spearman(result, MetricName.MCC_ERR)) <= 0.30
    assert abs(spearman(result, MetricName.SUM_ADV)) <= 0.10
    assert_proposed_beat_baselines(result)


@pytest.mark.slow
def test_stochastic_tree_correlations():
    points = stochastic_sweep(ExperimentConfig())
    soft_targets = {0.4: 0.39, 0.6: 0.18, 0.8: 0.20}
    opc_targets = {0.4: 0.38, 0.6: 0.08, 0.8: 0.19}

    assert [p.value for p in points] == [0.4, 0.6, 0.8]
    for point in points:
        assert spearman(point.result, MetricName.SOFT_OPC) == pytest.approx(soft_targets[point.value], abs=0.15)
        assert spearman(point.result, MetricName.OPC) == pytest.approx(opc_targets[point.value], abs=0.15)
        assert_proposed_beat_baselines(point.result)


@pytest.mark.slow
@pytest.mark.parametrize("layout", ["one_success", "one_failure"])
def test_prior_sweep_peaks_at_one(layout):
    points = prior_sweep(ExperimentConfig(env=EnvConfig(layout=layout)))
    assert points[-1].value == 1.0
    for metric in PROPOSED:
        curve = [spearman(p.result, metric) for p in points]
        assert curve[-1] >= max(curve) - 0.02, metric
        assert curve[-1] > curve[0], metric


@pytest.mark.slow
def test_magnitude_regimes():
    uniform, per_index, large = (p.result for p in magnitude_sweep(ExperimentConfig()))

    # seeds 0-4 lose 0.045-0.061 of SoftOPC Spearman under the per-index law
    drop = spearman(uniform, MetricName.SOFT_OPC) - spearman(per_index, MetricName.SOFT_OPC)
    assert drop >= 0.03
    assert abs(spearman(uniform, MetricName.OPC) - spearman(per_index, MetricName.OPC)) <= 0.05
    assert spearman(large, MetricName.SOFT_OPC) == pytest.approx(spearman(uniform, MetricName.SOFT_OPC), abs=0.05)


def test_increasing_maps_leave_opc_and_true_return_unchanged():
    cfg = ExperimentConfig(env=EnvConfig(depth=5), n_qfunctions=30, n_validation_episodes=200, threads=1)
    experiment = CorrelationExperiment(cfg)
    dataset = experiment.collect()
    maps = (np.exp, lambda v: v**3, lambda v: 5.0 * v - 1.0, np.arctan, lambda v: np.log1p(v))

    for k, q in enumerate(experiment.qfunctions()):
        moved = QTable(maps[k % len(maps)](q.values), q.id)
        before = experiment.evaluate(dataset, q)
        after = experiment.evaluate(dataset, moved)
        assert after.true_return == before.true_return
        assert after.scores[MetricName.OPC] == pytest.approx(before.scores[MetricName.OPC], abs=1e-12)
