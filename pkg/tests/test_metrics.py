import numpy as np
import pytest

from opeval.core.evaluation import rollout
from opeval.core.harness import annotate, collect_dataset
from opeval.core.metrics import (
    annotated_points,
    discounted_tails,
    mcc_error,
    opc,
    opc_bruteforce,
    soft_opc,
    sum_advantages,
    td_error,
)
from opeval.core.scoring import MetricSuite
from opeval.core.tree_env import TreeEnv
from opeval.models.enums import AdvantageStart, MetricName, Weighting
from opeval.models.episode import Dataset
from opeval.models.errors import DegenerateScoreError, DomainError
from opeval.models.policy import Policy
from opeval.models.qtable import QTable

from tests.builders import make_dataset, make_episode, points_dataset


def random_dataset(rng, max_episodes=6, max_length=4, decimals=1):
    """Small binary dataset with coarse Q values so ties are common"""
    episodes = []
    for e in range(int(rng.integers(1, max_episodes + 1))):
        length = int(rng.integers(1, max_length + 1))
        q = np.round(rng.random(length), decimals)
        episodes.append(make_episode(f"e{e}", q, float(rng.random() < 0.5)))
    return make_dataset(*episodes)


def bellman_exact_dataset(slip=0.0, n=200):
    env = TreeEnv.one_success(5, slip=slip)
    rng = np.random.default_rng(8)
    data = collect_dataset(env, Policy.uniform(env.state_count, 2), n, rng)
    return annotate(data, env.optimal_q())


# -- OPC -----------------------------------------------------------------


def test_opc_four_points():
    d = points_dataset([0.9, 0.7], [0.8, 0.1])
    assert opc(d) == pytest.approx(0.25)
    assert opc_bruteforce(d) == pytest.approx(0.25)


def test_opc_all_positive_is_zero(rng):
    d = make_dataset(*(make_episode(f"e{i}", rng.random(3), 1.0) for i in range(5)))
    assert opc(d) == pytest.approx(0.0, abs=1e-12)


def test_opc_tie_is_excluded_atomically():
    d = points_dataset([0.5], [0.5])
    assert opc(d) == 0.0


def test_opc_no_positives_is_degenerate():
    d = points_dataset([], [0.2, 0.4])
    with pytest.raises(DegenerateScoreError) as info:
        opc(d)
    assert info.value.value == 0.0


def test_opc_requires_annotations_and_valid_prior():
    d = points_dataset([0.9], [0.1])
    with pytest.raises(DomainError):
        opc(d.without_annotations())
    with pytest.raises(DomainError):
        opc(d, prior=1.5)


def test_annotated_points_weights_are_normalised():
    d = make_dataset(make_episode("a", [0.1, 0.2, 0.3], 1.0), make_episode("b", [0.4], 0.0))
    points = annotated_points(d, Weighting.EPISODE)
    assert points.weight_all.sum() == pytest.approx(1.0)
    assert points.weight_pos.sum() == pytest.approx(1.0)
    assert points.weight_all.tolist() == pytest.approx([1 / 6, 1 / 6, 1 / 6, 0.5])
    assert points.weight_pos[3] == 0.0


@pytest.mark.parametrize("weighting", [Weighting.TRANSITION, Weighting.EPISODE])
def test_opc_matches_bruteforce(weighting):
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 1000:
        d = random_dataset(rng)
        prior = float(rng.random())
        try:
            fast = opc(d, prior, weighting)
        except DegenerateScoreError:
            continue
        assert fast == pytest.approx(opc_bruteforce(d, prior, weighting), abs=1e-12)
        checked += 1


def test_opc_and_bruteforce_agree_on_corner_cases(rng):
    duplicates = points_dataset([0.5] * 6 + [0.2], [0.5] * 4 + [0.9])
    assert opc(duplicates, 0.9) == pytest.approx(opc_bruteforce(duplicates, 0.9), abs=1e-12)

    everything = points_dataset(rng.random(8), [])
    assert opc(everything) == pytest.approx(0.0, abs=1e-12)
    assert opc_bruteforce(everything) == pytest.approx(0.0, abs=1e-12)

    nothing = points_dataset([], rng.random(8))
    for score in (opc, opc_bruteforce):
        with pytest.raises(DegenerateScoreError):
            score(nothing)


def test_opc_lies_between_zero_and_prior():
    rng = np.random.default_rng(41)
    checked = 0
    while checked < 300:
        d = random_dataset(rng)
        prior = float(rng.random())
        for weighting in (Weighting.TRANSITION, Weighting.EPISODE):
            try:
                score = opc(d, prior, weighting)
            except DegenerateScoreError:
                continue
            assert max(0.0, prior - 1.0) - 1e-12 <= score <= prior + 1e-12
        checked += 1


def test_opc_invariant_under_increasing_transform():
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = random_dataset(rng, decimals=2)
        if not (d.final_rewards == 1.0).any():
            continue
        c = d.columns
        cubed = d.with_annotations(c.q_sa**3 * 7.0 - 2.0, c.q_greedy_s, c.q_greedy_next)
        assert opc(cubed, 0.6) == pytest.approx(opc(d, 0.6), abs=1e-12)


def test_opc_unchanged_by_duplicating_episodes():
    d = make_dataset(
        make_episode("a", [0.9, 0.3], 1.0),
        make_episode("b", [0.5, 0.6, 0.2], 0.0),
        make_episode("c", [0.4], 1.0),
    )
    doubled = Dataset.from_episodes(
        d.episodes + tuple(
            make_episode(f"{ep.id}-copy", [tr.q_sa for tr in ep.transitions], ep.final_reward)
            for ep in d.episodes
        ),
        d.env_id,
    )
    assert opc(doubled, 0.7) == pytest.approx(opc(d, 0.7))
    assert soft_opc(doubled, 0.7) == pytest.approx(soft_opc(d, 0.7))


# -- SoftOPC -------------------------------------------------------------


def test_soft_opc_example():
    d = make_dataset(make_episode("s", [0.8, 0.6], 1.0), make_episode("f", [0.4], 0.0))
    assert soft_opc(d) == pytest.approx(0.15)


def test_soft_opc_constant_q_and_all_success():
    d = make_dataset(make_episode("s", [0.3, 0.3], 1.0), make_episode("f", [0.3], 0.0))
    assert soft_opc(d) == pytest.approx(0.0, abs=1e-12)
    both = make_dataset(make_episode("s", [0.1, 0.9], 1.0), make_episode("t", [0.4], 1.0))
    assert soft_opc(both) == pytest.approx(0.0, abs=1e-12)


def test_soft_opc_shift_and_scale():
    d = make_dataset(
        make_episode("s", [0.8, 0.6], 1.0),
        make_episode("f", [0.4, 0.1, 0.7], 0.0),
        make_episode("g", [0.2], 0.0),
    )
    c = d.columns
    moved = d.with_annotations(3.0 * c.q_sa + 11.0, c.q_greedy_s, c.q_greedy_next)
    assert soft_opc(moved) == pytest.approx(3.0 * soft_opc(d))


def test_soft_opc_unchanged_by_repeating_steps_within_episodes():
    rng = np.random.default_rng(23)
    for _ in range(100):
        episodes = [make_episode("s0", rng.random(int(rng.integers(1, 5))), 1.0)]
        episodes += [
            make_episode(f"e{i}", rng.random(int(rng.integers(1, 5))), float(rng.random() < 0.5))
            for i in range(int(rng.integers(1, 6)))
        ]
        d = make_dataset(*episodes)
        stretched = make_dataset(
            *(
                make_episode(ep.id, np.repeat([tr.q_sa for tr in ep.transitions], 2), ep.final_reward)
                for ep in episodes
            )
        )
        prior = float(rng.random())
        assert soft_opc(stretched, prior) == pytest.approx(soft_opc(d, prior), abs=1e-12)


def test_soft_opc_without_successes_is_degenerate():
    d = points_dataset([], [0.3])
    with pytest.raises(DegenerateScoreError) as info:
        soft_opc(d)
    assert info.value.value is None


# -- baselines -----------------------------------------------------------


def test_td_error_single_terminal_step():
    d = make_dataset(make_episode("e", [0.7], 1.0))
    assert td_error(d) == pytest.approx(0.09)


def test_td_error_zero_when_bootstrapped_exactly():
    # q_greedy_next of step t is q_greedy of step t+1, here equal to q_sa
    d = make_dataset(make_episode("e", [0.5, 0.5, 1.0], 1.0, rewards=[0.0, -0.5, 1.0]))
    assert td_error(d) == pytest.approx(0.0, abs=1e-12)


def test_sum_advantages_example():
    d = make_dataset(make_episode("e", [0.0, 0.0], 1.0, q_greedy=[0.5, 0.25]))
    assert sum_advantages(d) == pytest.approx(-0.5)
    assert sum_advantages(d, gamma=0.0) == pytest.approx(-0.375)
    assert sum_advantages(d, start=AdvantageStart.FIRST) == pytest.approx(-0.75)


def test_sum_advantages_greedy_behavior_is_zero(rng):
    d = make_dataset(*(make_episode(f"e{i}", rng.random(4), 0.0) for i in range(3)))
    assert sum_advantages(d) == 0.0


def test_sum_advantages_never_positive_for_table_annotations():
    env = TreeEnv.one_success(4, slip=0.3)
    rng = np.random.default_rng(12)
    data = collect_dataset(env, Policy.uniform(env.state_count, 2), 40, rng)
    for _ in range(50):
        d = annotate(data, QTable(rng.random((env.state_count, 2)) * 10.0))
        gamma = float(rng.random())
        for start in (AdvantageStart.ALL, AdvantageStart.FIRST):
            assert sum_advantages(d, gamma=gamma, start=start) <= 1e-12


def test_discounted_tails_respect_episode_boundaries():
    d = make_dataset(make_episode("a", [0.0, 0.0], 0.0), make_episode("b", [0.0, 0.0, 0.0], 0.0))
    tails = discounted_tails(d, np.array([1.0, 2.0, 1.0, 1.0, 1.0]), 0.5)
    assert tails.tolist() == pytest.approx([2.0, 2.0, 1.75, 1.5, 1.0])


def test_mcc_error_terminal_identity():
    d = make_dataset(make_episode("e", [1.0], 1.0))
    assert mcc_error(d) == 0.0


def test_mcc_error_zero_advantages_targets_monte_carlo_return():
    d = make_dataset(make_episode("e", [0.2, 0.6], 1.0))
    assert mcc_error(d) == pytest.approx(((0.2 - 1.0) ** 2 + (0.6 - 1.0) ** 2) / 2)


def test_baselines_vanish_for_bellman_exact_q():
    d = bellman_exact_dataset()
    assert td_error(d) == pytest.approx(0.0, abs=1e-12)
    assert mcc_error(d) == pytest.approx(0.0, abs=1e-12)


def test_baselines_reject_bad_gamma_and_missing_annotations():
    d = make_dataset(make_episode("e", [0.7], 1.0))
    with pytest.raises(DomainError):
        td_error(d, gamma=1.2)
    with pytest.raises(DomainError):
        mcc_error(d.without_annotations())


# -- suite ---------------------------------------------------------------


def test_metric_suite_flags_degenerate_scores():
    suite = MetricSuite(prior=1.0)
    scores, degenerate = suite.score(points_dataset([], [0.1, 0.2]))
    assert degenerate == {MetricName.OPC, MetricName.SOFT_OPC}
    assert scores[MetricName.OPC] == 0.0
    assert np.isnan(scores[MetricName.SOFT_OPC])
    assert list(scores) == list(suite.metric_names)


def test_metric_suite_configure():
    suite = MetricSuite().configure(opc_weighting="episode", sum_advantages_start="first")
    assert suite.opc_weighting == Weighting.EPISODE
    assert suite.sum_advantages_start == AdvantageStart.FIRST
    with pytest.raises(DomainError):
        MetricSuite().configure(bogus_weighting="episode")
    with pytest.raises(ValueError):
        MetricSuite().configure(opc_weighting="per-step")


def test_metric_suite_extended_adds_ext_opc():
    suite = MetricSuite(extended=True)
    scores, _ = suite.score(points_dataset([0.9, 0.7], [0.8, 0.1]))
    assert scores[MetricName.EXT_OPC] == pytest.approx(scores[MetricName.OPC])


def test_rollout_then_annotate_matches_table(rng):
    env = TreeEnv.one_success(4)
    q = env.optimal_q()
    episode = rollout(env, Policy.uniform(env.state_count, 2), rng, "x")
    d = annotate(Dataset.from_episodes([episode]), q)
    for tr in d.episodes[0].transitions:
        assert tr.q_sa == q.values[tr.state, tr.action]
