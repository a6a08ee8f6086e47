import numpy as np
import pytest

from opeval.models.enums import PolicyKind
from opeval.models.episode import (
    Dataset,
    Episode,
    Transition,
    annotation_problems,
    label_positives,
    validate_annotations,
)
from opeval.models.errors import DomainError, ValidationError
from opeval.models.policy import Policy, sample_action
from opeval.models.qtable import QTable, argmax_action

from tests.builders import make_dataset, make_episode


@pytest.mark.parametrize(
    "row, expected",
    [([0.1, 0.9], 1), ([0.5, 0.5], 0), ([0.3, 0.7, 0.7], 1)],
)
def test_argmax_action_breaks_ties_low(row, expected):
    q = QTable([row])
    assert argmax_action(q, 0) == expected


def test_argmax_action_rejects_bad_state():
    q = QTable([[0.0, 1.0]])
    with pytest.raises(DomainError):
        argmax_action(q, 1)
    with pytest.raises(DomainError):
        argmax_action(q, -1)


def test_argmax_invariant_under_increasing_transform(rng):
    q = QTable(rng.random((20, 3)))
    cubed = q.transformed(lambda v: v**3 + 5.0)
    assert np.array_equal(q.greedy_actions(), cubed.greedy_actions())
    for s in range(q.state_count):
        assert q.values[s, argmax_action(q, s)] == q.values[s].max()


def test_qtable_rejects_non_finite_and_is_read_only():
    with pytest.raises(DomainError):
        QTable([[0.0, np.nan]])
    with pytest.raises(DomainError):
        QTable([1.0, 2.0])
    q = QTable([[1.0, 2.0]])
    with pytest.raises(ValueError):
        q.values[0, 0] = 3.0


def test_qtable_dict_round_trip():
    q = QTable([[0.25, 0.5], [1.0, 0.0]], "q7")
    assert QTable.from_dict(q.to_dict()) == q


def test_argmax_policy_ignores_rng(rng):
    q = QTable(rng.random((10, 2)))
    policy = Policy.argmax(q)
    for s in range(10):
        assert sample_action(policy, s, rng) == argmax_action(q, s)


def test_epsilon_zero_matches_argmax(rng):
    q = QTable(rng.random((10, 2)))
    greedy = Policy.epsilon_greedy(q, 0.0)
    assert np.array_equal(greedy.action_probabilities(), Policy.argmax(q).action_probabilities())
    for s in range(10):
        assert sample_action(greedy, s, rng) == argmax_action(q, s)


def test_epsilon_one_is_uniform():
    q = QTable(np.tile([[0.0, 1.0]], (50, 1)))
    rng = np.random.default_rng(5)
    policy = Policy.epsilon_greedy(q, 1.0)
    assert np.allclose(policy.action_probabilities(), 0.5)
    draws = [sample_action(policy, 0, rng) for _ in range(20000)]
    assert np.mean(draws) == pytest.approx(0.5, abs=0.02)


def test_uniform_policy_needs_shape_and_checks_state(rng):
    with pytest.raises(DomainError):
        Policy(PolicyKind.UNIFORM)
    policy = Policy.uniform(3, 2)
    with pytest.raises(DomainError):
        sample_action(policy, 3, rng)
    with pytest.raises(DomainError):
        Policy.epsilon_greedy(QTable([[0.0, 1.0]]), 1.5)


def test_label_positives_counts():
    d = make_dataset(
        make_episode("a", [0.1, 0.2, 0.3], 1.0),
        make_episode("b", [0.4, 0.5], 0.0),
    )
    labels = label_positives(d)
    assert (labels.n, labels.n_positive) == (5, 3)
    assert labels.mask.tolist() == [True, True, True, False, False]


@pytest.mark.parametrize("reward, expected", [(0.0, 0), (1.0, 4)])
def test_label_positives_all_failed_or_all_succeeded(reward, expected):
    d = make_dataset(make_episode("a", [0.1, 0.2], reward), make_episode("b", [0.3, 0.4], reward))
    labels = label_positives(d)
    assert labels.n_positive == expected
    assert labels.n == 4


def test_dataset_rejects_empty_and_mismatched_final_reward():
    with pytest.raises(DomainError):
        Dataset.from_episodes([])
    bad = Episode("x", (Transition(1, 0, 0, 0.0),), final_reward=1.0)
    with pytest.raises(DomainError):
        Dataset.from_episodes([bad])


def test_episode_problems_in_binary_mode():
    dense = make_episode("d", [0.1, 0.2], 1.0, rewards=[0.5, 1.0])
    assert dense.problems() == []
    problems = dense.problems(binary=True)
    assert any("non-terminal reward" in p for p in problems)

    weird = make_episode("w", [0.1], 2.0)
    assert any("not binary" in p for p in weird.problems(binary=True))


def test_episode_problems_flag_bad_annotations():
    steps = (
        Transition(1, 0, 0, 0.0, q_sa=0.9, q_greedy_s=0.5, q_greedy_next=None),
        Transition(3, 1, 0, 1.0, q_sa=0.2, q_greedy_s=0.2, q_greedy_next=0.1),
    )
    problems = Episode("e", steps, 1.0).problems()
    assert any("below q_sa" in p for p in problems)
    assert any("t=3" in p for p in problems)
    assert any("q_greedy_next is missing" in p for p in problems)
    assert any("terminal but carries" in p for p in problems)


def test_dataset_validate_collects_every_episode():
    d = make_dataset(make_episode("a", [0.1], 3.0), make_episode("b", [0.1, 0.2], 1.0, rewards=[1.0, 1.0]))
    with pytest.raises(ValidationError) as info:
        d.validate(binary=True)
    assert len(info.value.messages) == 2
    assert info.value.messages[0].startswith("episode a")


def test_accumulated_rewards_exclude_current_step():
    d = make_dataset(
        make_episode("a", [0.0, 0.0, 0.0], 2.0, rewards=[1.0, 0.5, 2.0]),
        make_episode("b", [0.0, 0.0], 1.0, rewards=[3.0, 1.0]),
    )
    assert d.accumulated_rewards.tolist() == [0.0, 1.0, 1.5, 0.0, 3.0]
    assert d.episode_returns.tolist() == [3.5, 4.0]


def test_subset_and_episode_materialisation_round_trip():
    d = make_dataset(
        make_episode("a", [0.1, 0.2], 1.0),
        make_episode("b", [0.3], 0.0),
        make_episode("c", [0.4, 0.5, 0.6], 0.0),
    )
    assert Dataset.from_episodes(d.episodes, "hand", "hand-made", 0) == d
    sub = d.subset([2, 0])
    assert sub.columns.episode_ids == ("c", "a")
    assert sub.columns.q_sa.tolist() == [0.4, 0.5, 0.6, 0.1, 0.2]
    assert sub.terminal_mask.tolist() == [False, False, True, False, True]


def test_annotation_problems_detect_foreign_table():
    q = QTable([[0.1, 0.9], [0.4, 0.3], [0.0, 0.0]], "q")
    steps = (
        Transition(1, 0, 0, 0.0, q_sa=0.1, q_greedy_s=0.9, q_greedy_next=0.4),
        Transition(2, 1, 1, 1.0, q_sa=0.3, q_greedy_s=0.4, q_greedy_next=None),
    )
    d = Dataset.from_episodes([Episode("e", steps, 1.0)])
    assert annotation_problems(d, q) == []

    other = QTable([[0.2, 0.9], [0.4, 0.3], [0.0, 0.0]], "other")
    issues = annotation_problems(d, other)
    assert len(issues) == 1 and "q_sa" in issues[0]

    validate_annotations(d, q)
    with pytest.raises(ValidationError) as info:
        validate_annotations(d, other)
    assert info.value.messages == issues
