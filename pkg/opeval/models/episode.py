import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ValidationError
from .qtable import QTable

logger = logging.getLogger(__name__)

# Slack for the q_greedy_s >= q_sa check on externally produced logs
ANNOTATION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Transition:
    t: int
    state: int
    action: int
    reward: float
    q_sa: Optional[float] = None
    q_greedy_s: Optional[float] = None
    q_greedy_next: Optional[float] = None

    @property
    def annotated(self) -> bool:
        return self.q_sa is not None

    @classmethod
    def from_dict(cls, data: Dict) -> "Transition":
        """Parse one step of an EpisodeRecord"""
        try:
            return cls(
                t=int(data["t"]),
                state=int(data["state"]),
                action=int(data["action"]),
                reward=float(data["reward"]),
                q_sa=_optional_float(data.get("q_sa")),
                q_greedy_s=_optional_float(data.get("q_greedy_s")),
                q_greedy_next=_optional_float(data.get("q_greedy_next")),
            )
        except KeyError as e:
            raise ValueError(f"step missing field {e}")
        except (TypeError, ValueError) as e:
            raise ValueError(f"invalid step data: {str(e)}")

    def to_dict(self) -> Dict:
        return {
            "t": self.t,
            "state": self.state,
            "action": self.action,
            "reward": self.reward,
            "q_sa": self.q_sa,
            "q_greedy_s": self.q_greedy_s,
            "q_greedy_next": self.q_greedy_next,
        }


@dataclass(frozen=True)
class Episode:
    id: str
    transitions: Tuple[Transition, ...]
    final_reward: float

    def __post_init__(self):
        if not self.transitions:
            raise DomainError(f"Episode {self.id} has no transitions")
        object.__setattr__(self, "transitions", tuple(self.transitions))

    @property
    def length(self) -> int:
        return len(self.transitions)

    @property
    def total_return(self) -> float:
        return float(sum(tr.reward for tr in self.transitions))

    @property
    def success(self) -> bool:
        return self.final_reward == 1.0

    @classmethod
    def from_dict(cls, data: Dict) -> "Episode":
        """Build an Episode from an EpisodeRecord mapping"""
        if not isinstance(data, dict):
            raise ValueError("Episode record must be a JSON object")
        try:
            steps = data["steps"]
            if not isinstance(steps, list) or not steps:
                raise ValueError("steps must be a non-empty array")
            return cls(
                id=str(data["episode_id"]),
                transitions=tuple(Transition.from_dict(step) for step in steps),
                final_reward=float(data["final_reward"]),
            )
        except KeyError as e:
            raise ValueError(f"episode record missing field {e}")

    def to_dict(self) -> Dict:
        return {
            "episode_id": self.id,
            "steps": [tr.to_dict() for tr in self.transitions],
            "final_reward": self.final_reward,
        }

    def problems(self, binary: bool = False) -> List[str]:
        """Invariant violations of this episode, empty when valid"""
        issues = []
        length = self.length
        for i, tr in enumerate(self.transitions):
            if tr.t != i + 1:
                issues.append(f"step {i + 1} has t={tr.t}, steps must be ordered from t=1")
            if tr.state < 0 or tr.action < 0:
                issues.append(f"step {tr.t} has a negative state or action index")
            annotation = (tr.q_sa, tr.q_greedy_s)
            if any(v is not None for v in annotation) and any(v is None for v in annotation):
                issues.append(f"step {tr.t} is partially annotated")
            if tr.annotated:
                if tr.q_greedy_s is not None and tr.q_greedy_s < tr.q_sa - ANNOTATION_TOLERANCE:
                    issues.append(f"step {tr.t} has q_greedy_s {tr.q_greedy_s} below q_sa {tr.q_sa}")
                terminal = i == length - 1
                if terminal and tr.q_greedy_next is not None:
                    issues.append(f"step {tr.t} is terminal but carries q_greedy_next")
                if not terminal and tr.q_greedy_next is None:
                    issues.append(f"step {tr.t} is non-terminal but q_greedy_next is missing")

        if self.final_reward != self.transitions[-1].reward:
            issues.append(
                f"final_reward {self.final_reward} differs from last step reward "
                f"{self.transitions[-1].reward}"
            )
        if binary:
            if self.final_reward not in (0.0, 1.0):
                issues.append(f"final_reward {self.final_reward} is not binary")
            if any(tr.reward != 0.0 for tr in self.transitions[:-1]):
                issues.append("non-terminal reward in binary mode")
        return issues


@dataclass(frozen=True)
class TransitionColumns:
    """Columnar storage of every transition in a Dataset, episode-contiguous"""

    episode_ids: Tuple[str, ...]
    offsets: np.ndarray
    t: np.ndarray
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    q_sa: Optional[np.ndarray] = None
    q_greedy_s: Optional[np.ndarray] = None
    q_greedy_next: Optional[np.ndarray] = None  # NaN on terminal steps

    def __post_init__(self):
        for name in ("offsets", "t", "state", "action", "reward", "q_sa", "q_greedy_s", "q_greedy_next"):
            value = getattr(self, name)
            if value is not None:
                value.flags.writeable = False


class PositiveLabels(NamedTuple):
    mask: np.ndarray
    n: int
    n_positive: int


class Dataset:
    """Immutable collection of episodes plus the metadata of how it was collected"""

    def __init__(
        self,
        columns: TransitionColumns,
        env_id: str = "external",
        behavior_descriptor: str = "unknown",
        seed: int = 0,
    ):
        if len(columns.episode_ids) == 0:
            raise DomainError("Dataset must contain at least one episode")
        self.columns = columns
        self.env_id = str(env_id)
        self.behavior_descriptor = str(behavior_descriptor)
        self.seed = int(seed)

    @classmethod
    def from_episodes(
        cls,
        episodes: Iterable[Episode],
        env_id: str = "external",
        behavior_descriptor: str = "unknown",
        seed: int = 0,
    ) -> "Dataset":
        episodes = list(episodes)
        if not episodes:
            raise DomainError("Dataset must contain at least one episode")
        mismatched = [ep.id for ep in episodes if ep.final_reward != ep.transitions[-1].reward]
        if mismatched:
            raise DomainError(f"final_reward differs from the last step reward in episodes {mismatched}")

        lengths = np.array([ep.length for ep in episodes], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        flat = [tr for ep in episodes for tr in ep.transitions]

        annotated = [tr.annotated for tr in flat]
        if any(annotated) and not all(annotated):
            raise DomainError("Dataset mixes annotated and unannotated transitions")

        q_sa = q_greedy_s = q_greedy_next = None
        if all(annotated):
            q_sa = np.array([tr.q_sa for tr in flat], dtype=np.float64)
            q_greedy_s = np.array([tr.q_greedy_s for tr in flat], dtype=np.float64)
            q_greedy_next = np.array(
                [np.nan if tr.q_greedy_next is None else tr.q_greedy_next for tr in flat],
                dtype=np.float64,
            )

        columns = TransitionColumns(
            episode_ids=tuple(ep.id for ep in episodes),
            offsets=offsets,
            t=np.array([tr.t for tr in flat], dtype=np.int64),
            state=np.array([tr.state for tr in flat], dtype=np.int64),
            action=np.array([tr.action for tr in flat], dtype=np.int64),
            reward=np.array([tr.reward for tr in flat], dtype=np.float64),
            q_sa=q_sa,
            q_greedy_s=q_greedy_s,
            q_greedy_next=q_greedy_next,
        )
        return cls(columns, env_id, behavior_descriptor, seed)

    # -- shape -----------------------------------------------------------

    @property
    def n_transitions(self) -> int:
        return int(self.columns.offsets[-1])

    @property
    def n_episodes(self) -> int:
        return len(self.columns.episode_ids)

    @cached_property
    def episode_lengths(self) -> np.ndarray:
        return np.diff(self.columns.offsets)

    @cached_property
    def episode_index(self) -> np.ndarray:
        """Owning episode of each transition"""
        return np.repeat(np.arange(self.n_episodes), self.episode_lengths)

    @cached_property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_transitions, dtype=bool)
        mask[self.columns.offsets[1:] - 1] = True
        return mask

    @cached_property
    def final_rewards(self) -> np.ndarray:
        return self.columns.reward[self.columns.offsets[1:] - 1]

    @cached_property
    def episode_returns(self) -> np.ndarray:
        return np.add.reduceat(self.columns.reward, self.columns.offsets[:-1])

    @cached_property
    def accumulated_rewards(self) -> np.ndarray:
        """Reward collected strictly before each step within its episode"""
        running = np.cumsum(self.columns.reward)
        episode_start = np.concatenate([[0.0], running])[self.columns.offsets[:-1]]
        return running - self.columns.reward - episode_start[self.episode_index]

    @property
    def is_annotated(self) -> bool:
        return self.columns.q_sa is not None

    @cached_property
    def episodes(self) -> Tuple[Episode, ...]:
        c = self.columns
        episodes = []
        for e, episode_id in enumerate(c.episode_ids):
            lo, hi = int(c.offsets[e]), int(c.offsets[e + 1])
            transitions = []
            for i in range(lo, hi):
                if self.is_annotated:
                    next_value = None if i == hi - 1 else float(c.q_greedy_next[i])
                    annotation = (float(c.q_sa[i]), float(c.q_greedy_s[i]), next_value)
                else:
                    annotation = (None, None, None)
                transitions.append(
                    Transition(
                        int(c.t[i]), int(c.state[i]), int(c.action[i]), float(c.reward[i]), *annotation
                    )
                )
            episodes.append(Episode(episode_id, tuple(transitions), float(c.reward[hi - 1])))
        return tuple(episodes)

    # -- derived datasets ------------------------------------------------

    def _derive(self, **changes) -> "Dataset":
        fields = {
            name: getattr(self.columns, name)
            for name in TransitionColumns.__dataclass_fields__
        }
        fields.update(changes)
        return Dataset(
            TransitionColumns(**fields), self.env_id, self.behavior_descriptor, self.seed
        )

    def with_annotations(
        self, q_sa: np.ndarray, q_greedy_s: np.ndarray, q_greedy_next: np.ndarray
    ) -> "Dataset":
        q_greedy_next = np.array(q_greedy_next, dtype=np.float64)
        q_greedy_next[self.terminal_mask] = np.nan
        return self._derive(
            q_sa=np.array(q_sa, dtype=np.float64),
            q_greedy_s=np.array(q_greedy_s, dtype=np.float64),
            q_greedy_next=q_greedy_next,
        )

    def with_rewards(self, reward: np.ndarray) -> "Dataset":
        return self._derive(reward=np.array(reward, dtype=np.float64))

    def without_annotations(self) -> "Dataset":
        return self._derive(q_sa=None, q_greedy_s=None, q_greedy_next=None)

    def subset(self, episode_indices: Sequence[int]) -> "Dataset":
        """Dataset restricted to the given episodes, in the given order"""
        c = self.columns
        indices = [int(e) for e in episode_indices]
        if not indices:
            raise DomainError("subset must keep at least one episode")
        rows = np.concatenate([np.arange(c.offsets[e], c.offsets[e + 1]) for e in indices])
        lengths = self.episode_lengths[indices]

        def take(column):
            return None if column is None else column[rows]

        return Dataset(
            TransitionColumns(
                episode_ids=tuple(c.episode_ids[e] for e in indices),
                offsets=np.concatenate([[0], np.cumsum(lengths)]),
                t=c.t[rows],
                state=c.state[rows],
                action=c.action[rows],
                reward=c.reward[rows],
                q_sa=take(c.q_sa),
                q_greedy_s=take(c.q_greedy_s),
                q_greedy_next=take(c.q_greedy_next),
            ),
            self.env_id,
            self.behavior_descriptor,
            self.seed,
        )

    # -- validation ------------------------------------------------------

    def validate(self, binary: bool = False) -> None:
        """Raise ValidationError naming every invalid episode"""
        issues = []
        for episode in self.episodes:
            for problem in episode.problems(binary=binary):
                issues.append(f"episode {episode.id}: {problem}")
        if issues:
            logger.warning(f"Dataset validation found {len(issues)} problem(s)")
            raise ValidationError(issues)

    def metadata(self) -> Dict:
        return {
            "env_id": self.env_id,
            "behavior_descriptor": self.behavior_descriptor,
            "seed": self.seed,
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.metadata() != other.metadata():
            return False
        a, b = self.columns, other.columns
        if a.episode_ids != b.episode_ids:
            return False
        for name in ("offsets", "t", "state", "action", "reward", "q_sa", "q_greedy_s", "q_greedy_next"):
            x, y = getattr(a, name), getattr(b, name)
            if (x is None) != (y is None):
                return False
            if x is not None and not np.array_equal(x, y, equal_nan=True):
                return False
        return True

    def __repr__(self) -> str:
        return (
            f"Dataset(env_id={self.env_id!r}, episodes={self.n_episodes}, "
            f"transitions={self.n_transitions}, annotated={self.is_annotated})"
        )


def label_positives(dataset: Dataset) -> PositiveLabels:
    """A transition is positive iff its episode ended with reward 1"""
    mask = (dataset.final_rewards == 1.0)[dataset.episode_index]
    n_positive = int(mask.sum())
    logger.debug(f"Labelled {n_positive} of {dataset.n_transitions} transitions positive")
    return PositiveLabels(mask=mask, n=dataset.n_transitions, n_positive=n_positive)


def annotation_problems(dataset: Dataset, q: QTable) -> List[str]:
    """Mismatches between a dataset's Q annotations and the table they came from"""
    if not dataset.is_annotated:
        return ["dataset carries no Q annotations"]

    c = dataset.columns
    issues = []
    out_of_range = (c.state >= q.state_count) | (c.action >= q.action_count)
    if np.any(out_of_range):
        return [f"{int(out_of_range.sum())} transitions index outside QTable {q.id}"]

    expected_sa = q.values[c.state, c.action]
    expected_greedy = q.greedy_values()[c.state]
    next_state = np.roll(c.state, -1)
    expected_next = np.where(dataset.terminal_mask, np.nan, q.greedy_values()[next_state])

    checks = (
        ("q_sa", c.q_sa, expected_sa),
        ("q_greedy_s", c.q_greedy_s, expected_greedy),
        ("q_greedy_next", c.q_greedy_next, expected_next),
    )
    for name, got, expected in checks:
        bad = ~np.isclose(got, expected, rtol=0.0, atol=ANNOTATION_TOLERANCE, equal_nan=True)
        if np.any(bad):
            first = int(np.argmax(bad))
            episode_id = c.episode_ids[int(dataset.episode_index[first])]
            issues.append(
                f"{name} disagrees with QTable {q.id} on {int(bad.sum())} transitions "
                f"(first in episode {episode_id}, t={int(c.t[first])})"
            )
    return issues


def validate_annotations(dataset: Dataset, q: QTable) -> None:
    """Raise ValidationError listing every disagreement with q"""
    issues = annotation_problems(dataset, q)
    if issues:
        raise ValidationError(issues)


def _optional_float(value) -> Optional[float]:
    return None if value is None else float(value)
