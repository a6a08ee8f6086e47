import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from opeval.models.errors import DomainError

logger = logging.getLogger(__name__)


class TabularMDP:
    """Finite episodic MDP with states numbered in topological order.

    Every transition goes from a state to a strictly larger index, so a single
    backward sweep over the state indices is exact policy evaluation. Rewards
    are attached to (s, a, s') and terminal states have no outgoing actions.
    """

    def __init__(
        self,
        transitions: np.ndarray,
        rewards: np.ndarray,
        initial: np.ndarray,
        terminal: np.ndarray,
        env_id: str = "tabular",
        state_labels: Optional[Sequence] = None,
    ):
        self.transitions = np.array(transitions, dtype=np.float64)
        self.rewards = np.array(rewards, dtype=np.float64)
        self.initial = np.array(initial, dtype=np.float64)
        self.terminal = np.array(terminal, dtype=bool)
        self.env_id = env_id
        self.state_labels = tuple(state_labels) if state_labels is not None else None
        self._validate()

        for array in (self.transitions, self.rewards, self.initial, self.terminal):
            array.flags.writeable = False
        logger.debug(f"Built {env_id} with {self.state_count} states and {self.action_count} actions")

    def _validate(self) -> None:
        n_states, n_actions, n_next = self.transitions.shape
        if n_states != n_next or self.rewards.shape != self.transitions.shape:
            raise DomainError(f"Inconsistent MDP tensor shapes {self.transitions.shape} / {self.rewards.shape}")
        if self.initial.shape != (n_states,) or self.terminal.shape != (n_states,):
            raise DomainError("initial and terminal must be vectors over the state set")
        if not np.isclose(self.initial.sum(), 1.0) or np.any(self.initial < 0):
            raise DomainError("initial distribution must be a probability vector")
        if np.any(self.initial[self.terminal] > 0):
            raise DomainError("initial distribution puts mass on terminal states")

        live = ~self.terminal
        row_sums = self.transitions[live].sum(axis=2)
        if not np.allclose(row_sums, 1.0):
            raise DomainError("transition rows of non-terminal states must sum to 1")
        if np.any(self.transitions[self.terminal] != 0):
            raise DomainError("terminal states must not have outgoing transitions")
        backward = np.tril(np.ones((n_states, n_states), dtype=bool))
        if np.any((self.transitions > 0) & backward[:, None, :]):
            raise DomainError("states must be numbered so every transition increases the index")

    @property
    def state_count(self) -> int:
        return self.transitions.shape[0]

    @property
    def action_count(self) -> int:
        return self.transitions.shape[1]

    def initial_distribution(self) -> np.ndarray:
        return self.initial

    def reset(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.state_count, p=self.initial))

    def step(self, state: int, action: int, rng: np.random.Generator) -> Tuple[int, float, bool]:
        if not 0 <= state < self.state_count:
            raise DomainError(f"State {state} out of range for {self.env_id}")
        if self.terminal[state]:
            raise DomainError(f"Cannot step from terminal state {state} of {self.env_id}")
        if not 0 <= action < self.action_count:
            raise DomainError(f"Action {action} out of range for {self.env_id}")

        next_state = int(rng.choice(self.state_count, p=self.transitions[state, action]))
        reward = float(self.rewards[state, action, next_state])
        return next_state, reward, bool(self.terminal[next_state])

    def _backup(self, values: np.ndarray, state: int) -> np.ndarray:
        p = self.transitions[state]
        return (p * self.rewards[state]).sum(axis=1) + p @ values

    def state_values(self, probs: np.ndarray) -> np.ndarray:
        """Expected return-to-go of every state under pi(a|s)"""
        values = np.zeros(self.state_count)
        for s in range(self.state_count - 1, -1, -1):
            if not self.terminal[s]:
                values[s] = probs[s] @ self._backup(values, s)
        return values

    def optimal_action_values(self) -> np.ndarray:
        values = np.zeros(self.state_count)
        q = np.zeros((self.state_count, self.action_count))
        for s in range(self.state_count - 1, -1, -1):
            if not self.terminal[s]:
                q[s] = self._backup(values, s)
                values[s] = q[s].max()
        return q

    def exact_return(self, probs: np.ndarray) -> float:
        return float(self.initial @ self.state_values(probs))

    def reachable_returns(self) -> Tuple[float, ...]:
        """Every episode return reachable with positive probability"""
        partial = [set() for _ in range(self.state_count)]
        for s in np.flatnonzero(self.initial > 0):
            partial[s].add(0.0)
        finals = set()
        for s in range(self.state_count):
            if self.terminal[s]:
                finals |= partial[s]
                continue
            for r in partial[s]:
                for a in range(self.action_count):
                    for nxt in np.flatnonzero(self.transitions[s, a] > 0):
                        partial[nxt].add(r + float(self.rewards[s, a, nxt]))
        return tuple(sorted(finals))
