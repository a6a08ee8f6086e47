from typing import Optional

import numpy as np

from .enums import PolicyKind
from .errors import DomainError
from .qtable import QTable, argmax_action


class Policy:
    """Argmax, uniform-random or epsilon-greedy policy over a tabular action set"""

    def __init__(
        self,
        kind: PolicyKind,
        table: Optional[QTable] = None,
        epsilon: float = 0.0,
        state_count: Optional[int] = None,
        action_count: Optional[int] = None,
    ):
        self.kind = PolicyKind(kind)
        self.table = table
        self.epsilon = float(epsilon)

        if self.kind != PolicyKind.UNIFORM and table is None:
            raise DomainError(f"{self.kind.value} policy requires a QTable")
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"epsilon must lie in [0, 1], got {self.epsilon}")

        if table is not None:
            self.state_count = table.state_count
            self.action_count = table.action_count
        else:
            if state_count is None or action_count is None:
                raise DomainError("uniform policy requires state_count and action_count")
            self.state_count = int(state_count)
            self.action_count = int(action_count)

    @classmethod
    def argmax(cls, table: QTable) -> "Policy":
        return cls(PolicyKind.ARGMAX, table=table)

    @classmethod
    def uniform(cls, state_count: int, action_count: int) -> "Policy":
        return cls(PolicyKind.UNIFORM, state_count=state_count, action_count=action_count)

    @classmethod
    def epsilon_greedy(cls, table: QTable, epsilon: float) -> "Policy":
        return cls(PolicyKind.EPSILON_GREEDY, table=table, epsilon=epsilon)

    def check_state(self, state: int) -> int:
        if not 0 <= int(state) < self.state_count:
            raise DomainError(f"State {state} out of range for policy over {self.state_count} states")
        return int(state)

    def action_probabilities(self) -> np.ndarray:
        """pi(a|s) as a [state_count x action_count] matrix"""
        uniform = np.full((self.state_count, self.action_count), 1.0 / self.action_count)
        if self.kind == PolicyKind.UNIFORM:
            return uniform

        greedy = np.zeros((self.state_count, self.action_count))
        greedy[np.arange(self.state_count), self.table.greedy_actions()] = 1.0
        if self.kind == PolicyKind.ARGMAX:
            return greedy
        return self.epsilon * uniform + (1.0 - self.epsilon) * greedy

    def describe(self) -> str:
        if self.kind == PolicyKind.UNIFORM:
            return "uniform"
        if self.kind == PolicyKind.ARGMAX:
            return f"argmax({self.table.id})"
        return f"epsilon_greedy({self.table.id}, {self.epsilon:g})"

    def __repr__(self) -> str:
        return f"Policy({self.describe()})"


def sample_action(policy: Policy, state: int, rng: np.random.Generator) -> int:
    """Draw an action; consumes the rng only for the stochastic kinds"""
    s = policy.check_state(state)

    if policy.kind == PolicyKind.ARGMAX:
        return argmax_action(policy.table, s)
    if policy.kind == PolicyKind.UNIFORM:
        return int(rng.integers(policy.action_count))

    if rng.random() < policy.epsilon:
        return int(rng.integers(policy.action_count))
    return argmax_action(policy.table, s)
