"""Full binary-tree MDP with binary terminal reward and optional action slip.

Nodes use heap order: the root is 0 and the children of node i are 2i+1
(left) and 2i+2 (right). A tree of depth k has 2^k - 1 nodes; the leaves
are the last 2^(k-1) of them. On slip the environment replaces the chosen
action by one drawn uniformly from both actions, so the chosen action still
executes with probability 1 - slip/2.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Tuple

import numpy as np

from opeval.models.enums import Feasibility
from opeval.models.errors import DomainError
from opeval.models.policy import Policy
from opeval.models.qtable import QTable

from .evaluation import policy_probabilities
from .tabular import TabularMDP

logger = logging.getLogger(__name__)

LEFT, RIGHT = 0, 1


class TreeEnv:
    action_count = 2

    def __init__(
        self,
        depth: int,
        success_leaves: Iterable[int],
        slip: float = 0.0,
        env_id: Optional[str] = None,
    ):
        self.depth = int(depth)
        if self.depth < 2:
            raise DomainError(f"Tree depth must be at least 2, got {depth}")
        self.slip = float(slip)
        if not 0.0 <= self.slip <= 1.0:
            raise DomainError(f"slip must lie in [0, 1], got {slip}")

        self.success_leaves = frozenset(int(s) for s in success_leaves)
        non_leaves = [s for s in self.success_leaves if not self.is_leaf(s)]
        if non_leaves:
            raise DomainError(f"success_leaves {sorted(non_leaves)} are not leaves of a depth-{self.depth} tree")
        if not self.success_leaves:
            logger.warning("TreeEnv built without success leaves; every return is 0")

        self.env_id = env_id or f"tree-d{self.depth}-s{len(self.success_leaves)}-slip{self.slip:g}"

        self.leaf_rewards = np.zeros(self.state_count)
        self.leaf_rewards[list(self.success_leaves)] = 1.0
        self.leaf_rewards.flags.writeable = False

        # slip_matrix[a, a'] = P(executed a' | chosen a)
        self.slip_matrix = (1.0 - self.slip) * np.eye(2) + self.slip / 2.0

    @classmethod
    def one_success(cls, depth: int, leaf: Optional[int] = None, slip: float = 0.0) -> "TreeEnv":
        """Only one leaf succeeds (the leftmost unless given)"""
        first = 2 ** (depth - 1) - 1
        return cls(depth, [first if leaf is None else leaf], slip)

    @classmethod
    def one_failure(cls, depth: int, leaf: Optional[int] = None, slip: float = 0.0) -> "TreeEnv":
        """Every leaf but one succeeds (the leftmost fails unless given)"""
        first = 2 ** (depth - 1) - 1
        failing = first if leaf is None else leaf
        leaves = range(first, 2**depth - 1)
        return cls(depth, [s for s in leaves if s != failing], slip)

    # -- structure -------------------------------------------------------

    @property
    def state_count(self) -> int:
        return 2**self.depth - 1

    @property
    def first_leaf(self) -> int:
        return 2 ** (self.depth - 1) - 1

    @property
    def internal_states(self) -> np.ndarray:
        return np.arange(self.first_leaf)

    @property
    def max_steps(self) -> int:
        return self.depth - 1

    def is_leaf(self, state: int) -> bool:
        return self.first_leaf <= state < self.state_count

    @staticmethod
    def child(state: int, action: int) -> int:
        return 2 * state + 1 + action

    @staticmethod
    def parent(state: int) -> int:
        return (state - 1) // 2

    @staticmethod
    def level(state: int) -> int:
        """1 for the root, depth for the leaves"""
        return int(state + 1).bit_length()

    def _level_nodes(self, level: int) -> np.ndarray:
        return np.arange(2 ** (level - 1) - 1, 2**level - 1)

    # -- dynamics --------------------------------------------------------

    def initial_distribution(self) -> np.ndarray:
        """Uniform over all non-leaf nodes"""
        init = np.zeros(self.state_count)
        init[: self.first_leaf] = 1.0 / self.first_leaf
        return init

    def reset(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.first_leaf))

    def step(self, state: int, action: int, rng: np.random.Generator) -> Tuple[int, float, bool]:
        if not 0 <= state < self.state_count:
            raise DomainError(f"State {state} out of range for {self.env_id}")
        if self.is_leaf(state):
            raise DomainError(f"Cannot step from leaf {state} of {self.env_id}")
        if action not in (LEFT, RIGHT):
            raise DomainError(f"Action {action} is not left (0) or right (1)")

        if self.slip > 0.0 and rng.random() < self.slip:
            action = int(rng.integers(2))
        next_state = self.child(state, action)
        terminal = self.is_leaf(next_state)
        return next_state, float(self.leaf_rewards[next_state]), terminal

    def _continuation(self, values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        """Q(s, a) for nodes given the value of every node one level down"""
        children = np.stack([2 * nodes + 1, 2 * nodes + 2], axis=1)
        after = self.leaf_rewards[children] + values[children]
        return after @ self.slip_matrix.T

    def state_values(self, probs: np.ndarray) -> np.ndarray:
        """Expected return-to-go of each node under pi(a|s); leaves are worth 0"""
        values = np.zeros(self.state_count)
        for level in range(self.depth - 1, 0, -1):
            nodes = self._level_nodes(level)
            q = self._continuation(values, nodes)
            values[nodes] = (probs[nodes] * q).sum(axis=1)
        return values

    def optimal_action_values(self) -> np.ndarray:
        values = np.zeros(self.state_count)
        q_star = np.zeros((self.state_count, 2))
        for level in range(self.depth - 1, 0, -1):
            nodes = self._level_nodes(level)
            q_star[nodes] = self._continuation(values, nodes)
            values[nodes] = q_star[nodes].max(axis=1)
        return q_star

    def optimal_q(self) -> QTable:
        """Bellman-exact success probabilities at gamma = 1 (leaf rows are 0)"""
        return QTable(self.optimal_action_values(), f"{self.env_id}-optimal")

    def feasible_start_distribution(self) -> np.ndarray:
        """Uniform over the non-leaf nodes from which success is still possible"""
        feasible = feasibility_labels(self).states.copy()
        feasible[self.first_leaf :] = False
        if not feasible.any():
            raise DomainError(f"{self.env_id} has no feasible start state")
        return feasible / feasible.sum()

    def to_tabular(self) -> TabularMDP:
        n = self.state_count
        transitions = np.zeros((n, 2, n))
        rewards = np.zeros((n, 2, n))
        for s in self.internal_states:
            for a in (LEFT, RIGHT):
                for executed in (LEFT, RIGHT):
                    nxt = self.child(s, executed)
                    transitions[s, a, nxt] += self.slip_matrix[a, executed]
                    rewards[s, a, nxt] = self.leaf_rewards[nxt]
        terminal = np.zeros(n, dtype=bool)
        terminal[self.first_leaf :] = True
        return TabularMDP(transitions, rewards, self.initial_distribution(), terminal, self.env_id)

    def __repr__(self) -> str:
        return (
            f"TreeEnv(depth={self.depth}, success_leaves={sorted(self.success_leaves)}, "
            f"slip={self.slip:g})"
        )


@dataclass(frozen=True)
class FeasibilityMap:
    pairs: np.ndarray  # [state, action] -> feasible
    states: np.ndarray  # [state] -> feasible

    def label(self, state: int, action: int) -> Feasibility:
        return Feasibility.FEASIBLE if self.pairs[state, action] else Feasibility.CATASTROPHIC

    def state_label(self, state: int) -> Feasibility:
        return Feasibility.FEASIBLE if self.states[state] else Feasibility.CATASTROPHIC


class MistakeBound(NamedTuple):
    epsilon: float
    c: float
    bound: float
    horizon: int
    per_step: Tuple[float, ...]


def feasibility_labels(env: TreeEnv) -> FeasibilityMap:
    """(s, a) is feasible iff an optimal continuation still succeeds with positive probability"""
    q_star = env.optimal_action_values()
    pairs = q_star > 0.0
    pairs[env.first_leaf :] = False
    states = pairs.any(axis=1)
    states[env.first_leaf :] = env.leaf_rewards[env.first_leaf :] > 0.0
    return FeasibilityMap(pairs=pairs, states=states)


def first_mistake_error(env: TreeEnv, policy: Policy, horizon: Optional[int] = None) -> MistakeBound:
    """Per-step first-mistake rates and the return lower bound 1 - T(eps + c).

    The conditioned state distribution starts uniform over feasible non-leaf
    nodes and is pushed forward only along feasible actions into feasible
    children, renormalised at every step.
    """
    probs = policy_probabilities(env, policy)
    fmap = feasibility_labels(env)
    horizon = env.max_steps if horizon is None else int(horizon)
    first_leaf = env.first_leaf

    internal = np.arange(first_leaf)
    catastrophic_prob = (probs[internal] * ~fmap.pairs[internal]).sum(axis=1)

    mass = np.zeros(env.state_count)
    mass[internal] = fmap.states[internal].astype(float)

    per_step = []
    for _ in range(horizon):
        alive = mass[internal]
        total = alive.sum()
        per_step.append(float(alive @ catastrophic_prob / total) if total > 0 else 0.0)

        flow = alive[:, None] * probs[internal] * fmap.pairs[internal]
        to_children = flow @ env.slip_matrix
        nxt = np.zeros(env.state_count)
        nxt[2 * internal + 1] = to_children[:, LEFT]
        nxt[2 * internal + 2] = to_children[:, RIGHT]
        nxt[first_leaf:] = 0.0
        nxt[~fmap.states] = 0.0
        mass = nxt

    children = np.stack([2 * internal + 1, 2 * internal + 2], axis=1)
    bad_child = ~fmap.states[children]
    slip_to_bad = bad_child.astype(float) @ env.slip_matrix.T
    feasible_pairs = fmap.pairs[internal]
    c = float(slip_to_bad[feasible_pairs].max()) if feasible_pairs.any() else 0.0

    epsilon = float(np.mean(per_step)) if per_step else 0.0
    bound = 1.0 - horizon * (epsilon + c)
    logger.debug(f"First-mistake error on {env.env_id}: eps={epsilon:.6g}, c={c:.6g}, bound={bound:.6g}")
    return MistakeBound(epsilon=epsilon, c=c, bound=bound, horizon=horizon, per_step=tuple(per_step))
