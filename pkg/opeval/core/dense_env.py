"""Dense-reward testbed and the accumulated-reward augmentation.

Augmenting a tabular MDP with the reward collected so far turns it into an
MDP whose only reward arrives on the final step, with the same expected
return for every policy over the base states.
"""
import logging
from collections import defaultdict
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from config.settings import EVAL_SETTINGS
from opeval.models.errors import DomainError
from opeval.models.qtable import QTable

from .tabular import TabularMDP

logger = logging.getLogger(__name__)

ADVANCE, STALL = 0, 1


class DenseChainEnv(TabularMDP):
    """Deterministic chain paying rewards[p] for advancing out of position p.

    States are (step k, position p). Stalling keeps the position and pays
    nothing. An episode ends at the end of the chain or after `horizon`
    steps, whichever comes first.
    """

    def __init__(self, rewards: Sequence[float] = (1.0, 1.0), horizon: Optional[int] = None):
        self.chain_rewards = tuple(float(r) for r in rewards)
        if not self.chain_rewards:
            raise DomainError("DenseChainEnv needs at least one chain reward")
        length = len(self.chain_rewards)
        self.horizon = length if horizon is None else int(horizon)
        if self.horizon < 1:
            raise DomainError(f"horizon must be at least 1, got {horizon}")

        labels = [
            (k, p)
            for k in range(self.horizon + 1)
            for p in range(min(k, length) + 1)
        ]
        index = {label: i for i, label in enumerate(labels)}
        n = len(labels)

        transitions = np.zeros((n, 2, n))
        rewards_sas = np.zeros((n, 2, n))
        terminal = np.array([k == self.horizon or p == length for k, p in labels])
        for i, (k, p) in enumerate(labels):
            if terminal[i]:
                continue
            advanced = index[(k + 1, p + 1)]
            stalled = index[(k + 1, p)]
            transitions[i, ADVANCE, advanced] = 1.0
            rewards_sas[i, ADVANCE, advanced] = self.chain_rewards[p]
            transitions[i, STALL, stalled] = 1.0

        initial = np.zeros(n)
        initial[index[(0, 0)]] = 1.0
        env_id = f"chain-{length}x{self.horizon}"
        super().__init__(transitions, rewards_sas, initial, terminal, env_id, labels)

    def __repr__(self) -> str:
        return f"DenseChainEnv(rewards={list(self.chain_rewards)}, horizon={self.horizon})"


class AugmentedEnv(TabularMDP):
    """Base MDP with the accumulated reward folded into the state"""

    def __init__(self, base: TabularMDP, states: Sequence[Tuple[int, float]], **tensors):
        self.base = base
        self.states = tuple(states)
        self.base_states = np.array([s for s, _ in self.states], dtype=np.int64)
        self.accumulated = np.array([r for _, r in self.states], dtype=np.float64)
        super().__init__(env_id=f"{base.env_id}-augmented", state_labels=self.states, **tensors)

    def lift_probs(self, probs: np.ndarray) -> np.ndarray:
        """A base-state policy, read off at the base component of each augmented state"""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (self.base.state_count, self.base.action_count):
            raise DomainError(
                f"Policy matrix {probs.shape} does not match base MDP "
                f"{(self.base.state_count, self.base.action_count)}"
            )
        return probs[self.base_states]

    def lift_q(self, q: QTable) -> QTable:
        """Q'(s, r, a) = r + Q(s, a) over every augmented state"""
        if q.state_count != self.base.state_count or q.action_count != self.base.action_count:
            raise DomainError(f"QTable {q.id} does not fit base MDP {self.base.env_id}")
        values = self.accumulated[:, None] + q.values[self.base_states]
        return QTable(values, f"{q.id}-lifted")


def q_lift(q: QTable, state: int, accumulated: float, action: int) -> float:
    return float(accumulated) + float(q.values[q.check_state(state), q.check_action(action)])


def augment(base: TabularMDP, max_states: Optional[int] = None) -> AugmentedEnv:
    """Expand (s, r) pairs forward from the initial support.

    Intermediate rewards become 0 and entering a terminal state pays the
    accumulated reward plus the final base reward. Raises DomainError when
    the reachable (s, r) set exceeds max_states.
    """
    cap = EVAL_SETTINGS["max_augmented_states"] if max_states is None else int(max_states)

    accumulated: Dict[int, set] = defaultdict(set)
    for s in np.flatnonzero(base.initial > 0):
        accumulated[int(s)].add(0.0)

    edges = []  # (s, r, a, s', base reward, probability)
    total = len(accumulated)
    for s in range(base.state_count):
        if s not in accumulated or base.terminal[s]:
            continue
        for r in sorted(accumulated[s]):
            for a in range(base.action_count):
                for nxt in np.flatnonzero(base.transitions[s, a] > 0):
                    reward = float(base.rewards[s, a, nxt])
                    before = len(accumulated[int(nxt)])
                    accumulated[int(nxt)].add(r + reward)
                    total += len(accumulated[int(nxt)]) - before
                    edges.append((s, r, a, int(nxt), reward, float(base.transitions[s, a, nxt])))
            if total > cap:
                raise DomainError(
                    f"Augmenting {base.env_id} exceeds {cap} (state, accumulated reward) pairs"
                )

    # base states are topologically ordered, so sorting by (s, r) keeps that order
    states = sorted((s, r) for s, values in accumulated.items() for r in values)
    index = {pair: i for i, pair in enumerate(states)}
    n = len(states)

    transitions = np.zeros((n, base.action_count, n))
    rewards = np.zeros((n, base.action_count, n))
    for s, r, a, nxt, reward, prob in edges:
        i, j = index[(s, r)], index[(nxt, r + reward)]
        transitions[i, a, j] += prob
        if base.terminal[nxt]:
            rewards[i, a, j] = r + reward

    initial = np.array([base.initial[s] if r == 0.0 else 0.0 for s, r in states])
    terminal = np.array([bool(base.terminal[s]) for s, _ in states])
    logger.info(f"Augmented {base.env_id}: {base.state_count} states -> {n} (state, reward) states")
    return AugmentedEnv(
        base, states, transitions=transitions, rewards=rewards, initial=initial, terminal=terminal
    )
