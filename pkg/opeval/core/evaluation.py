import logging
from typing import List, Protocol, Tuple

import numpy as np

from opeval.models.episode import Episode, Transition
from opeval.models.errors import DomainError
from opeval.models.policy import Policy, sample_action

logger = logging.getLogger(__name__)

# Guard against policies that never reach a terminal state
MAX_ROLLOUT_STEPS = 10_000


class EpisodicEnv(Protocol):
    env_id: str

    @property
    def state_count(self) -> int: ...

    @property
    def action_count(self) -> int: ...

    def initial_distribution(self) -> np.ndarray: ...

    def state_values(self, probs: np.ndarray) -> np.ndarray: ...

    def reset(self, rng: np.random.Generator) -> int: ...

    def step(self, state: int, action: int, rng: np.random.Generator) -> Tuple[int, float, bool]: ...


def policy_probabilities(env: EpisodicEnv, policy: Policy) -> np.ndarray:
    if policy.state_count != env.state_count or policy.action_count != env.action_count:
        raise DomainError(
            f"Policy over {policy.state_count}x{policy.action_count} does not fit "
            f"{env.env_id} with {env.state_count}x{env.action_count}"
        )
    return policy.action_probabilities()


def exact_return(env: EpisodicEnv, policy: Policy, feasible_starts: bool = False) -> float:
    """Expected return by backward induction, no sampling.

    feasible_starts restricts the initial distribution to start states from
    which success is still possible (tree environments only).
    """
    probs = policy_probabilities(env, policy)
    values = env.state_values(probs)
    if feasible_starts:
        if not hasattr(env, "feasible_start_distribution"):
            raise DomainError(f"{env.env_id} does not define feasible start states")
        init = env.feasible_start_distribution()
    else:
        init = env.initial_distribution()
    return float(init @ values)


def rollout(env: EpisodicEnv, policy: Policy, rng: np.random.Generator, episode_id: str) -> Episode:
    """One episode from reset to terminal"""
    state = env.reset(rng)
    transitions: List[Transition] = []
    for t in range(1, MAX_ROLLOUT_STEPS + 1):
        action = sample_action(policy, state, rng)
        next_state, reward, terminal = env.step(state, action, rng)
        transitions.append(Transition(t=t, state=state, action=action, reward=reward))
        if terminal:
            return Episode(episode_id, tuple(transitions), reward)
        state = next_state
    raise DomainError(f"Episode {episode_id} did not terminate within {MAX_ROLLOUT_STEPS} steps")


def monte_carlo_return(
    env: EpisodicEnv, policy: Policy, n_episodes: int, rng: np.random.Generator
) -> float:
    """Mean episode return over n sampled rollouts"""
    if n_episodes < 1:
        raise DomainError(f"n_episodes must be at least 1, got {n_episodes}")
    total = 0.0
    for i in range(n_episodes):
        total += rollout(env, policy, rng, f"mc-{i}").total_return
    estimate = total / n_episodes
    logger.debug(f"Monte Carlo return of {policy.describe()} on {env.env_id}: {estimate:.6g} (n={n_episodes})")
    return estimate
