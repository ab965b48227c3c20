"""Finite POMDPs, Bayes filtering and observation-history trees."""

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import entropy

from .config import PROBABILITY_TOLERANCE

# An observation history o_1..o_t as dense observation indices
History = Tuple[int, ...]


def _check_distribution(array: np.ndarray, what: str) -> None:
    """Validate that the last axis of an array holds probability vectors."""
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{what} contains non-finite entries")
    if np.any(array < 0):
        raise ValueError(f"{what} has negative entries (min {array.min():.3g})")
    sums = array.sum(axis=-1)
    worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
    if worst > PROBABILITY_TOLERANCE:
        raise ValueError(f"{what} rows must sum to 1, worst deviation {worst:.3g}")


def check_belief(weights, state_count: Optional[int] = None) -> np.ndarray:
    """Return a belief as a float array after validating it."""
    belief = np.asarray(weights, dtype=float)
    if belief.ndim != 1 or belief.size == 0:
        raise ValueError(f"belief must be a nonempty vector, got shape {belief.shape}")
    if state_count is not None and belief.size != state_count:
        raise ValueError(f"belief has {belief.size} entries, model has {state_count} states")
    _check_distribution(belief, "belief")
    return belief


@dataclass(frozen=True, eq=False)
class Pomdp:
    """
    A finite POMDP with dense indices.

    Kernels are stored action-major: transition[a, s, s'], observation[a, s', o]
    (the observation emitted on arrival in s' after action a) and reward[s, a].
    Each step takes an action, moves the state, then emits an observation.
    """
    name: str
    states: Tuple[str, ...]
    actions: Tuple[str, ...]
    observations: Tuple[str, ...]
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    initial_belief: np.ndarray
    ground_metric_id: str = "discrete"

    def __post_init__(self):
        n_s, n_a, n_o = len(self.states), len(self.actions), len(self.observations)
        if min(n_s, n_a, n_o) < 1:
            raise ValueError(f"{self.name}: |S|, |A|, |O| must be >= 1, got {n_s}, {n_a}, {n_o}")

        arrays = {
            "transition": (self.transition, (n_a, n_s, n_s)),
            "observation": (self.observation, (n_a, n_s, n_o)),
            "reward": (self.reward, (n_s, n_a)),
            "initial_belief": (self.initial_belief, (n_s,)),
        }
        for attr, (value, shape) in arrays.items():
            array = np.array(value, dtype=float)
            if array.shape != shape:
                raise ValueError(f"{self.name}: {attr} has shape {array.shape}, expected {shape}")
            array.setflags(write=False)
            object.__setattr__(self, attr, array)

        _check_distribution(self.transition, f"{self.name}: transition")
        _check_distribution(self.observation, f"{self.name}: observation kernel")
        _check_distribution(self.initial_belief, f"{self.name}: initial belief")
        if not np.all(np.isfinite(self.reward)):
            raise ValueError(f"{self.name}: reward contains non-finite entries")

    @property
    def state_count(self) -> int:
        return len(self.states)

    @property
    def action_count(self) -> int:
        return len(self.actions)

    @property
    def observation_count(self) -> int:
        return len(self.observations)

    @property
    def reward_range(self) -> float:
        return float(self.reward.max() - self.reward.min())

    def with_initial_belief(self, weights) -> "Pomdp":
        """Copy of the model with a different initial belief."""
        belief = check_belief(weights, self.state_count)
        return Pomdp(
            name=self.name,
            states=self.states,
            actions=self.actions,
            observations=self.observations,
            transition=self.transition,
            observation=self.observation,
            reward=self.reward,
            initial_belief=belief,
            ground_metric_id=self.ground_metric_id,
        )

    def format_history(self, history: History) -> str:
        """Render a history with observation names; the empty history is '-'."""
        if not history:
            return "-"
        names = [self.observations[o] for o in history]
        if all(len(n) == 1 for n in names):
            return "".join(names)
        return ".".join(names)


@dataclass(frozen=True, eq=False)
class BeliefUpdate:
    """Result of one Bayes filter step; belief is None when the observation has zero mass."""
    belief: Optional[np.ndarray]
    probability: float
    zero_mass: bool = field(default=False)


def predict(pomdp: Pomdp, belief: np.ndarray, action: int) -> np.ndarray:
    """Predictive observation distribution after taking `action` from `belief`."""
    return (belief @ pomdp.transition[action]) @ pomdp.observation[action]


def belief_update(pomdp: Pomdp, belief, action: int, observation: int) -> BeliefUpdate:
    """
    Exact Bayes filter step.

    Args:
        pomdp: The model
        belief: Current belief over states
        action: Action index taken
        observation: Observation index received

    Returns:
        BeliefUpdate with the normalized posterior and the pre-normalization mass,
        or a zero-mass result without a belief
    """
    belief = check_belief(belief, pomdp.state_count)
    if not 0 <= action < pomdp.action_count:
        raise ValueError(f"action index {action} out of range for {pomdp.name}")
    if not 0 <= observation < pomdp.observation_count:
        raise ValueError(f"observation index {observation} out of range for {pomdp.name}")

    joint = (belief @ pomdp.transition[action]) * pomdp.observation[action][:, observation]
    mass = float(joint.sum())
    if mass <= 0.0:
        return BeliefUpdate(belief=None, probability=0.0, zero_mass=True)
    return BeliefUpdate(belief=joint / mass, probability=mass)


def history_tree(pomdp: Pomdp, horizon: int) -> List[List[History]]:
    """All observation histories of depth 0..horizon, each layer in lexicographic order."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    symbols = range(pomdp.observation_count)
    return [list(itertools.product(symbols, repeat=depth)) for depth in range(horizon + 1)]


def history_count(observation_count: int, horizon: int) -> int:
    """Total number of histories of depth 0..horizon."""
    return sum(observation_count ** depth for depth in range(horizon + 1))


def effective_dimension(belief) -> float:
    """exp of the Shannon entropy (natural log) of a belief."""
    belief = check_belief(belief)
    return float(np.exp(entropy(belief)))
