"""Objectives, exact policy evaluation, policy search, value-bound checks and finite-horizon PBVI."""

import logging
import time
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .config import DISTANCE_TOLERANCE
from .errors import VerificationError
from .model import Pomdp, belief_update, effective_dimension, predict
from .probes import Controller, ProbeFamily, check_compatible, describe, initial_joint, propagate
from .pseudometric import model_distance
from .quotient import Partition, QuotientPomdp, build_quotient, eps_partition

logger = logging.getLogger("bounded-quotient.planning")

PRODUCTIVE_PREFIX = "open"
ACTION_BONUS = 0.5
PBVI_POINTS = 50
PBVI_SEED = 42


@dataclass(frozen=True)
class Objective:
    """
    A per-step objective.

    "latent" uses the model reward R(s, a); "observation" scores the next
    observation with g; "action-observation" adds a per-action bonus to g.
    """
    name: str
    kind: Literal["latent", "observation", "action-observation"]
    observation_score: tuple = ()
    action_bonus: tuple = ()
    lipschitz: float = 1.0

    @property
    def agent_accessible(self) -> bool:
        return self.kind != "latent"

    def score_matrix(self, pomdp: Pomdp) -> np.ndarray:
        """Per-step score [a, o] for agent-accessible objectives."""
        g = np.asarray(self.observation_score, dtype=float)
        bonus = np.asarray(self.action_bonus, dtype=float) if self.action_bonus else np.zeros(pomdp.action_count)
        if g.shape != (pomdp.observation_count,) or bonus.shape != (pomdp.action_count,):
            raise ValueError(f"objective {self.name} does not fit {pomdp.name}")
        return bonus[:, None] + g[None, :]


def latent_objective(pomdp: Pomdp, lipschitz: Optional[float] = None) -> Objective:
    """Model reward; L_R defaults to the reward range."""
    return Objective("latent", "latent", lipschitz=pomdp.reward_range if lipschitz is None else lipschitz)


def observation_objective(pomdp: Pomdp) -> Objective:
    """g = 1 on the first observation symbol, 0 elsewhere."""
    g = np.zeros(pomdp.observation_count)
    g[0] = 1.0
    return Objective("observation-score", "observation", tuple(g), lipschitz=1.0)


def action_observation_objective(pomdp: Pomdp, productive: Optional[Sequence[int]] = None,
                                 bonus: float = ACTION_BONUS) -> Objective:
    """Observation score plus `bonus` per productive action (names starting with 'open' by default)."""
    if productive is None:
        productive = [a for a, name in enumerate(pomdp.actions) if name.startswith(PRODUCTIVE_PREFIX)]
    extra = np.zeros(pomdp.action_count)
    extra[list(productive)] = bonus
    g = np.zeros(pomdp.observation_count)
    g[0] = 1.0
    return Objective("action-observation", "action-observation", tuple(g), tuple(extra), lipschitz=1.0)


def constant_objective(pomdp: Pomdp, value: float = 0.0) -> Objective:
    return Objective(f"constant-{value:g}", "observation", tuple([value] * pomdp.observation_count), lipschitz=0.0)


def _step_score(pomdp: Pomdp, fsc: Controller, weight: np.ndarray, stage: int, objective: Objective,
                scores: Optional[np.ndarray]) -> float:
    policy = fsc.action_matrix(stage)
    if objective.kind == "latent":
        return float(np.sum(weight * (policy @ pomdp.reward.T)))
    total = 0.0
    for a in range(pomdp.action_count):
        state_weight = (weight * policy[:, a][:, None]).sum(axis=0)
        if state_weight.any():
            total += float((state_weight @ pomdp.transition[a] @ pomdp.observation[a]) @ scores[a])
    return total


def policy_value(model, fsc: Controller, objective: Objective, horizon: int) -> float:
    """
    Exact expected objective over T steps.

    Args:
        model: A Pomdp or a QuotientPomdp
        fsc: Controller over the model's alphabets
        objective: Objective to evaluate
        horizon: Number of steps T

    Returns:
        Expected sum of per-step scores
    """
    if isinstance(model, QuotientPomdp):
        return _quotient_value(model, fsc, objective, horizon)
    check_compatible(model, fsc, horizon)
    scores = None if objective.kind == "latent" else objective.score_matrix(model)
    weight = initial_joint(model, fsc)
    value = 0.0
    for stage in range(horizon):
        value += _step_score(model, fsc, weight, stage, objective, scores)
        weight = propagate(model, fsc, weight, stage).sum(axis=0)
    return value


def _quotient_value(quotient: QuotientPomdp, fsc: Controller, objective: Objective, horizon: int) -> float:
    if horizon > quotient.horizon:
        raise ValueError(f"horizon {horizon} exceeds quotient horizon {quotient.horizon}")
    kernel = quotient.closed_loop_kernel(fsc)
    scores = None if objective.kind == "latent" else objective.score_matrix(quotient.pomdp)
    mass = np.array([1.0])
    value = 0.0
    for stage in range(horizon):
        transitions = kernel.transitions[stage]
        if objective.kind == "latent":
            value += float(mass @ kernel.rewards[stage])
        else:
            value += float(np.einsum("c,cao,ao->", mass, transitions.sum(axis=-1), scores))
        mass = np.einsum("c,caoe->e", mass, transitions)
    return value


@dataclass(frozen=True)
class PlanResult:
    """Winner of an exhaustive search and its value on the original model."""
    policy_index: int
    policy: str
    value: float
    original_value: float
    optimal_value: float
    regret: float
    search_time: float
    evaluation_time: float


def _argmax(values: np.ndarray) -> int:
    """Lowest index within 1e-12 of the maximum."""
    return int(np.flatnonzero(values >= values.max() - 1e-12)[0])


def exhaustive_search(model, family: ProbeFamily, objective: Objective, horizon: int) -> PlanResult:
    """
    Best policy of a finite family, ties to the lowest index.

    When the model is a quotient the winner is re-evaluated on the original
    model and compared with the original optimum.
    """
    start = time.perf_counter()
    values = np.array([policy_value(model, fsc, objective, horizon) for fsc in family])
    best = _argmax(values)
    search_time = time.perf_counter() - start

    original = model.pomdp if isinstance(model, QuotientPomdp) else model
    start = time.perf_counter()
    if original is model:
        original_values = values
    else:
        original_values = np.array([policy_value(original, fsc, objective, horizon) for fsc in family])
    evaluation_time = time.perf_counter() - start

    optimal = float(original_values.max())
    regret = optimal - float(original_values[best])
    if regret < -1e-9:
        raise VerificationError(f"negative regret {regret:.3g}")
    return PlanResult(
        policy_index=best,
        policy=describe(family[best], original),
        value=float(values[best]),
        original_value=float(original_values[best]),
        optimal_value=optimal,
        regret=max(regret, 0.0),
        search_time=search_time,
        evaluation_time=evaluation_time,
    )


def check_exact_sufficiency(pomdp: Pomdp, quotient: QuotientPomdp, family: ProbeFamily,
                            objective: Objective, horizon: Optional[int] = None) -> float:
    """
    Max over the family of |E_M[G] − E_Q[G]| for an agent-accessible objective.

    Raises:
        ValueError: the objective uses latent rewards
        VerificationError: the deviation exceeds 1e-9
    """
    if not objective.agent_accessible:
        raise ValueError(f"objective {objective.name} is not measurable from observations and actions")
    horizon = quotient.horizon if horizon is None else horizon
    deviation = max(abs(policy_value(pomdp, fsc, objective, horizon) - policy_value(quotient, fsc, objective, horizon))
                    for fsc in family)
    if deviation > DISTANCE_TOLERANCE:
        logger.error(f"[{pomdp.name}] exact sufficiency violated for {objective.name}: {deviation:.3g}")
        raise VerificationError(f"{objective.name} differs between model and quotient by {deviation:.3g}")
    return float(deviation)


@dataclass(frozen=True)
class ValueBoundReport:
    epsilon: float
    distance: float
    empirical_gap: float
    bound: float
    canonical_bound: float
    effective_bound: float
    regret: float
    regret_bound: float
    holds: bool


def check_value_bound(pomdp: Pomdp, quotient: QuotientPomdp, family: ProbeFamily, objective: Objective,
                      epsilon: float, horizon: Optional[int] = None) -> ValueBoundReport:
    """
    Compare the largest value gap over the family with L_R·T·ε.

    Also reports the canonical trajectory bound L_R·T·ε(1 + 2T|S||O|), its
    effective-dimension variant, and the regret of the quotient-selected policy
    against 2·L_R·T·ε. The bounds are asserted when the measured distance
    between model and quotient is within ε.

    Raises:
        VerificationError: a bound fails while its premise holds
    """
    horizon = quotient.horizon if horizon is None else horizon
    lipschitz = objective.lipschitz
    distance = model_distance(pomdp, quotient, family, horizon)
    gap = max(abs(policy_value(pomdp, fsc, objective, horizon) - policy_value(quotient, fsc, objective, horizon))
              for fsc in family)
    bound = lipschitz * horizon * epsilon
    n_o = pomdp.observation_count
    canonical = bound * (1 + 2 * horizon * pomdp.state_count * n_o)
    d_eff = float(np.mean([effective_dimension(b) for layer in quotient.canonical_beliefs for b in layer]))
    effective = bound * (1 + 2 * horizon * d_eff * n_o)
    regret = exhaustive_search(quotient, family, objective, horizon).regret
    regret_bound = 2 * bound

    holds = gap <= bound + DISTANCE_TOLERANCE and regret <= regret_bound + DISTANCE_TOLERANCE
    if distance <= epsilon + DISTANCE_TOLERANCE and not holds:
        logger.error(f"[{pomdp.name}] value bound violated at eps={epsilon}: gap {gap:.4f}, regret {regret:.4f}")
        raise VerificationError(f"value bound fails at eps={epsilon}: gap {gap:.6g} vs {bound:.6g}")
    if distance > epsilon + DISTANCE_TOLERANCE:
        logger.warning(f"[{pomdp.name}] quotient distance {distance:.4f} exceeds eps={epsilon}; bound not asserted")
    return ValueBoundReport(epsilon, distance, gap, bound, canonical, effective, regret, regret_bound, holds)


def observation_reward_model(pomdp: Pomdp, objective: Objective) -> Pomdp:
    """Copy of the model whose reward is the expected per-step objective score."""
    if not objective.agent_accessible:
        return pomdp
    scores = objective.score_matrix(pomdp)
    # R'[s, a] = Σ_s' P[a][s, s'] Σ_o Z[a][s', o] score[a, o]
    reward = np.einsum("ast,ato,ao->sa", pomdp.transition, pomdp.observation, scores)
    return Pomdp(
        name=f"{pomdp.name}+{objective.name}",
        states=pomdp.states,
        actions=pomdp.actions,
        observations=pomdp.observations,
        transition=pomdp.transition,
        observation=pomdp.observation,
        reward=reward,
        initial_belief=pomdp.initial_belief,
        ground_metric_id=pomdp.ground_metric_id,
    )


def sample_belief_points(pomdp: Pomdp, horizon: int, count: int, seed: int) -> np.ndarray:
    """b0 plus beliefs visited by random-action forward simulation."""
    rng = np.random.default_rng(seed)
    points = [pomdp.initial_belief]
    while len(points) < count:
        belief = pomdp.initial_belief
        for _ in range(horizon):
            action = int(rng.integers(pomdp.action_count))
            observation = int(rng.choice(pomdp.observation_count, p=predict(pomdp, belief, action)))
            update = belief_update(pomdp, belief, action, observation)
            if update.zero_mass:
                break
            belief = update.belief
            points.append(belief)
            if len(points) >= count:
                break
    return np.array(points)


@dataclass(frozen=True)
class PbviResult:
    value: float
    runtime: float
    points: int


def pbvi(pomdp: Pomdp, horizon: int, belief_points: int = PBVI_POINTS, seed: int = PBVI_SEED) -> PbviResult:
    """
    Finite-horizon point-based value iteration without discounting.

    Every stage backs up one α-vector per belief point; the stage sets are
    deduplicated. Returns the value of the stage-0 set at b0.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    start = time.perf_counter()
    points = sample_belief_points(pomdp, horizon, belief_points, seed)
    n_a, n_o = pomdp.action_count, pomdp.observation_count
    alphas = np.zeros((1, pomdp.state_count))

    for _ in range(horizon):
        # projected[a, o] : [s, k] = Σ_s' P[a][s, s'] Z[a][s', o] α_k(s')
        projected = np.einsum("ast,ato,kt->aosk", pomdp.transition, pomdp.observation, alphas)
        candidates = np.empty((points.shape[0], n_a, pomdp.state_count))
        for a in range(n_a):
            vectors = np.tile(pomdp.reward[:, a], (points.shape[0], 1))
            for o in range(n_o):
                best = np.argmax(points @ projected[a, o], axis=1)
                vectors += projected[a, o][:, best].T
            candidates[:, a] = vectors
        chosen = np.argmax(np.einsum("ps,pas->pa", points, candidates), axis=1)
        alphas = np.unique(candidates[np.arange(points.shape[0]), chosen], axis=0)

    value = float(np.max(alphas @ pomdp.initial_belief))
    return PbviResult(value, time.perf_counter() - start, int(points.shape[0]))


def compare_pbvi(pomdp: Pomdp, cache, epsilon: float, objective: Optional[Objective] = None,
                 belief_points: int = PBVI_POINTS, seed: int = PBVI_SEED) -> dict:
    """PBVI on the model and on its ε-quotient: values, runtimes, sizes, gap and speedup."""
    planned = observation_reward_model(pomdp, objective) if objective else pomdp
    horizon = cache.horizon
    original = pbvi(planned, horizon, belief_points, seed)

    start = time.perf_counter()
    partition: Partition = eps_partition(cache, epsilon)
    quotient = build_quotient(planned, partition)
    reduced = quotient.to_pomdp()
    build_time = time.perf_counter() - start
    approximate = pbvi(reduced, horizon, belief_points, seed)

    return {
        "benchmark": pomdp.name,
        "epsilon": epsilon,
        "horizon": horizon,
        "states": pomdp.state_count,
        "classes": partition.class_count,
        "quotient_states": reduced.state_count,
        "original_value": original.value,
        "quotient_value": approximate.value,
        "gap": abs(original.value - approximate.value),
        "original_time": original.runtime,
        "quotient_time": build_time + approximate.runtime,
        "speedup": original.runtime / max(build_time + approximate.runtime, 1e-12),
    }
