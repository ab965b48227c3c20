"""Greedy probe-subset selection and spectral diagnostics of the distance cache."""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import Pomdp
from .probes import describe
from .pseudometric import DistanceCache

logger = logging.getLogger("bounded-quotient.selection")


@dataclass(frozen=True)
class SubsetSelection:
    """Greedy chain of probe indices with coverage, gains and δ_S after each step."""
    indices: Tuple[int, ...]
    coverage: Tuple[float, ...]
    gains: Tuple[float, ...]
    deltas: Tuple[float, ...]

    @property
    def delta_s(self) -> float:
        return self.deltas[-1]

    def rows(self, cache: DistanceCache) -> List[dict]:
        return [
            {
                "step": step + 1,
                "probe_id": p,
                "probe": describe(cache.family[p], cache.pomdp),
                "marginal_gain": gain,
                "coverage": value,
                "delta_s": delta,
            }
            for step, (p, gain, value, delta) in enumerate(zip(self.indices, self.gains, self.coverage, self.deltas))
        ]


def coverage(cache: DistanceCache, subset: Sequence[int]) -> float:
    """f(S): sum over pairs of the subset envelope; 0 for the empty set."""
    subset = list(subset)
    if not subset:
        return 0.0
    return float(cache.pair_matrix(subset).max(axis=1).sum())


def greedy_select(cache: DistanceCache, k: int) -> SubsetSelection:
    """
    Greedy maximization of the coverage objective.

    Each step adds the probe with the largest marginal coverage gain, ties
    going to the lowest probe index.

    Args:
        cache: Distance cache over the full family
        k: Subset size, 1 <= k <= family size

    Returns:
        SubsetSelection with the running coverage and δ_S
    """
    if not 1 <= k <= cache.probe_count:
        raise ValueError(f"subset size must be in 1..{cache.probe_count}, got {k}")
    matrix = cache.pair_matrix()
    full = matrix.max(axis=1) if matrix.size else np.zeros(matrix.shape[0])
    current = np.zeros(matrix.shape[0])
    chosen: List[int] = []
    values, gains, deltas = [], [], []

    for _ in range(k):
        marginal = np.maximum(matrix, current[:, None]).sum(axis=0) - current.sum()
        marginal[chosen] = -np.inf
        p = int(np.argmax(marginal))
        chosen.append(p)
        current = np.maximum(current, matrix[:, p])
        gains.append(float(marginal[p]))
        values.append(float(current.sum()))
        deltas.append(float(max(0.0, (full - current).max())) if full.size else 0.0)

    logger.info(f"[{cache.benchmark_id or cache.pomdp.name}] greedy k={k}: delta_S={deltas[-1]:.4f}")
    return SubsetSelection(tuple(chosen), tuple(values), tuple(gains), tuple(deltas))


def effective_rank(cache: DistanceCache, variance_fraction: float = 0.99, depth: Optional[int] = None) -> int:
    """
    Smallest r whose leading singular values carry `variance_fraction` of the squared spectrum.

    Args:
        cache: Distance cache
        variance_fraction: Target fraction in (0, 1]
        depth: Restrict the pair-by-probe matrix to one depth

    Raises:
        ValueError: empty matrix or fraction outside (0, 1]
    """
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError(f"variance fraction must be in (0, 1], got {variance_fraction}")
    matrix = cache.pair_matrix() if depth is None else cache.distances[depth]
    if matrix.size == 0:
        raise ValueError("effective rank of an empty matrix")
    energy = np.linalg.svd(matrix, compute_uv=False) ** 2
    total = energy.sum()
    if total == 0.0:
        return 0
    cumulative = np.cumsum(energy) / total
    return int(np.searchsorted(cumulative, variance_fraction - 1e-12) + 1)


def _sequence_probability(pomdp: Pomdp, belief: np.ndarray, actions, observations) -> float:
    weight = belief
    for a, o in zip(actions, observations):
        weight = (weight @ pomdp.transition[a]) * pomdp.observation[a][:, o]
    return float(weight.sum())


def hankel_matrix(pomdp: Pomdp, horizon: int) -> np.ndarray:
    """
    Open-loop Hankel matrix of conditional test probabilities.

    Rows are (action prefix, observation prefix) pairs of length 0..T-1 with
    positive probability; columns are tests (action sequence, observation
    sequence) of length 1..T-1.
    """
    if horizon < 2:
        raise ValueError(f"Hankel matrix needs T >= 2, got {horizon}")
    n_a, n_o = pomdp.action_count, pomdp.observation_count
    tests = [
        (actions, observations)
        for length in range(1, horizon)
        for actions in itertools.product(range(n_a), repeat=length)
        for observations in itertools.product(range(n_o), repeat=length)
    ]
    rows = []
    for length in range(horizon):
        for actions in itertools.product(range(n_a), repeat=length):
            for observations in itertools.product(range(n_o), repeat=length):
                weight = pomdp.initial_belief
                for a, o in zip(actions, observations):
                    weight = (weight @ pomdp.transition[a]) * pomdp.observation[a][:, o]
                mass = float(weight.sum())
                if mass <= 0.0:
                    continue
                belief = weight / mass
                rows.append([_sequence_probability(pomdp, belief, ta, to) for ta, to in tests])
    return np.array(rows)


def hankel_rank(pomdp: Pomdp, horizon: int, tolerance: float = 1e-8) -> int:
    """Numerical rank of the open-loop Hankel matrix (singular values above tolerance · σ_max)."""
    singular = np.linalg.svd(hankel_matrix(pomdp, horizon), compute_uv=False)
    if singular.size == 0 or singular[0] == 0.0:
        return 0
    return int((singular > tolerance * singular[0]).sum())
