"""Ground metrics, sequence costs and exact 1-Wasserstein distances."""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import ot

from .config import DISTANCE_TOLERANCE, LAW_TOLERANCE

QUADRANT_POSITIONS = ((0, 0), (1, 0), (0, 1), (1, 1))  # NW, SW, NE, SE
EMD_MAX_ITERATIONS = 1_000_000


@dataclass(frozen=True, eq=False)
class GroundMetric:
    """A metric on observation indices given by its cost matrix."""
    kind: str
    cost: np.ndarray

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float)
        if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
            raise ValueError(f"ground metric cost must be square, got shape {cost.shape}")
        if np.any(cost < 0) or not np.allclose(cost, cost.T, atol=1e-12):
            raise ValueError("ground metric cost must be nonnegative and symmetric")
        if np.any(np.abs(np.diag(cost)) > 1e-12):
            raise ValueError("ground metric cost must have a zero diagonal")
        # d(i, k) <= d(i, j) + d(j, k) for all triples
        through = cost[:, :, None] + cost[None, :, :]
        if np.any(cost[:, None, :] > through + 1e-12):
            raise ValueError("ground metric cost violates the triangle inequality")
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)

    @property
    def size(self) -> int:
        return self.cost.shape[0]

    @classmethod
    def discrete(cls, size: int) -> "GroundMetric":
        return cls("discrete", 1.0 - np.eye(size))

    @classmethod
    def line(cls, size: int, scale: float) -> "GroundMetric":
        idx = np.arange(size)
        return cls(f"line:{scale:g}", np.abs(idx[:, None] - idx[None, :]) * scale)

    @classmethod
    def quadrant(cls) -> "GroundMetric":
        pos = np.array(QUADRANT_POSITIONS, dtype=float)
        return cls("quadrant", np.abs(pos[:, None, :] - pos[None, :, :]).sum(axis=-1) / 2.0)

    @classmethod
    def custom(cls, cost) -> "GroundMetric":
        return cls("custom", np.asarray(cost, dtype=float))


def metric_from_id(metric_id: str, observation_count: int) -> GroundMetric:
    """
    Resolve a ground metric id such as 'discrete', 'quadrant' or 'line:0.25'.

    Raises:
        ValueError: unknown id or an id that does not fit the alphabet size
    """
    kind, _, argument = metric_id.partition(":")
    if kind == "discrete":
        return GroundMetric.discrete(observation_count)
    if kind == "line":
        return GroundMetric.line(observation_count, float(argument or 1.0))
    if kind == "quadrant":
        if observation_count != len(QUADRANT_POSITIONS):
            raise ValueError(f"quadrant metric needs 4 observations, got {observation_count}")
        return GroundMetric.quadrant()
    raise ValueError(f"unknown ground metric id '{metric_id}'")


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """A finite distribution over observation sequences."""
    support: Tuple[Tuple[int, ...], ...]
    masses: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        support = tuple(tuple(int(o) for o in x) for x in self.support)
        if len(support) == 0 or masses.shape != (len(support),):
            raise ValueError(f"support of size {len(support)} does not match masses {masses.shape}")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > LAW_TOLERANCE:
            raise ValueError(f"masses must be a probability vector (sum {masses.sum():.12g})")
        masses.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_dict(cls, law: dict) -> "DiscreteDistribution":
        items = sorted(law.items())
        return cls(tuple(k for k, _ in items), np.array([v for _, v in items], dtype=float))

    def as_dict(self) -> dict:
        return {x: float(m) for x, m in zip(self.support, self.masses)}

    @property
    def length(self) -> int:
        return len(self.support[0])

    def same_as(self, other: "DiscreteDistribution") -> bool:
        """Exact equality of support and masses."""
        return self.support == other.support and np.array_equal(self.masses, other.masses)


def sequence_cost(x: Sequence[int], y: Sequence[int], metric: GroundMetric) -> float:
    """Sum of per-position ground costs between two equal-length sequences."""
    if len(x) != len(y):
        raise ValueError(f"sequence lengths differ: {len(x)} vs {len(y)}")
    return float(sum(metric.cost[a, b] for a, b in zip(x, y)))


def sequence_cost_matrix(xs: Sequence[Tuple[int, ...]], ys: Sequence[Tuple[int, ...]],
                         metric: GroundMetric) -> np.ndarray:
    """Pairwise summed ground costs between two lists of equal-length sequences."""
    left = np.asarray(xs, dtype=int)
    right = np.asarray(ys, dtype=int)
    if left.ndim != 2 or right.ndim != 2 or left.shape[1] != right.shape[1]:
        raise ValueError(f"sequence supports have incompatible shapes {left.shape} and {right.shape}")
    if left.shape[1] == 0:
        return np.zeros((left.shape[0], right.shape[0]))
    return metric.cost[left[:, None, :], right[None, :, :]].sum(axis=-1)


def w1_exact(p: DiscreteDistribution, q: DiscreteDistribution, cost: np.ndarray) -> float:
    """
    Exact 1-Wasserstein distance with a network-simplex solver.

    Args:
        p: Source distribution
        q: Target distribution
        cost: |support(p)| x |support(q)| ground cost matrix

    Returns:
        Optimal transport cost, clipped at 0
    """
    a = np.ascontiguousarray(p.masses, dtype=np.float64)
    b = np.ascontiguousarray(q.masses, dtype=np.float64)
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.shape != (a.size, b.size):
        raise ValueError(f"cost shape {cost.shape} does not match supports ({a.size}, {b.size})")
    # the solver needs exactly equal totals
    a = a / a.sum()
    b = b / b.sum()
    value = float(ot.emd2(a, b, cost, numItermax=EMD_MAX_ITERATIONS))
    return max(value, 0.0)


def w1_between(p: DiscreteDistribution, q: DiscreteDistribution, metric: GroundMetric) -> float:
    """W1 between two sequence laws, building the cost lazily on their supports."""
    if p.length != q.length:
        raise ValueError(f"laws over sequences of different lengths: {p.length} vs {q.length}")
    if p.same_as(q) or p.length == 0:
        return 0.0
    if len(p.support) == 1 and len(q.support) == 1:
        return sequence_cost(p.support[0], q.support[0], metric)
    return w1_exact(p, q, sequence_cost_matrix(p.support, q.support, metric))


def total_variation(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Half the L1 distance over the union of supports."""
    mass_p = p.as_dict()
    mass_q = q.as_dict()
    keys = set(mass_p) | set(mass_q)
    return 0.5 * float(sum(abs(mass_p.get(k, 0.0) - mass_q.get(k, 0.0)) for k in keys))


def is_zero(distance: float) -> bool:
    """Whether a distance is zero up to the distance tolerance."""
    return distance <= DISTANCE_TOLERANCE
