"""Partitions of the history tree, quotient models, partition agreement and soundness."""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform
from sklearn.metrics import adjusted_rand_score

from .config import DISTANCE_TOLERANCE, LAW_TOLERANCE
from .errors import VerificationError, ZeroMassError
from .model import History, Pomdp
from .probes import Controller, ProbeFamily, check_compatible, filtered_tree, step_law
from .pseudometric import DistanceCache, model_distance
from .transport import DiscreteDistribution, GroundMetric

logger = logging.getLogger("bounded-quotient.quotient")

MERGE_RULES = ("le", "lt")
REPRESENTATIVE_TOLERANCE = 1e-7
SINK = -1


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Per-depth class labels over the history tree.

    Histories unreachable under every probe carry the SINK label and are left
    out of class counts and agreement scores. Class ids are dense per depth
    and numbered by first appearance.
    """
    layers: List[List[History]]
    labels: Tuple[np.ndarray, ...]
    epsilon: Optional[float]
    descriptor: str
    family: ProbeFamily
    reach: Tuple[np.ndarray, ...] = field(repr=False)
    rule: str = "le"

    @property
    def horizon(self) -> int:
        return len(self.layers) - 1

    def class_counts(self) -> List[int]:
        return [int(labels.max()) + 1 if (labels >= 0).any() else 0 for labels in self.labels]

    @property
    def class_count(self) -> int:
        return sum(self.class_counts())

    def sink_count(self) -> int:
        return int(sum((labels == SINK).sum() for labels in self.labels))

    def class_of(self, history: History) -> int:
        n_o = self.family[0].observation_count
        index = 0
        for o in history:
            index = index * n_o + o
        return int(self.labels[len(history)][index])

    def members(self, depth: int, class_id: int) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.labels[depth] == class_id)]

    def rows(self, pomdp: Pomdp) -> List[dict]:
        """(depth, history, class_id) records in tree order."""
        return [
            {"depth": depth, "history": pomdp.format_history(h), "class_id": int(label)}
            for depth, (layer, labels) in enumerate(zip(self.layers, self.labels))
            for h, label in zip(layer, labels)
        ]


def _relabel(raw: np.ndarray) -> np.ndarray:
    """Renumber labels 0, 1, ... by first appearance."""
    mapping: Dict[int, int] = {}
    out = np.empty(raw.size, dtype=int)
    for k, value in enumerate(raw.tolist()):
        out[k] = mapping.setdefault(value, len(mapping))
    return out


def cluster_matrix(matrix: np.ndarray, epsilon: float, rule: str = "le") -> np.ndarray:
    """
    Complete-linkage clusters of a symmetric distance matrix.

    Args:
        matrix: Pairwise distances
        epsilon: Merge threshold
        rule: "le" merges while the cluster diameter is <= epsilon, "lt" while it is < epsilon

    Returns:
        Dense labels numbered by first appearance
    """
    if rule not in MERGE_RULES:
        raise ValueError(f"unknown merge rule '{rule}', expected one of {MERGE_RULES}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    n = matrix.shape[0]
    if n <= 1:
        return np.zeros(n, dtype=int)

    if rule == "le" and epsilon <= 0:
        adjacency = csr_matrix(matrix <= DISTANCE_TOLERANCE)
        _, raw = connected_components(adjacency, directed=False)
        return _relabel(raw)

    threshold = epsilon + DISTANCE_TOLERANCE if rule == "le" else epsilon - 1e-12
    if threshold < 0:
        return np.arange(n)
    tree = linkage(squareform(matrix, checks=False), method="complete")
    return _relabel(fcluster(tree, t=threshold, criterion="distance"))


def _labels_from_matrices(matrices: Sequence[np.ndarray], reachable: Sequence[np.ndarray],
                          epsilon: float, rule: str) -> Tuple[np.ndarray, ...]:
    labels = []
    for matrix, ok in zip(matrices, reachable):
        layer = np.full(ok.size, SINK, dtype=int)
        idx = np.flatnonzero(ok)
        if idx.size:
            layer[idx] = cluster_matrix(matrix[np.ix_(idx, idx)], epsilon, rule)
        labels.append(layer)
    return tuple(labels)


def eps_partition(cache: DistanceCache, epsilon: float, rule: str = "le",
                  subset: Optional[Sequence[int]] = None) -> Partition:
    """
    Per-depth complete-linkage partition of the history tree at threshold epsilon.

    Args:
        cache: Distance cache
        epsilon: Merge threshold (0 gives the probe-exact partition)
        rule: "le" or "lt" merge rule
        subset: Optional probe subset whose envelope replaces the full one

    Returns:
        Partition with unreachable histories in per-depth sinks
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    start = time.time()
    depths = range(len(cache.layers))
    labels = _labels_from_matrices(
        [cache.depth_matrix(d, subset) for d in depths],
        [cache.reachable(d) for d in depths],
        epsilon, rule,
    )
    partition = Partition(
        layers=cache.layers,
        labels=labels,
        epsilon=float(epsilon),
        descriptor=cache.family.descriptor if subset is None else f"{cache.family.descriptor}-subset{len(subset)}",
        family=cache.family,
        reach=tuple(cache.reach),
        rule=rule,
    )
    logger.debug(f"[{cache.benchmark_id or cache.pomdp.name}] partition eps={epsilon:g}: "
                 f"{partition.class_count} classes in {time.time() - start:.3f}s")
    return partition


def exact_partition(cache: DistanceCache, rule: str = "le") -> Partition:
    """Probe-exact partition: histories with distance <= 1e-9 share a class."""
    return eps_partition(cache, 0.0, rule)


def adjusted_rand_index(first: Partition, second: Partition) -> float:
    """
    ARI pooled over depths, with (depth, class) as labels.

    Raises:
        ValueError: the partitions cover different history trees
    """
    left, right = _pooled_labels(first, second)
    if left.size == 0:
        return 1.0
    return float(adjusted_rand_score(left, right))


def per_depth_ari(first: Partition, second: Partition) -> Dict[int, float]:
    """ARI at each depth over histories reachable in both partitions."""
    _check_universe(first, second)
    scores = {}
    for depth, (a, b) in enumerate(zip(first.labels, second.labels)):
        ok = (a >= 0) & (b >= 0)
        scores[depth] = float(adjusted_rand_score(a[ok], b[ok])) if ok.any() else 1.0
    return scores


def _check_universe(first: Partition, second: Partition) -> None:
    if first.layers != second.layers:
        raise ValueError("partitions cover different history trees")


def _pooled_labels(first: Partition, second: Partition) -> Tuple[np.ndarray, np.ndarray]:
    _check_universe(first, second)
    left, right = [], []
    offset_left = offset_right = 0
    for a, b in zip(first.labels, second.labels):
        ok = (a >= 0) & (b >= 0)
        left.append(a[ok] + offset_left)
        right.append(b[ok] + offset_right)
        offset_left += int(a.max()) + 1 if a.size else 0
        offset_right += int(b.max()) + 1 if b.size else 0
    return np.concatenate(left), np.concatenate(right)


@dataclass(frozen=True, eq=False)
class QuotientKernel:
    """Class-level closed-loop dynamics under one controller."""
    transitions: Tuple[np.ndarray, ...]
    rewards: Tuple[np.ndarray, ...]
    deviation: float


@dataclass(eq=False)
class QuotientPomdp:
    """
    A quotient of a POMDP by a history partition.

    Under any controller the quotient is the chain over classes whose class
    belief is the uniform average of the members' closed-loop beliefs. The
    reference materialization (canonical state beliefs, predictive kernel and
    next-class map under one reference probe) feeds to_pomdp().
    """
    pomdp: Pomdp
    partition: Partition
    reference: int
    canonical_beliefs: List[np.ndarray]
    predictive: List[np.ndarray]
    next_class: List[np.ndarray]
    representative_deviation: float
    _kernels: Dict[Controller, QuotientKernel] = field(default_factory=dict, repr=False)

    @property
    def name(self) -> str:
        return f"{self.pomdp.name}/Q"

    @property
    def horizon(self) -> int:
        return self.partition.horizon

    @property
    def action_count(self) -> int:
        return self.pomdp.action_count

    @property
    def observation_count(self) -> int:
        return self.pomdp.observation_count

    @property
    def ground_metric_id(self) -> str:
        return self.pomdp.ground_metric_id

    @property
    def class_count(self) -> int:
        return self.partition.class_count

    def back_map(self, depth: int, class_id: int) -> List[History]:
        """Member histories of a class."""
        return [self.partition.layers[depth][i] for i in self.partition.members(depth, class_id)]

    def closed_loop_kernel(self, fsc: Controller) -> QuotientKernel:
        """Transition tensors [c, a, o, c'] and expected latent rewards per class under a controller."""
        kernel = self._kernels.get(fsc)
        if kernel is None:
            kernel = _class_kernel(self.pomdp, self.partition, fsc)
            self._kernels[fsc] = kernel
        return kernel

    def observation_law(self, fsc: Controller, horizon: Optional[int] = None) -> DiscreteDistribution:
        """Law of the first `horizon` observations of the quotient under a controller."""
        horizon = self.horizon if horizon is None else horizon
        if not 1 <= horizon <= self.horizon:
            raise ValueError(f"horizon {horizon} outside 1..{self.horizon}")
        kernel = self.closed_loop_kernel(fsc)
        if horizon > len(kernel.transitions):
            raise ValueError(f"controller covers {len(kernel.transitions)} steps, horizon {horizon} requested")
        frontier = [((), np.array([1.0]))]
        for depth in range(horizon):
            grown = []
            for sequence, weight in frontier:
                step = np.einsum("c,caoe->oe", weight, kernel.transitions[depth])
                for o in np.flatnonzero(step.sum(axis=1) > 0.0):
                    grown.append((sequence + (int(o),), step[o]))
            frontier = grown
        masses = np.array([w.sum() for _, w in frontier])
        return DiscreteDistribution(tuple(s for s, _ in frontier), masses / masses.sum())

    def to_pomdp(self) -> Pomdp:
        """
        Materialize the reference quotient as an ordinary time-indexed Pomdp.

        States are the root, one state per (class, arriving observation) and an
        absorbing end state. Each state emits its arriving observation; children
        outside every class route to the end state.
        """
        horizon = self.horizon
        n_a, n_o = self.action_count, self.observation_count
        names = ["root"]
        index = {(0, 0, None): 0}
        for depth in range(1, horizon + 1):
            layer = self.partition.layers[depth]
            for c in range(self.partition.class_counts()[depth]):
                arriving = sorted({layer[i][-1] for i in self.partition.members(depth, c)})
                for z in arriving:
                    index[(depth, c, z)] = len(names)
                    names.append(f"t{depth}c{c}/{self.pomdp.observations[z]}")
        end = len(names)
        names.append("end")
        n_s = len(names)

        transition = np.zeros((n_a, n_s, n_s))
        observation = np.zeros((n_a, n_s, n_o))
        reward = np.zeros((n_s, n_a))
        observation[:, [0, end], 0] = 1.0
        transition[:, end, end] = 1.0

        for (depth, c, z), s in index.items():
            if z is not None:
                observation[:, s, z] = 1.0
            reward[s] = self.canonical_beliefs[depth][c] @ self.pomdp.reward
            if depth == horizon:
                transition[:, s, end] = 1.0
                continue
            for o in range(n_o):
                target = index.get((depth + 1, int(self.next_class[depth][c, o]), o), end)
                transition[:, s, target] += self.predictive[depth][c, :, o]

        initial = np.zeros(n_s)
        initial[0] = 1.0
        return Pomdp(
            name=self.name,
            states=tuple(names),
            actions=self.pomdp.actions,
            observations=self.pomdp.observations,
            transition=transition,
            observation=observation,
            reward=reward,
            initial_belief=initial,
            ground_metric_id=self.pomdp.ground_metric_id,
        )

    def kernel_rows(self) -> List[dict]:
        """Reference predictive kernel as (depth, class, action, observation, probability, next_class) records."""
        rows = []
        for depth, predictive in enumerate(self.predictive):
            for c in range(predictive.shape[0]):
                for a in range(self.action_count):
                    for o in range(self.observation_count):
                        rows.append({
                            "depth": depth,
                            "class_id": c,
                            "action": self.pomdp.actions[a],
                            "observation": self.pomdp.observations[o],
                            "probability": float(predictive[c, a, o]),
                            "next_class": int(self.next_class[depth][c, o]),
                        })
        return rows


def _class_kernel(pomdp: Pomdp, partition: Partition, fsc: Controller) -> QuotientKernel:
    horizon = partition.horizon if fsc.horizon is None else min(partition.horizon, fsc.horizon)
    check_compatible(pomdp, fsc, horizon)
    n_a, n_o = pomdp.action_count, pomdp.observation_count
    counts = partition.class_counts()
    tree = filtered_tree(pomdp, fsc, horizon)

    transitions, rewards = [], []
    deviation = 0.0
    for depth in range(horizon):
        labels, child_labels = partition.labels[depth], partition.labels[depth + 1]
        kernel = np.zeros((counts[depth], n_a, n_o, counts[depth + 1]))
        reward = np.zeros(counts[depth])
        weight = np.zeros(counts[depth])
        member_laws = []
        expected_reward = fsc.action_matrix(depth) @ pomdp.reward.T
        for i, belief in enumerate(tree[depth]):
            c = labels[i]
            if c < 0 or not belief.reachable:
                continue
            law = step_law(pomdp, fsc, belief.joint, depth)
            for o in np.flatnonzero(law.sum(axis=0) > 0.0):
                target = child_labels[i * n_o + o]
                if target < 0:
                    raise ZeroMassError(f"history {partition.layers[depth + 1][i * n_o + o]} is reachable "
                                        f"under the controller but outside every class")
                kernel[c, :, o, target] += law[:, o]
            reward[c] += float(np.sum(belief.joint * expected_reward))
            weight[c] += 1.0
            member_laws.append((c, law.sum(axis=0)))
        occupied = weight > 0
        kernel[occupied] /= weight[occupied][:, None, None, None]
        reward[occupied] /= weight[occupied]
        for c, marginal in member_laws:
            mean = kernel[c].sum(axis=(0, 2))
            deviation = max(deviation, float(np.max(np.abs(marginal - mean))))
        transitions.append(kernel)
        rewards.append(reward)
    return QuotientKernel(tuple(transitions), tuple(rewards), deviation)


def reference_beliefs(pomdp: Pomdp, partition: Partition, reference: int = 0) -> List[List[Optional[np.ndarray]]]:
    """
    State belief of every history under the reference probe.

    Histories the reference probe cannot reach use the lowest-index probe that
    reaches them; sink histories get None.
    """
    family = partition.family
    if not 0 <= reference < len(family):
        raise IndexError(f"reference probe {reference} out of range for {len(family)} probes")
    trees: Dict[int, list] = {}

    def tree_of(p: int):
        if p not in trees:
            trees[p] = filtered_tree(pomdp, family[p], partition.horizon)
        return trees[p]

    beliefs = []
    for depth, reach in enumerate(partition.reach):
        layer = []
        for i in range(reach.shape[0]):
            if not reach[i].any():
                layer.append(None)
                continue
            p = reference if reach[i, reference] else int(np.argmax(reach[i]))
            layer.append(tree_of(p)[depth][i].state_belief)
        beliefs.append(layer)
    return beliefs


def build_quotient(pomdp: Pomdp, partition: Partition, reference: int = 0) -> QuotientPomdp:
    """
    Build the quotient POMDP of a partition.

    Args:
        pomdp: The model the partition was computed on
        partition: History partition
        reference: Index of the probe whose beliefs define the materialized kernel

    Returns:
        QuotientPomdp; at epsilon 0 the members of each class agree on the
        reference probe's one-step law

    Raises:
        VerificationError: an epsilon-0 class whose members disagree beyond tolerance
    """
    start = time.time()
    beliefs = reference_beliefs(pomdp, partition, reference)
    counts = partition.class_counts()
    n_o = pomdp.observation_count

    canonical, predictive, next_class = [], [], []
    for depth, labels in enumerate(partition.labels):
        mean = np.zeros((counts[depth], pomdp.state_count))
        for c in range(counts[depth]):
            members = partition.members(depth, c)
            mean[c] = np.mean([beliefs[depth][i] for i in members], axis=0)
        canonical.append(mean)
        if depth == partition.horizon:
            continue
        predictive.append(np.einsum("cs,ast,ato->cao", mean, pomdp.transition, pomdp.observation))
        successors = np.full((counts[depth], n_o), SINK, dtype=int)
        child_labels = partition.labels[depth + 1]
        for c in range(counts[depth]):
            for o in range(n_o):
                for i in partition.members(depth, c):
                    if child_labels[i * n_o + o] >= 0:
                        successors[c, o] = child_labels[i * n_o + o]
                        break
        next_class.append(successors)

    for depth, rows in enumerate(predictive):
        worst = float(np.max(np.abs(rows.sum(axis=-1) - 1.0))) if rows.size else 0.0
        if worst > LAW_TOLERANCE:
            raise VerificationError(f"quotient predictive rows at depth {depth} deviate from 1 by {worst:.3g}")

    quotient = QuotientPomdp(
        pomdp=pomdp,
        partition=partition,
        reference=reference,
        canonical_beliefs=canonical,
        predictive=predictive,
        next_class=next_class,
        representative_deviation=0.0,
    )
    deviation = quotient.closed_loop_kernel(partition.family[reference]).deviation
    quotient.representative_deviation = deviation
    if partition.epsilon == 0.0 and deviation > REPRESENTATIVE_TOLERANCE:
        logger.error(f"[{pomdp.name}] exact quotient members disagree by {deviation:.3g}")
        raise VerificationError(f"exact quotient is representative-dependent (deviation {deviation:.3g})")
    logger.info(f"[{pomdp.name}] quotient built in {time.time() - start:.3f}s: "
                f"{partition.class_count} classes, representative deviation {deviation:.2e}")
    return quotient


def soundness_check(pomdp: Pomdp, quotient: QuotientPomdp, family: Optional[ProbeFamily] = None,
                    metric: Optional[GroundMetric] = None) -> float:
    """
    Max over probes of W1 between the full observation laws of the model and its quotient.

    Raises:
        VerificationError: an epsilon-0 quotient deviates by more than 1e-9
    """
    family = family or quotient.partition.family
    deviation = model_distance(pomdp, quotient, family, quotient.horizon, metric)
    if quotient.partition.epsilon == 0.0 and deviation > DISTANCE_TOLERANCE:
        logger.error(f"[{pomdp.name}] soundness violated: max W1 {deviation:.3g}")
        raise VerificationError(f"exact quotient of {pomdp.name} changes observation laws by {deviation:.3g}")
    return deviation


def truncation_partition(cache: DistanceCache, window: int) -> Partition:
    """Baseline: histories sharing their last `window` observations share a class."""
    if window < 0:
        raise ValueError(f"window must be >= 0, got {window}")
    labels = []
    for depth, layer in enumerate(cache.layers):
        ok = cache.reachable(depth)
        keys = [h[len(h) - window:] if window else () for h in layer]
        out = np.full(len(layer), SINK, dtype=int)
        idx = np.flatnonzero(ok)
        if idx.size:
            ids = {}
            out[idx] = [ids.setdefault(keys[i], len(ids)) for i in idx]
        labels.append(out)
    return Partition(cache.layers, tuple(labels), None, f"truncation-{window}",
                     cache.family, tuple(cache.reach))


def random_partition(reference: Partition, seed: int) -> Partition:
    """Baseline: random labels with the reference partition's per-depth class counts."""
    labels = []
    for depth, (layer_labels, count) in enumerate(zip(reference.labels, reference.class_counts())):
        rng = np.random.default_rng([seed, depth])
        idx = np.flatnonzero(layer_labels >= 0)
        out = np.full(layer_labels.size, SINK, dtype=int)
        if idx.size:
            raw = rng.integers(0, count, size=idx.size)
            raw[rng.permutation(idx.size)[:count]] = np.arange(count)
            out[idx] = _relabel(raw)
        labels.append(out)
    return Partition(reference.layers, tuple(labels), None, f"random-{seed}",
                     reference.family, reference.reach)


def belief_partition(cache: DistanceCache, epsilon: float, reference: int = 0) -> Partition:
    """Baseline: complete-linkage clusters of L1 distances between reference beliefs."""
    probe_exact = exact_partition(cache)
    beliefs = reference_beliefs(cache.pomdp, probe_exact, reference)
    matrices = []
    for depth, layer in enumerate(beliefs):
        stacked = np.array([b if b is not None else np.zeros(cache.pomdp.state_count) for b in layer])
        matrices.append(squareform(pdist(stacked, metric="cityblock")) if len(layer) > 1 else np.zeros((1, 1)))
    labels = _labels_from_matrices(matrices, [cache.reachable(d) for d in range(len(beliefs))], epsilon, "le")
    return Partition(cache.layers, labels, None, f"belief-l1-{epsilon:g}", cache.family, tuple(cache.reach))
