"""Wrappers, observation coarsening, data-processing checks and layered horizon composition."""

import itertools
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import DISTANCE_TOLERANCE
from .errors import AlphabetMismatchError, VerificationError
from .model import Pomdp, history_count
from .probes import ProbeFamily, enumerate_family, filtered_tree
from .pseudometric import build_cache, law_of, model_distance
from .quotient import QuotientPomdp, build_quotient, eps_partition
from .schemas import FamilySpec
from .transport import DiscreteDistribution, GroundMetric, metric_from_id, w1_exact

logger = logging.getLogger("bounded-quotient.layered")

# GridWorld quadrant merge: (NW, NE) -> N and (SW, SE) -> S
QUADRANT_MERGE = ((0, 2), (1, 3))
QUADRANT_MERGE_NAMES = ("N", "S")
QUADRANT_MERGE_METRIC = "line:0.5"


def _is_stochastic_matrix(matrix: np.ndarray) -> bool:
    return bool(np.all(matrix >= 0) and np.allclose(matrix.sum(axis=1), 1.0, atol=1e-12))


def _is_deterministic(matrix: np.ndarray) -> bool:
    return bool(np.all((matrix == 0.0) | (matrix == 1.0)))


def metric_id_of(metric: GroundMetric) -> str:
    """An id that metric_from_id resolves back to the same cost, when one exists."""
    n = metric.size
    off = metric.cost[~np.eye(n, dtype=bool)]
    if metric.kind != "custom":
        return metric.kind
    if n == 1 or np.allclose(off, 1.0):
        return "discrete"
    if n == 2:
        return f"line:{float(off[0]):g}"
    return "custom"


@dataclass(frozen=True, eq=False)
class Wrapper:
    """
    An action remap plus an observation channel.

    action_remap[a', a] is the probability that wrapped action a' runs original
    action a; channel[o, o'] the probability that original observation o is
    reported as o'.
    """
    name: str
    action_remap: np.ndarray
    channel: np.ndarray
    source_metric: GroundMetric
    target_metric: GroundMetric
    observation_names: Tuple[str, ...]
    action_names: Tuple[str, ...]

    def __post_init__(self):
        for attr in ("action_remap", "channel"):
            matrix = np.array(getattr(self, attr), dtype=float)
            if matrix.ndim != 2 or not _is_stochastic_matrix(matrix):
                raise ValueError(f"wrapper {attr} must be a row-stochastic matrix")
            matrix.setflags(write=False)
            object.__setattr__(self, attr, matrix)
        if self.channel.shape != (self.source_metric.size, self.target_metric.size):
            raise ValueError(f"channel shape {self.channel.shape} does not match the metrics")
        if len(self.observation_names) != self.channel.shape[1] or len(self.action_names) != self.action_remap.shape[0]:
            raise ValueError("wrapper symbol names do not match its matrices")

    @property
    def deterministic(self) -> bool:
        return _is_deterministic(self.action_remap) and _is_deterministic(self.channel)

    @property
    def channel_map(self) -> np.ndarray:
        if not _is_deterministic(self.channel):
            raise ValueError(f"wrapper {self.name} has a stochastic channel")
        return self.channel.argmax(axis=1)

    @cached_property
    def lipschitz(self) -> float:
        return lipschitz_constant(self.channel, self.source_metric, self.target_metric)


def lipschitz_constant(channel: np.ndarray, source: GroundMetric, target: GroundMetric) -> float:
    """max over o != o' of W1(C(o), C(o'); target) / source(o, o')."""
    channel = np.asarray(channel, dtype=float)
    symbols = tuple((o,) for o in range(channel.shape[1]))
    worst = 0.0
    for o, other in itertools.combinations(range(channel.shape[0]), 2):
        moved = w1_exact(DiscreteDistribution(symbols, channel[o]),
                         DiscreteDistribution(symbols, channel[other]), target.cost)
        gap = source.cost[o, other]
        if gap > 0:
            worst = max(worst, moved / gap)
        elif moved > DISTANCE_TOLERANCE:
            return float("inf")
    return worst


def identity_wrapper(pomdp: Pomdp, metric: Optional[GroundMetric] = None) -> Wrapper:
    metric = metric or metric_from_id(pomdp.ground_metric_id, pomdp.observation_count)
    return Wrapper("identity", np.eye(pomdp.action_count), np.eye(pomdp.observation_count),
                   metric, metric, pomdp.observations, pomdp.actions)


def merge_wrapper(pomdp: Pomdp, groups: Sequence[Sequence[int]], names: Sequence[str],
                  target_metric: GroundMetric, metric: Optional[GroundMetric] = None) -> Wrapper:
    """Deterministic channel sending every observation of group k to merged symbol k."""
    channel = np.zeros((pomdp.observation_count, len(groups)))
    for k, group in enumerate(groups):
        channel[list(group), k] = 1.0
    if not np.allclose(channel.sum(axis=1), 1.0):
        raise ValueError("merge groups must cover every observation exactly once")
    metric = metric or metric_from_id(pomdp.ground_metric_id, pomdp.observation_count)
    return Wrapper(f"merge-{len(groups)}", np.eye(pomdp.action_count), channel, metric,
                   target_metric, tuple(names), pomdp.actions)


def quadrant_merge(pomdp: Pomdp) -> Wrapper:
    """GridWorld NW+NE / SW+SE merge onto two symbols half a unit apart."""
    target = metric_from_id(QUADRANT_MERGE_METRIC, len(QUADRANT_MERGE))
    return merge_wrapper(pomdp, QUADRANT_MERGE, QUADRANT_MERGE_NAMES, target)


def noise_wrapper(pomdp: Pomdp, flip: float, metric: Optional[GroundMetric] = None) -> Wrapper:
    """Symmetric channel that reports a uniformly chosen other symbol with probability `flip`."""
    n_o = pomdp.observation_count
    if not 0.0 <= flip <= 1.0 or (n_o == 1 and flip > 0):
        raise ValueError(f"flip probability {flip} invalid for {n_o} observations")
    channel = np.eye(n_o) * (1.0 - flip)
    if n_o > 1:
        channel += (1.0 - np.eye(n_o)) * flip / (n_o - 1)
    metric = metric or metric_from_id(pomdp.ground_metric_id, n_o)
    return Wrapper(f"noise-{flip:g}", np.eye(pomdp.action_count), channel, metric, metric,
                   pomdp.observations, pomdp.actions)


def apply_wrapper(pomdp: Pomdp, wrapper: Wrapper) -> Pomdp:
    """
    Compose a POMDP with a wrapper.

    A stochastic action remap augments the state with the last original action,
    since the emitted observation depends on it.

    Raises:
        AlphabetMismatchError: wrapper and model alphabets differ
    """
    if wrapper.channel.shape[0] != pomdp.observation_count or wrapper.action_remap.shape[1] != pomdp.action_count:
        raise AlphabetMismatchError(
            f"wrapper {wrapper.name} expects |A|={wrapper.action_remap.shape[1]}, |O|={wrapper.channel.shape[0]}; "
            f"{pomdp.name} has |A|={pomdp.action_count}, |O|={pomdp.observation_count}"
        )
    remap = wrapper.action_remap
    emitted = pomdp.observation @ wrapper.channel  # [a, s', o']
    name = f"{pomdp.name}|{wrapper.name}"
    metric_id = metric_id_of(wrapper.target_metric)

    if _is_deterministic(remap):
        chosen = remap.argmax(axis=1)
        return Pomdp(
            name=name,
            states=pomdp.states,
            actions=wrapper.action_names,
            observations=wrapper.observation_names,
            transition=pomdp.transition[chosen],
            observation=emitted[chosen],
            reward=pomdp.reward[:, chosen],
            initial_belief=pomdp.initial_belief,
            ground_metric_id=metric_id,
        )

    n_s, n_a = pomdp.state_count, pomdp.action_count
    n_wrapped = remap.shape[0]
    # augmented state (s, a) records the original action that led to s
    transition = np.einsum("wa,ast->wsta", remap, pomdp.transition)
    transition = np.broadcast_to(transition[:, :, None, :, :], (n_wrapped, n_s, n_a, n_s, n_a))
    transition = transition.reshape(n_wrapped, n_s * n_a, n_s * n_a)
    observation = np.broadcast_to(emitted.transpose(1, 0, 2)[None], (n_wrapped, n_s, n_a, emitted.shape[2]))
    observation = observation.reshape(n_wrapped, n_s * n_a, emitted.shape[2])
    reward = np.repeat(pomdp.reward @ remap.T, n_a, axis=0)
    initial = np.zeros((n_s, n_a))
    initial[:, 0] = pomdp.initial_belief
    return Pomdp(
        name=name,
        states=tuple(f"{s}/{a}" for s in pomdp.states for a in pomdp.actions),
        actions=wrapper.action_names,
        observations=wrapper.observation_names,
        transition=transition,
        observation=observation,
        reward=reward,
        initial_belief=initial.ravel(),
        ground_metric_id=metric_id,
    )


@dataclass(frozen=True, eq=False)
class PulledBackFsc:
    """A wrapped-alphabet controller run on the original alphabets through a wrapper."""
    inner: object
    wrapper: Wrapper

    deterministic = False

    @property
    def node_count(self) -> int:
        return self.inner.node_count

    @property
    def horizon(self):
        return self.inner.horizon

    @property
    def action_count(self) -> int:
        return self.wrapper.action_remap.shape[1]

    @property
    def observation_count(self) -> int:
        return self.wrapper.channel.shape[0]

    def action_matrix(self, stage: int) -> np.ndarray:
        return self.inner.action_matrix(stage) @ self.wrapper.action_remap

    def transition_tensor(self, stage: int) -> np.ndarray:
        return self.inner.transition_tensor(stage)[:, self.wrapper.channel_map, :]

    def to_text(self) -> str:
        return f"pullback[{self.wrapper.name}] {self.inner.to_text()}"


def pull_back(family: ProbeFamily, wrapper: Wrapper) -> ProbeFamily:
    """The family of controllers that act on the original model through the wrapper."""
    return ProbeFamily(family.kind, family.memory, family.horizon,
                       tuple(PulledBackFsc(fsc, wrapper) for fsc in family))


@dataclass(eq=False)
class WrappedModel:
    """Any law source seen through a wrapper with a deterministic channel."""
    source: object
    wrapper: Wrapper

    def __post_init__(self):
        if not _is_deterministic(self.wrapper.channel):
            raise ValueError(f"wrapper {self.wrapper.name} has a stochastic channel")
        if self.wrapper.channel.shape[0] != self.source.observation_count:
            raise AlphabetMismatchError(f"wrapper {self.wrapper.name} does not fit {self.source.name}")

    @property
    def name(self) -> str:
        return f"{self.source.name}|{self.wrapper.name}"

    @property
    def action_count(self) -> int:
        return self.wrapper.action_remap.shape[0]

    @property
    def observation_count(self) -> int:
        return self.wrapper.channel.shape[1]

    @property
    def ground_metric_id(self) -> str:
        return metric_id_of(self.wrapper.target_metric)

    def observation_law(self, fsc, horizon: int) -> DiscreteDistribution:
        """Pushforward of the source law under the pulled-back controller."""
        law = law_of(self.source, PulledBackFsc(fsc, self.wrapper), horizon)
        mapping = self.wrapper.channel_map
        merged = {}
        for sequence, mass in zip(law.support, law.masses):
            key = tuple(int(mapping[o]) for o in sequence)
            merged[key] = merged.get(key, 0.0) + float(mass)
        return DiscreteDistribution.from_dict(merged)


def wrap(model, wrapper: Wrapper):
    """W(model): composed kernels for a Pomdp, a WrappedModel for any other law source."""
    if isinstance(model, Pomdp):
        return apply_wrapper(model, wrapper)
    return WrappedModel(model, wrapper)


@dataclass(frozen=True)
class CoarseningSpec:
    """A δ_O-covering of the observation alphabet and its quantization map."""
    resolution: float
    representatives: Tuple[int, ...]
    quantization: Tuple[int, ...]


def _covers(cost: np.ndarray, chosen: Sequence[int], resolution: float) -> bool:
    return bool(np.all(cost[:, list(chosen)].min(axis=1) <= resolution + 1e-12))


def _greedy_cover(cost: np.ndarray, resolution: float) -> List[int]:
    within = cost <= resolution + 1e-12
    uncovered = np.ones(cost.shape[0], dtype=bool)
    chosen: List[int] = []
    while uncovered.any():
        gains = (within & uncovered[None, :]).sum(axis=1)
        best = int(np.argmax(gains))
        chosen.append(best)
        uncovered &= ~within[best]
    return sorted(chosen)


def coarsen(pomdp: Pomdp, resolution: float, metric: Optional[GroundMetric] = None) -> Tuple[Pomdp, CoarseningSpec]:
    """
    Replace observations by representatives of a minimal δ_O-covering.

    The covering is greedy; for alphabets of at most eight symbols an exhaustive
    search confirms no smaller covering exists. Each observation maps to its
    nearest representative, ties to the lowest index.
    """
    if resolution < 0:
        raise ValueError(f"resolution must be >= 0, got {resolution}")
    metric = metric or metric_from_id(pomdp.ground_metric_id, pomdp.observation_count)
    cost = metric.cost
    chosen = _greedy_cover(cost, resolution)
    if cost.shape[0] <= 8:
        for size in range(1, len(chosen)):
            smaller = next((c for c in itertools.combinations(range(cost.shape[0]), size)
                            if _covers(cost, c, resolution)), None)
            if smaller is not None:
                logger.warning(f"Greedy covering of size {len(chosen)} is not minimal; using {list(smaller)}")
                chosen = list(smaller)
                break

    quantization = tuple(int(chosen[int(np.argmin(cost[o, chosen]))]) for o in range(cost.shape[0]))
    target = GroundMetric.custom(cost[np.ix_(chosen, chosen)])
    groups = [[o for o, q in enumerate(quantization) if q == rep] for rep in chosen]
    names = [pomdp.observations[rep] for rep in chosen]
    wrapper = merge_wrapper(pomdp, groups, names, target, metric)
    spec = CoarseningSpec(float(resolution), tuple(chosen), quantization)
    return apply_wrapper(pomdp, wrapper), spec


@dataclass(frozen=True)
class DataProcessingCheck:
    lhs: float
    rhs: float
    holds: bool


def check_data_processing(model_a, model_b, wrapper: Wrapper, family: ProbeFamily, horizon: int) -> DataProcessingCheck:
    """
    Compare D(W(A), W(B)) under a wrapped-alphabet family with L_C · D(A, B) under its pullback.

    Raises:
        VerificationError: lhs exceeds rhs by more than 1e-9
    """
    lhs = model_distance(wrap(model_a, wrapper), wrap(model_b, wrapper), family, horizon, wrapper.target_metric)
    rhs = wrapper.lipschitz * model_distance(model_a, model_b, pull_back(family, wrapper), horizon,
                                             wrapper.source_metric)
    holds = lhs <= rhs + DISTANCE_TOLERANCE
    if not holds:
        logger.error(f"[{wrapper.name}] data processing violated: {lhs:.6f} > {rhs:.6f}")
        raise VerificationError(f"data-processing inequality fails for {wrapper.name}: {lhs:.6g} > {rhs:.6g}")
    return DataProcessingCheck(lhs, rhs, holds)


@dataclass(eq=False)
class Segment:
    """One layer of a horizon plan: reference model, its approximation and the outgoing wrapper."""
    index: int
    horizon: int
    reference: Pomdp
    approximate: QuotientPomdp
    wrapper: Wrapper
    family: ProbeFamily
    histories: int


@dataclass(eq=False)
class LayeredPlan:
    pomdp: Pomdp
    horizon: int
    segment_length: int
    epsilon: float
    segments: List[Segment] = field(default_factory=list)

    @property
    def lengths(self) -> List[int]:
        return [s.horizon for s in self.segments]


def segment_lengths(horizon: int, segment_length: int) -> List[int]:
    """Split T into segments of length τ, the remainder last."""
    if segment_length < 1 or horizon < 1:
        raise ValueError(f"need T >= 1 and τ >= 1, got T={horizon}, τ={segment_length}")
    full, rest = divmod(horizon, segment_length)
    return [segment_length] * full + ([rest] if rest else [])


def histories_processed(observation_count: int, lengths: Sequence[int]) -> int:
    """Histories enumerated by a layered build: Σ_i Σ_{d≤τ_i} |O|^d."""
    return sum(history_count(observation_count, length) for length in lengths)


def boundary_belief(pomdp: Pomdp, fsc, horizon: int) -> np.ndarray:
    """State marginal after `horizon` steps under a controller: Σ_h P(h) b_h over the last layer."""
    belief = np.zeros(pomdp.state_count)
    for node in filtered_tree(pomdp, fsc, horizon)[horizon]:
        if node.reachable:
            belief += node.reach * node.state_belief
    return belief / belief.sum()


def terminal_belief(quotient: QuotientPomdp) -> np.ndarray:
    """
    State belief a quotient carries past its horizon.

    Terminal classes are weighted by their mass under the reference probe and
    contribute their canonical belief, so members merged into one class hand
    over the class average rather than their own posteriors.
    """
    depth = quotient.horizon
    fsc = quotient.partition.family[quotient.reference]
    labels = quotient.partition.labels[depth]
    masses = np.zeros(len(quotient.canonical_beliefs[depth]))
    for node, label in zip(filtered_tree(quotient.pomdp, fsc, depth)[depth], labels):
        if node.reachable and label >= 0:
            masses[label] += node.reach
    belief = masses @ quotient.canonical_beliefs[depth]
    return belief / belief.sum()


def stitch(model: Pomdp, wrapper: Wrapper, belief: np.ndarray) -> Pomdp:
    """
    Next segment's model: the wrapped kernels started from a boundary belief.

    Raises:
        ValueError: the wrapper changes the state space
    """
    wrapped = apply_wrapper(model, wrapper)
    if wrapped.state_count != model.state_count:
        raise ValueError(f"wrapper {wrapper.name} changes |S| from {model.state_count} to {wrapped.state_count}; "
                         f"segments can only be stitched across state-preserving wrappers")
    return wrapped.with_initial_belief(belief)


def build_horizon_plan(pomdp: Pomdp, horizon: int, segment_length: int, epsilon: float,
                       family_spec: FamilySpec, metric: Optional[GroundMetric] = None) -> LayeredPlan:
    """
    Chain of ε-quotients over consecutive horizon segments joined by identity wrappers.

    Segment i+1's reference model starts from the state marginal that segment i's
    reference model reaches at its last step under the reference probe. Its
    approximate model is the ε-quotient of the same kernels started from the
    belief segment i's quotient carries out of its terminal layer.

    Returns:
        LayeredPlan with one reference model, probe family and ε-quotient per segment
    """
    plan = LayeredPlan(pomdp, horizon, segment_length, epsilon)
    reference = carried = pomdp
    for index, length in enumerate(segment_lengths(horizon, segment_length)):
        family = enumerate_family(family_spec, reference, length)
        cache = build_cache(carried, family, length, metric, serial=True)
        approximate = build_quotient(carried, eps_partition(cache, epsilon))
        wrapper = identity_wrapper(reference, metric)
        plan.segments.append(Segment(index, length, reference, approximate, wrapper, family,
                                     history_count(reference.observation_count, length)))
        probe = family[approximate.reference]
        reference = stitch(reference, wrapper, boundary_belief(reference, probe, length))
        carried = stitch(carried, wrapper, terminal_belief(approximate))
        logger.debug(f"[{pomdp.name}] segment {index + 1}: {approximate.class_count} classes, next entry "
                     f"{np.round(reference.initial_belief, 4)} vs carried {np.round(carried.initial_belief, 4)}")
    return plan


@dataclass(frozen=True)
class LedgerRow:
    """
    One layer of the distortion ledger.

    `carry` is D(M_{i+1}, W_i(M̃_i)), the propagated term that the recursion
    bounds by L_i Γ_i; `holds` records whether Γ_{i+1} ≤ L_i Γ_i + ε_i.
    """
    layer: int
    lipschitz: float
    residual: float
    carry: float
    gamma: float
    bound: float
    empirical: float
    holds: bool
    histories_processed: int
    runtime: float


@dataclass(frozen=True)
class LayeredResult:
    rows: Tuple[LedgerRow, ...]
    histories_processed: int
    direct_histories: int

    @property
    def holds(self) -> bool:
        return all(row.holds for row in self.rows)

    def terminal_value_bound(self, lipschitz_reward: float, horizon: int) -> float:
        """L_R · T · Γ at the last layer."""
        return lipschitz_reward * horizon * self.rows[-1].gamma


def _same_kernels(a: Pomdp, b: Pomdp) -> bool:
    return all(
        x.shape == y.shape and np.allclose(x, y, atol=1e-12)
        for x, y in ((a.transition, b.transition), (a.observation, b.observation),
                     (a.reward, b.reward), (a.initial_belief, b.initial_belief))
    )


def run_layered(plan: LayeredPlan, family: Optional[ProbeFamily] = None,
                metric: Optional[GroundMetric] = None) -> LayeredResult:
    """
    Measure the distortion ledger of a layered plan.

    Γ_1 = D(M_1, M̃_1). For each later layer, W_i(M̃_i) is segment i's quotient
    carried across the boundary, the residual is ε_i = D(W_i(M̃_i), M̃_{i+1}),
    the carry is D(M_{i+1}, W_i(M̃_i)) and Γ_{i+1} = D(M_{i+1}, M̃_{i+1}), all at
    the next segment's horizon. The recursion bound is L_i Γ_i + ε_i; it holds
    whenever the carry stays within L_i Γ_i, and a layer where it does not is
    flagged rather than raised.

    Args:
        plan: Plan from build_horizon_plan
        family: Family used for every layer; defaults to each segment's own
        metric: Ground metric; defaults to the model's

    Raises:
        ValueError: a segment is not stitched to the previous one
        VerificationError: Γ_{i+1} exceeds carry + ε_i
    """
    rows: List[LedgerRow] = []
    segments = plan.segments
    for i, segment in enumerate(segments):
        start = time.perf_counter()
        probes = family or segment.family
        if i == 0:
            gamma = model_distance(segment.reference, segment.approximate, probes, segment.horizon, metric)
            rows.append(LedgerRow(1, 1.0, 0.0, 0.0, gamma, gamma, gamma, True, segment.histories,
                                  time.perf_counter() - start))
            continue

        previous = segments[i - 1]
        probe = previous.family[previous.approximate.reference]
        entry = boundary_belief(previous.reference, probe, previous.horizon)
        if not _same_kernels(stitch(previous.reference, previous.wrapper, entry), segment.reference):
            raise ValueError(f"layer {i + 1} reference model is not the wrapped layer {i} model at its boundary")
        carried = stitch(previous.approximate.pomdp, previous.wrapper, terminal_belief(previous.approximate))
        if not _same_kernels(carried, segment.approximate.pomdp):
            raise ValueError(f"layer {i + 1} approximate model is not built on the layer {i} quotient")

        lipschitz = previous.wrapper.lipschitz
        residual = model_distance(carried, segment.approximate, probes, segment.horizon, metric)
        carry = model_distance(segment.reference, carried, probes, segment.horizon, metric)
        empirical = model_distance(segment.reference, segment.approximate, probes, segment.horizon, metric)
        if empirical > carry + residual + DISTANCE_TOLERANCE:
            logger.error(f"[{plan.pomdp.name}] layer {i + 1}: {empirical:.4f} > {carry:.4f} + {residual:.4f}")
            raise VerificationError(f"triangle inequality fails at layer {i + 1}: "
                                    f"{empirical:.6g} > {carry:.6g} + {residual:.6g}")
        bound = lipschitz * rows[-1].gamma + residual
        holds = empirical <= bound + DISTANCE_TOLERANCE
        if not holds:
            logger.warning(f"[{plan.pomdp.name}] layer {i + 1}: carry {carry:.4f} exceeds "
                           f"L*gamma {lipschitz * rows[-1].gamma:.4f}, recursion bound {bound:.4f} < {empirical:.4f}")
        rows.append(LedgerRow(i + 1, lipschitz, residual, carry, empirical, bound, empirical, holds,
                              segment.histories, time.perf_counter() - start))

    processed = histories_processed(plan.pomdp.observation_count, plan.lengths)
    direct = history_count(plan.pomdp.observation_count, plan.horizon)
    logger.info(f"[{plan.pomdp.name}] layered T={plan.horizon} tau={plan.segment_length}: "
                f"{processed} histories vs {direct} direct")
    return LayeredResult(tuple(rows), processed, direct)
