"""Closed-loop probe pseudometric: distance caches, envelopes and certificates."""

import asyncio
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import CACHE_CAP, CLAMP_TOLERANCE, SERIAL_DEFAULT, WORKERS
from .errors import AlphabetMismatchError, SizeGuardError
from .model import History, Pomdp, history_tree
from .probes import (
    Controller,
    ProbeFamily,
    check_compatible,
    expand,
    filtered_tree,
    observation_law,
)
from .transport import DiscreteDistribution, GroundMetric, metric_from_id, w1_between

logger = logging.getLogger("bounded-quotient.pseudometric")


@dataclass(eq=False)
class DistanceCache:
    """
    Exact W1 distances D[(i, j), p] between suffix laws of equal-depth histories.

    Pairs at each depth follow np.triu_indices order. Entries where either
    history is unreachable under the probe are 0 and marked unqualified.
    """
    pomdp: Pomdp
    family: ProbeFamily
    horizon: int
    metric: GroundMetric
    layers: List[List[History]]
    distances: List[np.ndarray]
    qualified: List[np.ndarray]
    reach: List[np.ndarray]
    benchmark_id: str = ""
    samples: Optional[Dict[Tuple[int, int, int], np.ndarray]] = field(default=None, repr=False)

    @property
    def probe_count(self) -> int:
        return len(self.family)

    @property
    def pair_count(self) -> int:
        return sum(d.shape[0] for d in self.distances)

    def pair_indices(self, depth: int) -> Tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(len(self.layers[depth]), k=1)

    def pair_keys(self) -> List[Tuple[int, int, int]]:
        """(depth, i, j) for every pair, in pair-matrix row order."""
        keys = []
        for depth in range(len(self.layers)):
            rows, cols = self.pair_indices(depth)
            keys.extend((depth, int(i), int(j)) for i, j in zip(rows, cols))
        return keys

    def pair_matrix(self, subset: Optional[Sequence[int]] = None) -> np.ndarray:
        """Stacked (pairs x probes) distances, optionally restricted to probe columns."""
        matrix = np.vstack([d for d in self.distances]) if self.distances else np.zeros((0, self.probe_count))
        if subset is not None:
            matrix = matrix[:, list(subset)]
        return matrix

    def history_index(self, history: History) -> Tuple[int, int]:
        """(depth, position) of a history in the lexicographic layer order."""
        index = 0
        for o in history:
            if not 0 <= o < self.pomdp.observation_count:
                raise ValueError(f"observation {o} out of range in history {history}")
            index = index * self.pomdp.observation_count + o
        return len(history), index

    def pair_position(self, depth: int, i: int, j: int) -> int:
        """Row of pair (i, j), i < j, within its depth's distance array."""
        n = len(self.layers[depth])
        return i * n - i * (i + 1) // 2 + (j - i - 1)

    def reachable(self, depth: int) -> np.ndarray:
        """Histories reachable under at least one probe."""
        return self.reach[depth].any(axis=1)

    def depth_matrix(self, depth: int, subset: Optional[Sequence[int]] = None) -> np.ndarray:
        """Symmetric matrix of history distances at one depth."""
        n = len(self.layers[depth])
        values = self.distances[depth]
        if subset is not None:
            values = values[:, list(subset)]
        envelope = values.max(axis=1) if values.shape[1] else np.zeros(values.shape[0])
        matrix = np.zeros((n, n))
        rows, cols = self.pair_indices(depth)
        matrix[rows, cols] = envelope
        matrix[cols, rows] = envelope
        return matrix


def _column_for_probe(pomdp: Pomdp, fsc: Controller, layers: List[List[History]],
                      horizon: int, metric: GroundMetric):
    """Distances, qualification and reach for every pair under one probe."""
    distances, qualified, reach_flags = [], [], []
    tree = filtered_tree(pomdp, fsc, horizon)

    for depth, histories in enumerate(layers):
        laws = [expand(pomdp, fsc, f.joint, depth, horizon) if f.reachable else None for f in tree[depth]]
        flags = np.array([law is not None for law in laws])
        rows, cols = np.triu_indices(len(histories), k=1)
        column = np.zeros(rows.size)
        ok = flags[rows] & flags[cols]
        for k in np.flatnonzero(ok):
            column[k] = w1_between(laws[rows[k]], laws[cols[k]], metric)
        distances.append(column)
        qualified.append(ok)
        reach_flags.append(flags)
    return distances, qualified, reach_flags


async def _gather_columns(task: Callable, jobs: List[tuple], workers: int) -> list:
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run(args):
        async with semaphore:
            return await asyncio.to_thread(task, *args)

    return await asyncio.gather(*(run(args) for args in jobs))


def run_columns(task: Callable, jobs: List[tuple], serial: bool, workers: int = WORKERS) -> list:
    """Evaluate one probe column per job, in order, serially or on worker threads."""
    if serial:
        return [task(*args) for args in jobs]
    return asyncio.run(_gather_columns(task, jobs, workers))


def guard_cache_size(tag: str, layers: List[List[History]], probes: int, cap: int) -> int:
    """
    Raises:
        SizeGuardError: more than `cap` pair-probe entries
    """
    pairs = sum(len(layer) * (len(layer) - 1) // 2 for layer in layers)
    entries = pairs * probes
    if entries > cap:
        raise SizeGuardError(
            f"[{tag}] cache needs {entries:,} entries ({pairs:,} pairs x {probes:,} probes), "
            f"above the cap of {cap:,}; use a layered plan, a greedy probe subset or sampling"
        )
    return pairs


def build_cache(
    pomdp: Pomdp,
    family: ProbeFamily,
    horizon: int,
    metric: Optional[GroundMetric] = None,
    serial: Optional[bool] = None,
    workers: int = WORKERS,
    cap: int = CACHE_CAP,
    benchmark_id: str = "",
) -> DistanceCache:
    """
    Exact W1 between suffix laws for every equal-depth history pair and probe.

    Args:
        pomdp: The model
        family: Probe family (clock-aware families must match the horizon)
        horizon: Final step T
        metric: Ground metric; defaults to the model's
        serial: Evaluate probes one after another instead of on a thread pool
        workers: Thread pool width for the parallel path
        cap: Maximum number of pair-probe entries
        benchmark_id: Label carried into artifacts

    Returns:
        DistanceCache whose content does not depend on the evaluation order

    Raises:
        SizeGuardError: more than `cap` pair-probe entries
    """
    family.check_horizon(horizon, exact=True)
    for fsc in family:
        check_compatible(pomdp, fsc, horizon)
    metric = metric or metric_from_id(pomdp.ground_metric_id, pomdp.observation_count)
    serial = SERIAL_DEFAULT if serial is None else serial
    tag = benchmark_id or pomdp.name

    layers = history_tree(pomdp, horizon)
    pairs = guard_cache_size(tag, layers, len(family), cap)

    start = time.time()
    jobs = [(pomdp, fsc, layers, horizon, metric) for fsc in family]
    columns = run_columns(_column_for_probe, jobs, serial, workers)

    depths = range(len(layers))
    cache = DistanceCache(
        pomdp=pomdp,
        family=family,
        horizon=horizon,
        metric=metric,
        layers=layers,
        distances=[np.column_stack([c[0][d] for c in columns]) for d in depths],
        qualified=[np.column_stack([c[1][d] for c in columns]) for d in depths],
        reach=[np.column_stack([c[2][d] for c in columns]) for d in depths],
        benchmark_id=benchmark_id,
    )
    logger.info(f"[{tag}] cache built in {time.time() - start:.1f}s: "
                f"{pairs} pairs x {len(family)} probes ({'serial' if serial else 'parallel'})")
    return cache


def history_distance(cache: DistanceCache, h: History, h_other: History) -> float:
    """Max over probes reaching both histories of the suffix-law W1; 0 if none qualifies."""
    if len(h) != len(h_other):
        raise ValueError(f"histories of different depth: {len(h)} vs {len(h_other)}")
    depth, i = cache.history_index(h)
    _, j = cache.history_index(h_other)
    if i == j:
        return 0.0
    i, j = min(i, j), max(i, j)
    row = cache.distances[depth][cache.pair_position(depth, i, j)]
    return float(row.max()) if row.size else 0.0


def _alphabet(model) -> Tuple[int, int]:
    return model.action_count, model.observation_count


def law_of(model, fsc: Controller, horizon: int) -> DiscreteDistribution:
    """Full-horizon observation law of a Pomdp or any object exposing observation_law."""
    if isinstance(model, Pomdp):
        return observation_law(model, fsc, horizon)
    return model.observation_law(fsc, horizon)


def probe_distances(model_a, model_b, family: ProbeFamily, horizon: int,
                    metric: Optional[GroundMetric] = None) -> np.ndarray:
    """W1 between the two models' observation laws, one entry per probe."""
    if _alphabet(model_a) != _alphabet(model_b):
        raise AlphabetMismatchError(
            f"models disagree on (|A|, |O|): {_alphabet(model_a)} vs {_alphabet(model_b)}"
        )
    family.check_horizon(horizon)
    metric = metric or metric_from_id(model_a.ground_metric_id, model_a.observation_count)
    return np.array([
        w1_between(law_of(model_a, fsc, horizon), law_of(model_b, fsc, horizon), metric)
        for fsc in family
    ])


def model_distance(model_a, model_b, family: ProbeFamily, horizon: int,
                   metric: Optional[GroundMetric] = None) -> float:
    """sup over the family of W1 between full-horizon observation laws."""
    return float(probe_distances(model_a, model_b, family, horizon, metric).max())


@dataclass(frozen=True, eq=False)
class ProbeEnvelope:
    """Per-pair maxima over a probe set, in pair-matrix row order."""
    values: np.ndarray
    subset: Optional[Tuple[int, ...]]


def envelope(cache: DistanceCache, subset: Optional[Sequence[int]] = None) -> ProbeEnvelope:
    """Rowwise maxima over `subset` (the full family when None)."""
    if subset is not None:
        subset = tuple(int(p) for p in subset)
        for p in subset:
            if not 0 <= p < cache.probe_count:
                raise IndexError(f"probe index {p} out of range for {cache.probe_count} probes")
    matrix = cache.pair_matrix(subset)
    values = matrix.max(axis=1) if matrix.shape[1] else np.zeros(matrix.shape[0])
    return ProbeEnvelope(values=values, subset=subset)


def delta_s(cache: DistanceCache, subset: Sequence[int]) -> float:
    """‖d − d_S‖_∞ between the full and subset envelopes."""
    full = envelope(cache).values
    if full.size == 0:
        return 0.0
    partial = envelope(cache, subset).values
    return float(max(0.0, (full - partial).max()))


@dataclass(frozen=True)
class CrossFamilyGap:
    """Sup-norm gap between a richer and a poorer family's envelopes."""
    delta: float
    per_depth: Dict[int, float]
    min_gap: float


def delta_cross_family(cache_rich: DistanceCache, cache_poor: DistanceCache) -> CrossFamilyGap:
    """
    max over pairs of (rich envelope − poor envelope), clamped at 0.

    This is the definitional gap. Family comparison tables report
    `mirror_distance` of the rich cache beside it.

    Raises:
        ValueError: the caches cover different histories
    """
    if cache_rich.layers != cache_poor.layers or cache_rich.horizon != cache_poor.horizon:
        raise ValueError("caches cover different history trees")

    per_depth = {}
    min_gap = 0.0
    for depth in range(len(cache_rich.layers)):
        rich = cache_rich.distances[depth].max(axis=1) if cache_rich.distances[depth].size else np.zeros(0)
        poor = cache_poor.distances[depth].max(axis=1) if cache_poor.distances[depth].size else np.zeros(0)
        gap = rich - poor
        if gap.size == 0:
            continue
        min_gap = min(min_gap, float(gap.min()))
        per_depth[depth] = max(0.0, float(gap.max()))
    if min_gap < -CLAMP_TOLERANCE:
        logger.warning(f"Poorer family exceeds the richer one by {-min_gap:.3g}; it is not a subfamily")
    delta = max(per_depth.values()) if per_depth else 0.0
    return CrossFamilyGap(delta=delta, per_depth=per_depth, min_gap=min_gap)


def mirror_distance(cache: DistanceCache, depth: int) -> float:
    """History distance between the all-first-symbol and all-last-symbol histories of a depth."""
    if depth < 1:
        return 0.0
    last = cache.pomdp.observation_count - 1
    return history_distance(cache, (0,) * depth, (last,) * depth)


def perturb_kernels(pomdp: Pomdp, delta: float, seed: int) -> Pomdp:
    """
    Shift every transition and observation entry by at most `delta`.

    Zero-mean noise per row is shrunk where needed so rows stay nonnegative.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"perturbation size must be in [0, 1), got {delta}")
    rng = np.random.default_rng(seed)

    def shift(kernel: np.ndarray) -> np.ndarray:
        noise = rng.uniform(-delta / 2, delta / 2, size=kernel.shape)
        noise -= noise.mean(axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(noise < 0, kernel / -noise, np.inf)
        scale = np.minimum(1.0, room.min(axis=-1, keepdims=True))
        shifted = np.clip(kernel + scale * noise, 0.0, None)
        return shifted / shifted.sum(axis=-1, keepdims=True)

    return Pomdp(
        name=f"{pomdp.name}~{delta:g}",
        states=pomdp.states,
        actions=pomdp.actions,
        observations=pomdp.observations,
        transition=shift(pomdp.transition),
        observation=shift(pomdp.observation),
        reward=pomdp.reward,
        initial_belief=pomdp.initial_belief,
        ground_metric_id=pomdp.ground_metric_id,
    )


@dataclass(frozen=True)
class PerturbationCheck:
    observed_shift: float
    bound: float
    holds: bool


def perturb_and_bound(pomdp: Pomdp, family: ProbeFamily, horizon: int,
                      metric: Optional[GroundMetric], delta: float, seed: int,
                      target=None) -> PerturbationCheck:
    """
    Compare D(M̂, Q) with D(M, Q) for a kernel perturbation of size delta.

    Args:
        target: Quotient (or any law source) to measure against; defaults to the
            exact quotient of the unperturbed model

    Returns:
        PerturbationCheck with |D(M̂, Q) − D(M, Q)| and the bound 4·T·delta
    """
    if target is None:
        from .quotient import build_quotient, exact_partition

        cache = build_cache(pomdp, family, horizon, metric, serial=True)
        target = build_quotient(pomdp, exact_partition(cache))
    perturbed = perturb_kernels(pomdp, delta, seed)
    base = model_distance(pomdp, target, family, horizon, metric)
    moved = model_distance(perturbed, target, family, horizon, metric)
    shift = abs(moved - base)
    bound = 4.0 * horizon * delta
    holds = shift <= bound + 1e-12
    if not holds:
        logger.error(f"[{pomdp.name}] perturbation shift {shift:.4f} exceeds 4T·δ = {bound:.4f}")
    return PerturbationCheck(observed_shift=shift, bound=bound, holds=holds)
