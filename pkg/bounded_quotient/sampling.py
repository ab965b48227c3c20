"""Trajectory-sampled suffix laws, sampled caches, bootstrap intervals and stability protocols."""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import CACHE_CAP, SERIAL_DEFAULT, WORKERS
from .model import History, Pomdp, history_tree
from .probes import Controller, ProbeFamily, SuffixLaw, check_compatible, closed_loop_belief, filtered_tree
from .pseudometric import DistanceCache, build_cache, guard_cache_size, run_columns
from .quotient import adjusted_rand_index, eps_partition
from .schemas import SamplingConfig
from .transport import DiscreteDistribution, GroundMetric, metric_from_id, w1_between

logger = logging.getLogger("bounded-quotient.sampling")

CONVERGENCE_SIZES = (50, 100, 250, 500, 1000)
CONVERGENCE_REPLICATIONS = 5
CONVERGENCE_EPSILONS = (0.0, 0.3, 0.5)


def _draw(rng: np.random.Generator, probabilities: np.ndarray) -> np.ndarray:
    """One categorical draw per row by inverse CDF."""
    u = rng.random(probabilities.shape[0])
    index = (np.cumsum(probabilities, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(index, probabilities.shape[1] - 1)


def simulate_suffixes(pomdp: Pomdp, fsc: Controller, joint: np.ndarray, start: int, horizon: int,
                      n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Sample n suffixes o_{start+1..horizon} from a filtered joint (node, state) belief.

    Returns:
        Integer codes, each suffix read as a base-|O| number
    """
    n_nodes, n_s = joint.shape
    flat = rng.choice(n_nodes * n_s, size=n, p=joint.ravel() / joint.sum())
    nodes, states = np.divmod(flat, n_s)
    codes = np.zeros(n, dtype=np.int64)
    for stage in range(start, horizon):
        actions = _draw(rng, fsc.action_matrix(stage)[nodes])
        states = _draw(rng, pomdp.transition[actions, states])
        observations = _draw(rng, pomdp.observation[actions, states])
        nodes = _draw(rng, fsc.transition_tensor(stage)[nodes, observations])
        codes = codes * pomdp.observation_count + observations
    return codes


def law_from_codes(codes: np.ndarray, length: int, observation_count: int) -> DiscreteDistribution:
    """Empirical distribution of encoded suffixes."""
    values, counts = np.unique(codes, return_counts=True)
    powers = observation_count ** np.arange(length - 1, -1, -1)
    digits = (values[:, None] // powers[None, :]) % observation_count if length else np.zeros((values.size, 0), int)
    support = tuple(tuple(int(o) for o in row) for row in digits)
    return DiscreteDistribution(support, counts / counts.sum())


def empirical_suffix_law(pomdp: Pomdp, fsc: Controller, history: History, n: int, seed,
                         horizon: Optional[int] = None) -> SuffixLaw:
    """
    Empirical suffix law from n trajectories started in the filtered belief of `history`.

    Args:
        horizon: Final step; defaults to a clock-aware controller's own horizon

    Returns:
        SuffixLaw whose distribution is None when the history is unreachable
    """
    if n < 1:
        raise ValueError(f"need at least one trajectory, got {n}")
    horizon = horizon if horizon is not None else fsc.horizon
    if horizon is None:
        raise ValueError("a horizon is required for controllers without one")
    check_compatible(pomdp, fsc, horizon)
    filtered = closed_loop_belief(pomdp, fsc, history)
    if not filtered.reachable:
        return SuffixLaw(None, 0.0)
    rng = np.random.default_rng(seed)
    codes = simulate_suffixes(pomdp, fsc, filtered.joint, len(history), horizon, n, rng)
    return SuffixLaw(law_from_codes(codes, horizon - len(history), pomdp.observation_count), filtered.reach)


def _sampled_column(pomdp: Pomdp, fsc: Controller, probe: int, layers: List[List[History]],
                    horizon: int, metric: GroundMetric, n: int, seed: int):
    distances, qualified, reach_flags = [], [], []
    samples: Dict[Tuple[int, int, int], np.ndarray] = {}
    tree = filtered_tree(pomdp, fsc, horizon)
    n_o = pomdp.observation_count

    for depth, histories in enumerate(layers):
        laws = []
        for i, belief in enumerate(tree[depth]):
            if not belief.reachable:
                laws.append(None)
                continue
            rng = np.random.default_rng([seed, depth, i, probe])
            codes = simulate_suffixes(pomdp, fsc, belief.joint, depth, horizon, n, rng)
            samples[(depth, i, probe)] = codes
            laws.append(law_from_codes(codes, horizon - depth, n_o))
        flags = np.array([law is not None for law in laws])
        rows, cols = np.triu_indices(len(histories), k=1)
        column = np.zeros(rows.size)
        ok = flags[rows] & flags[cols]
        for k in np.flatnonzero(ok):
            column[k] = w1_between(laws[rows[k]], laws[cols[k]], metric)
        distances.append(column)
        qualified.append(ok)
        reach_flags.append(flags)
    return distances, qualified, reach_flags, samples


def sampled_cache(
    pomdp: Pomdp,
    family: ProbeFamily,
    horizon: int,
    metric: Optional[GroundMetric] = None,
    config: Optional[SamplingConfig] = None,
    serial: Optional[bool] = None,
    workers: int = WORKERS,
    cap: int = CACHE_CAP,
    benchmark_id: str = "",
) -> DistanceCache:
    """
    Distance cache built from empirical suffix laws.

    Every (depth, history, probe) draws from its own generator seeded by
    (master seed, depth, history index, probe index), so serial and parallel
    builds agree exactly. Raw suffix codes are kept for bootstrapping.

    Raises:
        SizeGuardError: more than `cap` pair-probe entries
    """
    config = config or SamplingConfig()
    family.check_horizon(horizon, exact=True)
    for fsc in family:
        check_compatible(pomdp, fsc, horizon)
    metric = metric or metric_from_id(pomdp.ground_metric_id, pomdp.observation_count)
    serial = SERIAL_DEFAULT if serial is None else serial
    tag = benchmark_id or pomdp.name

    layers = history_tree(pomdp, horizon)
    pairs = guard_cache_size(tag, layers, len(family), cap)
    start = time.time()
    jobs = [(pomdp, fsc, p, layers, horizon, metric, config.trajectories, config.seed)
            for p, fsc in enumerate(family)]
    columns = run_columns(_sampled_column, jobs, serial, workers)

    samples: Dict[Tuple[int, int, int], np.ndarray] = {}
    for column in columns:
        samples.update(column[3])
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
        samples=samples,
    )
    logger.info(f"[{tag}] sampled cache built in {time.time() - start:.1f}s: {pairs} pairs x "
                f"{len(family)} probes, {config.trajectories} trajectories, seed {config.seed}")
    return cache


def max_w1(cache: DistanceCache, samples: Dict[Tuple[int, int, int], np.ndarray]) -> float:
    """Max over qualified pairs and probes of W1 between the laws of the given suffix samples."""
    n_o = cache.pomdp.observation_count
    best = 0.0
    for depth, layer in enumerate(cache.layers):
        rows, cols = cache.pair_indices(depth)
        length = cache.horizon - depth
        for p in range(cache.probe_count):
            laws: Dict[int, DiscreteDistribution] = {}
            for k in np.flatnonzero(cache.qualified[depth][:, p]):
                i, j = int(rows[k]), int(cols[k])
                for h in (i, j):
                    if h not in laws:
                        laws[h] = law_from_codes(samples[(depth, h, p)], length, n_o)
                best = max(best, w1_between(laws[i], laws[j], cache.metric))
    return best


def bootstrap_ci_max_w1(cache: DistanceCache, resamples: int, confidence: float = 0.95,
                        seed: int = 0) -> Tuple[float, float]:
    """
    Percentile bootstrap interval for the max-over-pairs W1 of a sampled cache.

    Args:
        cache: Cache built by sampled_cache (raw samples retained)
        resamples: Number of bootstrap replicates
        confidence: Two-sided confidence level
        seed: Seed for the resampling generator

    Returns:
        (low, high) percentile bounds
    """
    if cache.samples is None:
        raise ValueError("bootstrap needs a sampled cache with raw samples")
    if resamples < 1:
        raise ValueError(f"resamples must be >= 1, got {resamples}")
    keys = sorted(cache.samples)
    statistics = np.empty(resamples)
    for b in range(resamples):
        rng = np.random.default_rng([seed, b])
        replicate = {}
        for key in keys:
            codes = cache.samples[key]
            replicate[key] = codes[rng.integers(0, codes.size, size=codes.size)]
        statistics[b] = max_w1(cache, replicate)
    alpha = 1.0 - confidence
    low, high = np.percentile(statistics, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(low), float(high)


@dataclass(frozen=True)
class CoverageResult:
    trajectories: int
    coverage: float
    mean_width: float
    replications: int


def bootstrap_coverage(pomdp: Pomdp, family: ProbeFamily, horizon: int, metric: Optional[GroundMetric],
                       config: SamplingConfig, replications: int) -> CoverageResult:
    """Fraction of percentile intervals covering the exact max W1, and their mean width."""
    exact = build_cache(pomdp, family, horizon, metric, serial=True).pair_matrix()
    target = float(exact.max()) if exact.size else 0.0
    covered, widths = 0, []
    for r in range(replications):
        replicate = config.model_copy(update={"seed": config.seed + r})
        cache = sampled_cache(pomdp, family, horizon, metric, replicate, serial=True)
        low, high = bootstrap_ci_max_w1(cache, config.resamples, config.confidence, seed=replicate.seed)
        covered += int(low <= target <= high)
        widths.append(high - low)
    return CoverageResult(
        trajectories=config.trajectories,
        coverage=covered / replications,
        mean_width=float(np.mean(widths)),
        replications=replications,
    )


def convergence(pomdp: Pomdp, family: ProbeFamily, horizon: int, metric: Optional[GroundMetric] = None,
                sizes: Sequence[int] = CONVERGENCE_SIZES, replications: int = CONVERGENCE_REPLICATIONS,
                epsilons: Sequence[float] = CONVERGENCE_EPSILONS, seed: int = 0) -> List[dict]:
    """ARI of sampled against exact partitions over trajectory counts and epsilon."""
    exact = build_cache(pomdp, family, horizon, metric, serial=True)
    reference = {eps: eps_partition(exact, eps) for eps in epsilons}
    scores = {(n, eps): [] for n in sizes for eps in epsilons}
    for n in sizes:
        for r in range(replications):
            config = SamplingConfig(trajectories=n, seed=seed + r)
            cache = sampled_cache(pomdp, family, horizon, metric, config, serial=True)
            for eps in epsilons:
                scores[(n, eps)].append(adjusted_rand_index(eps_partition(cache, eps), reference[eps]))
    return [
        {"trajectories": n, "epsilon": eps, "mean_ari": float(np.mean(values)),
         "min_ari": float(np.min(values)), "reps": replications}
        for (n, eps), values in scores.items()
    ]


def seed_stability(pomdp: Pomdp, family: ProbeFamily, horizon: int, metric: Optional[GroundMetric],
                   config: SamplingConfig, epsilons: Sequence[float], exact: bool = False) -> List[dict]:
    """
    Class-count statistics across the configured seeds.

    With exact=True the exact cache stands in for every seed.
    """
    counts = {eps: [] for eps in epsilons}
    exact_cache = build_cache(pomdp, family, horizon, metric, serial=True) if exact else None
    for seed in config.seeds:
        cache = exact_cache or sampled_cache(pomdp, family, horizon, metric,
                                             config.model_copy(update={"seed": seed}), serial=True)
        for eps in epsilons:
            counts[eps].append(eps_partition(cache, eps).class_count)
    return [
        {"epsilon": eps, "mean": float(np.mean(values)), "std": float(np.std(values)),
         "min": int(np.min(values)), "max": int(np.max(values))}
        for eps, values in counts.items()
    ]
