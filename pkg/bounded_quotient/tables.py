"""Table registry, table builders and the artifact verifier."""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .benchmarks import make_benchmark, tiger_full
from .errors import ConfigError, VerificationError
from .layered import (
    apply_wrapper,
    build_horizon_plan,
    check_data_processing,
    quadrant_merge,
    run_layered,
)
from .model import Pomdp, history_count
from .planning import (
    action_observation_objective,
    check_exact_sufficiency,
    check_value_bound,
    compare_pbvi,
    exhaustive_search,
    latent_objective,
    observation_objective,
    policy_value,
)
from .probes import ProbeFamily, describe, enumerate_family
from .pseudometric import (
    DistanceCache,
    build_cache,
    delta_cross_family,
    history_distance,
    mirror_distance,
    model_distance,
    perturb_and_bound,
)
from .quotient import (
    Partition,
    adjusted_rand_index,
    belief_partition,
    build_quotient,
    eps_partition,
    exact_partition,
    random_partition,
    truncation_partition,
)
from .sampling import bootstrap_coverage, convergence, sampled_cache, seed_stability
from .schemas import FamilySpec, RunConfig
from .selection import effective_rank, greedy_select, hankel_rank
from .storage import artifact_path, config_hash, ensure_dir, read_table, write_table
from .transport import GroundMetric, metric_from_id

logger = logging.getLogger("bounded-quotient.tables")

DEFAULT_EPSILONS = [0.0, 0.1, 0.25, 0.5, 1.0]
SENSITIVITY_BELIEFS = [0.1, 0.2, 0.3, 0.4, 0.5]
TIGER_ACCURACIES = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95]
STOCHASTIC_SEEDS = [7, 42, 123, 256, 999]
PERTURBATION_DELTAS = [0.01, 0.05]


def _benchmark(config: RunConfig, default: str) -> Tuple[Pomdp, str]:
    spec = config.benchmark_spec(default)
    return make_benchmark(spec), spec.to_string()


def _epsilons(config: RunConfig, default: Sequence[float]) -> List[float]:
    return list(default) if config.epsilons is None else list(config.epsilons)


def _horizons(config: RunConfig, quick: Sequence[int], full: Sequence[int]) -> List[int]:
    if config.horizons is not None:
        return list(config.horizons)
    return list(quick if config.profile == "quick" else full)


def _metric(config: RunConfig, pomdp: Pomdp) -> Optional[GroundMetric]:
    return metric_from_id(config.metric, pomdp.observation_count) if config.metric else None


def _stationary(config: RunConfig, memory: Optional[int] = None) -> FamilySpec:
    if memory is None:
        memory = config.family.memory if config.family.kind == "stationary" else 1
    return FamilySpec(kind="stationary", memory=memory, seed=config.seed)


def _clock_aware(memory: int = 1) -> FamilySpec:
    return FamilySpec(kind="clock-aware", memory=memory)


def _cache(pomdp: Pomdp, spec: FamilySpec, horizon: int, config: RunConfig,
           benchmark_id: str, sampled: bool = False) -> DistanceCache:
    family = enumerate_family(spec, pomdp, horizon)
    metric = _metric(config, pomdp)
    if sampled:
        return sampled_cache(pomdp, family, horizon, metric, config.sampling, serial=config.serial,
                             benchmark_id=benchmark_id)
    return build_cache(pomdp, family, horizon, metric, serial=config.serial, benchmark_id=benchmark_id)


def _timed(task: Callable, *args, **kwargs) -> Tuple[Any, float]:
    start = time.perf_counter()
    result = task(*args, **kwargs)
    return result, time.perf_counter() - start


def _labels(family: ProbeFamily, indices: Sequence[int], pomdp: Pomdp) -> str:
    return "; ".join(describe(family[p], pomdp) for p in indices)


def probe_family_comparison(config: RunConfig) -> List[dict]:
    """
    Operational against clock-aware exact partitions over horizons.

    `mirror_distance` is the clock-aware distance between the all-left and all-right
    histories at depth T/2 and is the column that carries the Tiger reference values 0.49,
    1.3154 and 2.0770 at T = 2, 4, 6. `delta_clk` is the cross-family envelope gap
    itself, which is 0, 0.98 and 1.96 there.
    """
    pomdp, bench = _benchmark(config, "tiger-full")
    rows = []
    for horizon in _horizons(config, [2, 4], [2, 4, 6]):
        op, op_time = _timed(_cache, pomdp, _stationary(config), horizon, config, bench)
        clk, clk_time = _timed(_cache, pomdp, _clock_aware(), horizon, config, bench)
        op_partition, clk_partition = exact_partition(op), exact_partition(clk)
        rows.append({
            "benchmark": bench,
            "horizon": horizon,
            "histories": history_count(pomdp.observation_count, horizon),
            "op_probes": op.probe_count,
            "clk_probes": clk.probe_count,
            "op_classes": op_partition.class_count,
            "clk_classes": clk_partition.class_count,
            "delta_clk": delta_cross_family(clk, op).delta,
            "mirror_distance": mirror_distance(clk, horizon // 2),
            "ari": adjusted_rand_index(op_partition, clk_partition),
            "op_time": op_time,
            "clk_time": clk_time,
        })
    return rows


def observation_planning(config: RunConfig) -> List[dict]:
    """Exact sufficiency of the clock-aware exact quotient for observation objectives."""
    pomdp, bench = _benchmark(config, "tiger-full")
    rows = []
    for horizon in _horizons(config, [2, 4], [2, 4, 6]):
        cache = _cache(pomdp, _clock_aware(), horizon, config, bench)
        quotient = build_quotient(pomdp, exact_partition(cache))
        for objective in (observation_objective(pomdp), action_observation_objective(pomdp)):
            deviation = check_exact_sufficiency(pomdp, quotient, cache.family, objective)
            result = exhaustive_search(quotient, cache.family, objective, horizon)
            rows.append({
                "benchmark": bench,
                "objective": objective.name,
                "horizon": horizon,
                "histories": history_count(pomdp.observation_count, horizon),
                "classes": quotient.class_count,
                "policy": result.policy,
                "quotient_value": result.value,
                "original_value": result.original_value,
                "optimal_value": result.optimal_value,
                "regret": result.regret,
                "max_deviation": deviation,
                "search_time": result.search_time,
                "evaluation_time": result.evaluation_time,
            })
    return rows


def latent_planning(config: RunConfig) -> List[dict]:
    """Best open-loop policy under the latent reward, beside the all-listen value."""
    pomdp, bench = _benchmark(config, "tiger-full")
    objective = latent_objective(pomdp)
    rows = []
    for horizon in _horizons(config, [2, 4], [2, 4, 6]):
        family = enumerate_family(_clock_aware(), pomdp, horizon)
        result = exhaustive_search(pomdp, family, objective, horizon)
        # member 0 repeats action 0 at every step
        rows.append({
            "benchmark": bench,
            "horizon": horizon,
            "policy": result.policy,
            "value": result.value,
            "first_action_policy": describe(family[0], pomdp),
            "first_action_value": policy_value(pomdp, family[0], objective, horizon),
            "search_time": result.search_time,
        })
    return rows


def partition_agreement(config: RunConfig) -> List[dict]:
    """Greedy probe subsets: certificate δ_S, coverage and agreement with the full partition."""
    pomdp, bench = _benchmark(config, "tiger-full")
    horizon = config.horizons[0] if config.horizons else 4
    cache = _cache(pomdp, _stationary(config, memory=max(2, config.family.memory)), horizon, config, bench)
    full = exact_partition(cache)
    rows = []
    for k in config.subset_sizes:
        k = min(k, cache.probe_count)
        selection, runtime = _timed(greedy_select, cache, k)
        subset = eps_partition(cache, 0.0, subset=selection.indices)
        rows.append({
            "benchmark": bench,
            "horizon": horizon,
            "k": k,
            "probes": _labels(cache.family, selection.indices, pomdp),
            "delta_s": selection.delta_s,
            "coverage": selection.coverage[-1],
            "subset_classes": subset.class_count,
            "full_classes": full.class_count,
            "ari": adjusted_rand_index(subset, full),
            "selection_time": runtime,
        })
    return rows


def medium_scale(config: RunConfig) -> List[dict]:
    """Class counts of the larger benchmarks at T=2."""
    config.check_tier()
    names = [config.benchmark] if config.benchmark else ["gridworld:3", "rocksample:4,4", "network:4", "hallway:5"]
    sampled = config.tier == "op-sampling"
    horizon = config.horizons[0] if config.horizons else 2
    rows = []
    for name in names:
        pomdp, bench = _benchmark(config.model_copy(update={"benchmark": name}), name)
        spec = config.family if config.family.kind != "stationary" else _stationary(config)
        cache, runtime = _timed(_cache, pomdp, spec, horizon, config, bench, sampled)
        for eps in _epsilons(config, [0.0, 0.3, 0.5]):
            rows.append({
                "benchmark": bench,
                "states": pomdp.state_count,
                "actions": pomdp.action_count,
                "observations": pomdp.observation_count,
                "horizon": horizon,
                "histories": history_count(pomdp.observation_count, horizon),
                "probes": cache.probe_count,
                "mode": "sampling" if sampled else "exact",
                "epsilon": eps,
                "classes": eps_partition(cache, eps).class_count,
                "cache_time": runtime,
            })
    return rows


def value_bounds(config: RunConfig) -> List[dict]:
    """Value gaps and regret of ε-quotients against L_R·T·ε and the canonical bound."""
    pomdp, bench = _benchmark(config, "tiger-full")
    horizon = config.horizons[0] if config.horizons else 2
    cache = _cache(pomdp, _stationary(config), horizon, config, bench)
    rows = []
    for eps in _epsilons(config, DEFAULT_EPSILONS):
        partition = eps_partition(cache, eps)
        quotient = build_quotient(pomdp, partition)
        for objective in (observation_objective(pomdp), latent_objective(pomdp)):
            report = check_value_bound(pomdp, quotient, cache.family, objective, eps)
            rows.append({
                "benchmark": bench,
                "horizon": horizon,
                "objective": objective.name,
                "lipschitz": objective.lipschitz,
                "epsilon": eps,
                "classes": partition.class_count,
                "distance": report.distance,
                "empirical_gap": report.empirical_gap,
                "bound": report.bound,
                "canonical_bound": report.canonical_bound,
                "effective_bound": report.effective_bound,
                "regret": report.regret,
                "regret_bound": report.regret_bound,
                "holds": report.holds,
            })
    return rows


def data_processing(config: RunConfig) -> List[dict]:
    """GridWorld quadrant merge: distances before and after the wrapper at each ε."""
    names = [config.benchmark] if config.benchmark else (
        ["gridworld:3"] if config.profile == "quick" else ["gridworld:3", "gridworld:5"])
    horizon = config.horizons[0] if config.horizons else 2
    rows = []
    for name in names:
        pomdp, bench = _benchmark(config.model_copy(update={"benchmark": name}), name)
        wrapper = quadrant_merge(pomdp)
        merged = apply_wrapper(pomdp, wrapper)
        spec = _stationary(config)
        cache = build_cache(pomdp, enumerate_family(spec, pomdp, horizon), horizon, wrapper.source_metric,
                            serial=config.serial, benchmark_id=bench)
        merged_cache = build_cache(merged, enumerate_family(spec, merged, horizon), horizon,
                                   wrapper.target_metric, serial=config.serial, benchmark_id=bench)
        pre = float(cache.pair_matrix().max()) if cache.pair_count else 0.0
        post = float(merged_cache.pair_matrix().max()) if merged_cache.pair_count else 0.0
        for eps in _epsilons(config, [0.0, 0.25, 0.5]):
            quotient = build_quotient(pomdp, eps_partition(cache, eps))
            check = check_data_processing(pomdp, quotient, wrapper, merged_cache.family, horizon)
            rows.append({
                "benchmark": bench,
                "wrapper": wrapper.name,
                "horizon": horizon,
                "epsilon": eps,
                "lipschitz": wrapper.lipschitz,
                "pre_max_distance": pre,
                "post_max_distance": post,
                "lhs": check.lhs,
                "rhs": check.rhs,
                "holds": check.holds,
            })
    return rows


def hierarchical_scaling(config: RunConfig) -> List[dict]:
    """Layered distortion ledger and history workload over (T, τ) plans."""
    pomdp, bench = _benchmark(config, "tiger-full")
    eps = _epsilons(config, [0.0])
    eps = eps[0] if eps else 0.0
    if config.horizons:
        plans = [(horizon, max(1, horizon // 2)) for horizon in config.horizons]
    else:
        plans = [(4, 2), (8, 4), (10, 5)] if config.profile == "quick" else [(4, 2), (6, 4), (8, 4), (10, 5)]
    rows = []
    for horizon, tau in plans:
        plan = build_horizon_plan(pomdp, horizon, tau, eps, _stationary(config), _metric(config, pomdp))
        result = run_layered(plan)
        for row in result.rows:
            rows.append({
                "benchmark": bench,
                "horizon": horizon,
                "segment_length": tau,
                "epsilon": eps,
                "layer": row.layer,
                "lipschitz": row.lipschitz,
                "residual": row.residual,
                "carry": row.carry,
                "gamma": row.gamma,
                "bound": row.bound,
                "empirical": row.empirical,
                "holds": row.holds,
                "histories_processed": result.histories_processed,
                "direct_histories": result.direct_histories,
                "runtime": row.runtime,
            })
    return rows


def sampling_variance(config: RunConfig) -> List[dict]:
    """Class-count spread across independent sampling seeds."""
    pomdp, bench = _benchmark(config, "gridworld:3")
    horizon = config.horizons[0] if config.horizons else 2
    family = enumerate_family(_stationary(config), pomdp, horizon)
    stats = seed_stability(pomdp, family, horizon, _metric(config, pomdp), config.sampling,
                           _epsilons(config, [0.0, 0.3, 0.5]))
    return [{"benchmark": bench, "horizon": horizon, "trajectories": config.sampling.trajectories,
             "seeds": len(config.sampling.seeds), **row} for row in stats]


def bootstrap_coverage_table(config: RunConfig) -> List[dict]:
    """Coverage of percentile intervals for the max pairwise W1."""
    pomdp, bench = _benchmark(config, "gridworld:3")
    quick = config.profile == "quick"
    horizon = config.horizons[0] if config.horizons else (1 if quick else 2)
    replications = 20 if quick else 200
    sampling = config.sampling.model_copy(update={"resamples": min(config.sampling.resamples, 200)}) \
        if quick else config.sampling
    family = enumerate_family(_stationary(config), pomdp, horizon)
    result, runtime = _timed(bootstrap_coverage, pomdp, family, horizon, _metric(config, pomdp), sampling,
                             replications)
    return [{
        "benchmark": bench,
        "horizon": horizon,
        "trajectories": result.trajectories,
        "replications": result.replications,
        "resamples": sampling.resamples,
        "confidence": sampling.confidence,
        "coverage": result.coverage,
        "mean_width": result.mean_width,
        "runtime": runtime,
    }]


def convergence_table(config: RunConfig) -> List[dict]:
    """ARI of sampled against exact partitions as the trajectory count grows."""
    pomdp, bench = _benchmark(config, "gridworld:3")
    horizon = config.horizons[0] if config.horizons else 2
    family = enumerate_family(_stationary(config), pomdp, horizon)
    kwargs = {"seed": config.sampling.seed}
    if config.epsilons is not None:
        kwargs["epsilons"] = config.epsilons
    rows = convergence(pomdp, family, horizon, _metric(config, pomdp), **kwargs)
    return [{"benchmark": bench, "horizon": horizon, **row} for row in rows]


def low_rank(config: RunConfig) -> List[dict]:
    """Effective rank of the pair-by-probe distance matrix and the Hankel rank."""
    if config.benchmark:
        targets = [(config.benchmark, config.horizons[0] if config.horizons else 2)]
    else:
        targets = [("tiger-full", 4), ("gridworld:3", 2)]
    memory = 1 if config.profile == "quick" else 2
    rows = []
    for name, horizon in targets:
        pomdp, bench = _benchmark(config.model_copy(update={"benchmark": name}), name)
        cache = _cache(pomdp, _stationary(config, memory=memory), horizon, config, bench)
        rows.append({
            "benchmark": bench,
            "horizon": horizon,
            "memory": memory,
            "probes": cache.probe_count,
            "pairs": cache.pair_count,
            "effective_rank": effective_rank(cache),
            "effective_rank_depth": effective_rank(cache, depth=horizon - 1),
            "hankel_rank": hankel_rank(pomdp, horizon),
        })
    return rows


def belief_sensitivity(pomdp: Pomdp, beliefs: Sequence[Sequence[float]], epsilons: Sequence[float],
                       family_spec: FamilySpec, horizon: int, reference: Optional[Sequence[float]] = None,
                       metric: Optional[GroundMetric] = None) -> List[dict]:
    """
    Class counts for each initial belief and ARI against the reference-belief partition.

    Args:
        pomdp: Base model
        beliefs: Initial beliefs to try
        epsilons: Merge thresholds
        family_spec: Probe family
        horizon: Final step T
        reference: Reference initial belief; uniform when omitted

    Returns:
        One record per (belief, epsilon)
    """
    if reference is None:
        reference = np.full(pomdp.state_count, 1.0 / pomdp.state_count)
    base = pomdp.with_initial_belief(reference)
    family = enumerate_family(family_spec, base, horizon)
    base_cache = build_cache(base, family, horizon, metric, serial=True)
    base_partitions = {eps: eps_partition(base_cache, eps) for eps in epsilons}

    rows = []
    for index, belief in enumerate(beliefs):
        model = pomdp.with_initial_belief(belief)
        cache = build_cache(model, family, horizon, metric, serial=True)
        for eps in epsilons:
            partition = eps_partition(cache, eps)
            rows.append({
                "index": index,
                "belief": " ".join(f"{p:g}" for p in np.asarray(belief, dtype=float)),
                "epsilon": eps,
                "classes": partition.class_count,
                "reference_classes": base_partitions[eps].class_count,
                "ari": adjusted_rand_index(partition, base_partitions[eps]),
            })
    return rows


def belief_sensitivity_table(config: RunConfig) -> List[dict]:
    """Tiger partitions under b0(tiger-left) in the sensitivity grid."""
    pomdp, bench = _benchmark(config, "tiger-full")
    horizon = config.horizons[0] if config.horizons else 2
    grid = [[p] + [(1 - p) / (pomdp.state_count - 1)] * (pomdp.state_count - 1) for p in SENSITIVITY_BELIEFS]
    rows = belief_sensitivity(pomdp, grid, _epsilons(config, [0.0, 0.3, 0.5]), _stationary(config),
                              horizon, metric=_metric(config, pomdp))
    return [{"benchmark": bench, "horizon": horizon, "initial_first": grid[row["index"]][0], **row} for row in rows]


def pbvi_comparison(config: RunConfig) -> List[dict]:
    """PBVI on each model and on its ε-quotient."""
    if config.benchmark:
        targets = [(config.benchmark, config.horizons[0] if config.horizons else 2)]
    else:
        targets = [("tiger-full", 3), ("gridworld:3", 2), ("rocksample:4,4", 2)]
    rows = []
    for name, horizon in targets:
        pomdp, bench = _benchmark(config.model_copy(update={"benchmark": name}), name)
        cache = _cache(pomdp, _stationary(config), horizon, config, bench)
        for eps in _epsilons(config, [0.0, 0.5]):
            rows.append({**compare_pbvi(pomdp, cache, eps), "benchmark": bench})
    return rows


def capacity_sweep(config: RunConfig) -> List[dict]:
    """Class counts over ε and controller memory."""
    config.check_tier()
    pomdp, bench = _benchmark(config, "tiger-full")
    horizon = config.horizons[0] if config.horizons else config.horizon
    memories = [1, 2] if config.profile == "quick" else [1, 2, 3]
    rows = []
    for memory in memories:
        spec = config.family.model_copy(update={"memory": memory})
        cache = _cache(pomdp, spec, horizon, config, bench, sampled=config.tier == "op-sampling")
        for eps in _epsilons(config, DEFAULT_EPSILONS):
            rows.append({"benchmark": bench, "horizon": horizon, "family": spec.kind, "memory": memory,
                         "probes": cache.probe_count, "epsilon": eps,
                         "classes": eps_partition(cache, eps).class_count})
    return rows


def noise_sensitivity(config: RunConfig) -> List[dict]:
    """Tiger class counts over listening accuracy."""
    horizon = config.horizons[0] if config.horizons else 2
    rows = []
    for accuracy in TIGER_ACCURACIES:
        pomdp = tiger_full(accuracy=accuracy)
        cache = _cache(pomdp, _stationary(config), horizon, config, f"tiger-full:accuracy={accuracy:g}")
        for eps in _epsilons(config, DEFAULT_EPSILONS):
            rows.append({"benchmark": "tiger-full", "accuracy": accuracy, "horizon": horizon, "epsilon": eps,
                         "classes": eps_partition(cache, eps).class_count})
    return rows


def metric_comparison(config: RunConfig) -> List[dict]:
    """W1 under the model's ground metric against TV (discrete metric) class counts."""
    pomdp, bench = _benchmark(config, "gridworld:3" if config.profile == "quick" else "gridworld:5")
    horizon = config.horizons[0] if config.horizons else 2
    family = enumerate_family(_stationary(config), pomdp, horizon)
    w1 = build_cache(pomdp, family, horizon, serial=config.serial, benchmark_id=bench)
    tv = build_cache(pomdp, family, horizon, GroundMetric.discrete(pomdp.observation_count),
                     serial=config.serial, benchmark_id=bench)
    return [
        {"benchmark": bench, "horizon": horizon, "metric": w1.metric.kind, "epsilon": eps,
         "w1_classes": eps_partition(w1, eps).class_count, "tv_classes": eps_partition(tv, eps).class_count}
        for eps in _epsilons(config, DEFAULT_EPSILONS)
    ]


def baseline_comparison(config: RunConfig) -> List[dict]:
    """Bounded quotient against truncation, random and belief-distance partitions."""
    pomdp, bench = _benchmark(config, "tiger-full")
    horizon = config.horizons[0] if config.horizons else 4
    cache = _cache(pomdp, _stationary(config), horizon, config, bench)
    exact = exact_partition(cache)
    rows = []
    for eps in _epsilons(config, [0.0, 0.5]):
        candidates: List[Tuple[str, Partition]] = [
            ("bounded-quotient", eps_partition(cache, eps)),
            ("truncation-1", truncation_partition(cache, 1)),
            ("random", random_partition(eps_partition(cache, eps), config.seed)),
            ("belief-l1", belief_partition(cache, eps)),
        ]
        for method, partition in candidates:
            quotient = build_quotient(pomdp, partition)
            rows.append({
                "benchmark": bench,
                "horizon": horizon,
                "epsilon": eps,
                "method": method,
                "classes": partition.class_count,
                "model_distance": model_distance(pomdp, quotient, cache.family, horizon, cache.metric),
                "ari_vs_exact": adjusted_rand_index(partition, exact),
            })
    return rows


def perturbation(config: RunConfig) -> List[dict]:
    """Shift of D(M̂, Q) under kernel perturbations against 4·T·δ."""
    pomdp, bench = _benchmark(config, "tiger-full")
    horizon = config.horizons[0] if config.horizons else 2
    family = enumerate_family(_stationary(config), pomdp, horizon)
    metric = _metric(config, pomdp)
    cache = build_cache(pomdp, family, horizon, metric, serial=True, benchmark_id=bench)
    target = build_quotient(pomdp, exact_partition(cache))
    seeds = range(5) if config.profile == "quick" else range(20)
    rows = []
    for delta in PERTURBATION_DELTAS:
        for seed in seeds:
            check = perturb_and_bound(pomdp, family, horizon, metric, delta, config.seed + seed, target)
            rows.append({"benchmark": bench, "horizon": horizon, "delta": delta, "seed": config.seed + seed,
                         "observed_shift": check.observed_shift, "bound": check.bound, "holds": check.holds})
    return rows


def stochastic_sanity(config: RunConfig) -> List[dict]:
    """Witness model: sampled stochastic controllers separate the two first observations."""
    pomdp, bench = _benchmark(config, "witness")
    horizon = config.horizons[0] if config.horizons else 3
    rows = []
    for seed in STOCHASTIC_SEEDS:
        spec = FamilySpec(kind="stochastic", memory=1, count=config.family.count, seed=seed)
        cache = _cache(pomdp, spec, horizon, config, bench)
        rows.append({
            "benchmark": bench,
            "horizon": horizon,
            "seed": seed,
            "probes": cache.probe_count,
            "witness_distance": history_distance(cache, (0,), (1,)),
            "max_distance": float(cache.pair_matrix().max()) if cache.pair_count else 0.0,
        })
    return rows


@dataclass(frozen=True)
class TableSpec:
    id: str
    title: str
    builder: Callable[[RunConfig], List[dict]]
    key_columns: Tuple[str, ...]
    columns: Tuple[str, ...]
    timing_columns: Tuple[str, ...] = ()
    profile: str = "quick"
    post_check: Optional[str] = None


TABLES: Dict[str, TableSpec] = {
    spec.id: spec for spec in [
        TableSpec("probe_family_comparison", "Operational vs clock-aware partitions", probe_family_comparison,
                  ("horizon",),
                  ("benchmark", "horizon", "histories", "op_probes", "clk_probes", "op_classes", "clk_classes",
                   "delta_clk", "mirror_distance", "ari"), ("op_time", "clk_time")),
        TableSpec("observation_planning", "Exact sufficiency for observation objectives", observation_planning,
                  ("objective", "horizon"),
                  ("benchmark", "objective", "horizon", "histories", "classes", "policy", "quotient_value",
                   "original_value", "optimal_value", "regret", "max_deviation"),
                  ("search_time", "evaluation_time")),
        TableSpec("latent_planning", "Latent-reward planning", latent_planning, ("horizon",),
                  ("benchmark", "horizon", "policy", "value", "first_action_policy", "first_action_value"),
                  ("search_time",)),
        TableSpec("partition_agreement", "Greedy probe subsets", partition_agreement, ("k",),
                  ("benchmark", "horizon", "k", "probes", "delta_s", "coverage", "subset_classes",
                   "full_classes", "ari"), ("selection_time",)),
        TableSpec("medium_scale", "Medium-scale class counts", medium_scale, ("benchmark", "epsilon"),
                  ("benchmark", "states", "actions", "observations", "horizon", "histories", "probes", "mode",
                   "epsilon", "classes"), ("cache_time",)),
        TableSpec("value_bounds", "Value and regret bounds", value_bounds, ("objective", "epsilon"),
                  ("benchmark", "horizon", "objective", "lipschitz", "epsilon", "classes", "distance",
                   "empirical_gap", "bound", "canonical_bound", "effective_bound", "regret", "regret_bound",
                   "holds"), profile="full"),
        TableSpec("data_processing", "Data-processing monotonicity", data_processing, ("benchmark", "epsilon"),
                  ("benchmark", "wrapper", "horizon", "epsilon", "lipschitz", "pre_max_distance",
                   "post_max_distance", "lhs", "rhs", "holds"), profile="full"),
        TableSpec("hierarchical_scaling", "Layered composition", hierarchical_scaling,
                  ("horizon", "segment_length", "layer"),
                  ("benchmark", "horizon", "segment_length", "epsilon", "layer", "lipschitz", "residual", "carry",
                   "gamma", "bound", "empirical", "holds", "histories_processed", "direct_histories"), ("runtime",)),
        TableSpec("sampling_variance", "Class counts across sampling seeds", sampling_variance, ("epsilon",),
                  ("benchmark", "horizon", "trajectories", "seeds", "epsilon", "mean", "std", "min", "max"),
                  profile="full"),
        TableSpec("bootstrap_coverage", "Bootstrap interval coverage", bootstrap_coverage_table, ("trajectories",),
                  ("benchmark", "horizon", "trajectories", "replications", "resamples", "confidence", "coverage",
                   "mean_width"), ("runtime",), profile="full"),
        TableSpec("convergence", "Sampling convergence", convergence_table, ("trajectories", "epsilon"),
                  ("benchmark", "horizon", "trajectories", "epsilon", "mean_ari", "min_ari", "reps"),
                  profile="full"),
        TableSpec("low_rank", "Effective and Hankel rank", low_rank, ("benchmark",),
                  ("benchmark", "horizon", "memory", "probes", "pairs", "effective_rank", "effective_rank_depth",
                   "hankel_rank"), profile="full"),
        TableSpec("belief_sensitivity", "Initial-belief sensitivity", belief_sensitivity_table,
                  ("initial_first", "epsilon"),
                  ("benchmark", "horizon", "initial_first", "belief", "epsilon", "classes", "reference_classes",
                   "ari")),
        TableSpec("pbvi_comparison", "PBVI on models and quotients", pbvi_comparison, ("benchmark", "epsilon"),
                  ("benchmark", "epsilon", "horizon", "states", "classes", "quotient_states", "original_value",
                   "quotient_value", "gap"), ("original_time", "quotient_time", "speedup"), profile="full"),
        TableSpec("capacity_sweep", "Class counts over ε and memory", capacity_sweep, ("memory", "epsilon"),
                  ("benchmark", "horizon", "family", "memory", "probes", "epsilon", "classes")),
        TableSpec("noise_sensitivity", "Tiger class counts over accuracy", noise_sensitivity,
                  ("accuracy", "epsilon"), ("benchmark", "accuracy", "horizon", "epsilon", "classes")),
        TableSpec("metric_comparison", "W1 against TV class counts", metric_comparison, ("epsilon",),
                  ("benchmark", "horizon", "metric", "epsilon", "w1_classes", "tv_classes"), profile="full"),
        TableSpec("baseline_comparison", "Baseline partitions", baseline_comparison, ("epsilon", "method"),
                  ("benchmark", "horizon", "epsilon", "method", "classes", "model_distance", "ari_vs_exact"),
                  profile="full"),
        TableSpec("perturbation", "Kernel perturbation robustness", perturbation, ("delta", "seed"),
                  ("benchmark", "horizon", "delta", "seed", "observed_shift", "bound", "holds"),
                  profile="full", post_check="holds"),
        TableSpec("stochastic_sanity", "Stochastic controllers on the witness model", stochastic_sanity,
                  ("seed",), ("benchmark", "horizon", "seed", "probes", "witness_distance", "max_distance")),
    ]
}


def tables_for_profile(profile: str) -> List[str]:
    """Table ids run by a sweep; the full profile runs everything."""
    if profile == "full":
        return list(TABLES)
    return [table_id for table_id, spec in TABLES.items() if spec.profile == "quick"]


def run_table(table_id: str, config: RunConfig) -> str:
    """
    Build one table and write it (plus a timings sidecar) under the output directory.

    Args:
        table_id: Key of TABLES
        config: Run configuration

    Returns:
        Path of the written CSV

    Raises:
        ConfigError: unknown table id or an invalid configuration for it
        VerificationError: a checked inequality fails
    """
    if table_id not in TABLES:
        raise ConfigError(f"unknown table '{table_id}', expected one of {sorted(TABLES)}")
    spec = TABLES[table_id]
    directory = ensure_dir(config.output_dir)

    logger.info(f"[{table_id}] building ({config.profile} profile)")
    start = time.time()
    rows = spec.builder(config)
    metadata = {
        "table": table_id,
        "title": spec.title,
        "benchmark": config.benchmark or "default",
        "family": config.family.descriptor(config.horizon),
        "seed": config.seed,
        "profile": config.profile,
        "config_hash": config_hash(config.model_dump(exclude={"output_dir", "serial"})),
    }
    path = write_table(artifact_path(table_id, directory), rows, spec.columns, metadata)
    if spec.timing_columns:
        write_table(artifact_path(f"{table_id}_timings", directory), rows,
                    spec.key_columns + spec.timing_columns, metadata)
    logger.info(f"[{table_id}] {len(rows)} rows written to {path} in {time.time() - start:.1f}s")

    if spec.post_check:
        failed = [row for row in rows if not row[spec.post_check]]
        if failed:
            raise VerificationError(f"{table_id}: {len(failed)} rows fail the {spec.post_check} check")
    return path


@dataclass
class VerificationReport:
    checked: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _matches(expected, actual, tolerance: float) -> bool:
    if isinstance(expected, bool) or isinstance(actual, (bool, np.bool_)):
        return str(expected).lower() == str(actual).lower()
    if isinstance(expected, (int, float)):
        try:
            return abs(float(actual) - float(expected)) <= tolerance
        except (TypeError, ValueError):
            return False
    return str(actual) == str(expected)


def verify_artifacts(directory: str, manifest: Dict[str, Any]) -> VerificationReport:
    """
    Compare artifacts with the expected rows of a manifest.

    Args:
        directory: Folder holding the CSV artifacts
        manifest: {"artifacts": [{"file", "key_columns", "rows": [{"key", "values", "tolerance"}]}]}

    Returns:
        VerificationReport listing every missing file, schema drift and mismatch
    """
    report = VerificationReport()
    for artifact in manifest.get("artifacts", []):
        path = os.path.join(directory, artifact["file"])
        if not os.path.exists(path):
            report.failures.append(f"{artifact['file']}: missing")
            continue
        frame, _ = read_table(path)
        expected_columns = set(artifact.get("key_columns", []))
        for row in artifact.get("rows", []):
            expected_columns.update(row.get("values", {}))
        missing = sorted(expected_columns - set(frame.columns))
        if missing:
            report.failures.append(f"{artifact['file']}: schema drift, missing columns {missing}")
            continue

        for row in artifact.get("rows", []):
            key = row.get("key", {})
            tolerance = float(row.get("tolerance", 1e-9))
            mask = np.ones(len(frame), dtype=bool)
            for column, value in key.items():
                mask &= np.array([_matches(value, actual, 1e-12) for actual in frame[column]], dtype=bool)
            matched = frame[mask]
            report.checked += 1
            if matched.empty:
                report.failures.append(f"{artifact['file']} {key}: no such row")
                continue
            actual_row = matched.iloc[0]
            for column, value in row.get("values", {}).items():
                if not _matches(value, actual_row[column], tolerance):
                    report.failures.append(
                        f"{artifact['file']} {key}: {column} = {actual_row[column]} (expected {value} ± {tolerance})"
                    )
    if report.failures:
        for failure in report.failures:
            logger.error(f"[verify] {failure}")
    else:
        logger.info(f"[verify] {report.checked} rows match")
    return report


def default_manifest() -> Dict[str, Any]:
    """Reference rows of the quick profile that are exact under this implementation."""
    return {"artifacts": [
        {
            "file": "probe_family_comparison.csv",
            "key_columns": ["horizon"],
            "rows": [
                {"key": {"horizon": 2},
                 "values": {"op_classes": 4, "clk_classes": 4, "delta_clk": 0.0, "mirror_distance": 0.49,
                            "ari": 1.0}, "tolerance": 1e-3},
                {"key": {"horizon": 4},
                 "values": {"op_classes": 11, "clk_classes": 16, "delta_clk": 0.98, "mirror_distance": 1.3154,
                            "ari": 0.9614}, "tolerance": 1e-3},
            ],
        },
        {
            "file": "observation_planning.csv",
            "key_columns": ["objective", "horizon"],
            "rows": [
                {"key": {"objective": name, "horizon": horizon}, "values": {"regret": 0.0, "max_deviation": 0.0},
                 "tolerance": 1e-9}
                for name in ("observation-score", "action-observation") for horizon in (2, 4)
            ],
        },
        {
            "file": "latent_planning.csv",
            "key_columns": ["horizon"],
            "rows": [
                {"key": {"horizon": 2}, "values": {"value": -2.0, "first_action_value": -2.0}, "tolerance": 1e-9},
                {"key": {"horizon": 4}, "values": {"first_action_value": -4.0}, "tolerance": 1e-9},
            ],
        },
        {
            "file": "partition_agreement.csv",
            "key_columns": ["k"],
            "rows": [
                {"key": {"k": 1}, "values": {"delta_s": 0.98}, "tolerance": 1e-3},
                {"key": {"k": 3}, "values": {"delta_s": 0.245}, "tolerance": 1e-3},
                {"key": {"k": 5}, "values": {"delta_s": 0.0, "ari": 1.0}, "tolerance": 1e-9},
            ],
        },
        {
            "file": "hierarchical_scaling.csv",
            "key_columns": ["horizon", "segment_length", "layer"],
            "rows": [{"key": {"horizon": 10, "segment_length": 5, "layer": 2},
                      "values": {"histories_processed": 126, "direct_histories": 2047}, "tolerance": 0.0}],
        },
        {
            "file": "belief_sensitivity.csv",
            "key_columns": ["initial_first", "epsilon"],
            "rows": [
                {"key": {"initial_first": 0.1, "epsilon": 0.3}, "values": {"classes": 3, "ari": 0.889},
                 "tolerance": 1e-3},
                {"key": {"initial_first": 0.3, "epsilon": 0.3}, "values": {"ari": 1.0}, "tolerance": 1e-9},
                {"key": {"initial_first": 0.5, "epsilon": 0.3}, "values": {"ari": 1.0}, "tolerance": 1e-9},
            ],
        },
    ]}
