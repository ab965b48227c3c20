"""Command-line driver for Bounded Quotient."""

import argparse
import logging
import sys
import time
from dataclasses import asdict
from typing import List, Optional

from pydantic import ValidationError

from . import storage
from .benchmarks import make_benchmark
from .config import BENCHMARKS, LOG_LEVEL, OUTPUT_DIR
from .errors import ConfigError, VerificationError
from .layered import build_horizon_plan, run_layered
from .model import history_count
from .planning import (
    action_observation_objective,
    exhaustive_search,
    latent_objective,
    observation_objective,
)
from .probes import enumerate_family
from .pseudometric import build_cache
from .quotient import MERGE_RULES, build_quotient, eps_partition, soundness_check
from .sampling import bootstrap_ci_max_w1, sampled_cache
from .schemas import FamilySpec, RunConfig, SamplingConfig
from .selection import greedy_select
from .tables import TABLES, default_manifest, run_table, tables_for_profile, verify_artifacts
from .transport import metric_from_id

logger = logging.getLogger("bounded-quotient")

OBJECTIVES = {
    "latent": latent_objective,
    "observation": observation_objective,
    "action-observation": action_observation_objective,
}


def _run_config(args: argparse.Namespace) -> RunConfig:
    """Validated run configuration from parsed arguments."""
    try:
        sampling = SamplingConfig(trajectories=args.trajectories, seed=args.seed) if args.trajectories \
            else SamplingConfig(seed=args.seed)
        return RunConfig(
            benchmark=args.benchmark,
            family=FamilySpec(kind=args.family, memory=args.memory, count=args.count, seed=args.seed),
            horizon=args.horizon,
            horizons=args.horizons,
            epsilons=args.eps,
            metric=args.metric,
            sampling=sampling,
            serial=args.serial,
            output_dir=args.output_dir,
            seed=args.seed,
            tier=args.tier,
            profile=args.profile,
            subset_sizes=args.k,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid arguments: {e}") from e


def _setup(config: RunConfig, default_benchmark: str = "tiger-full"):
    spec = config.benchmark_spec(default_benchmark)
    pomdp = make_benchmark(spec)
    family = enumerate_family(config.family, pomdp, config.horizon)
    metric = metric_from_id(config.metric, pomdp.observation_count) if config.metric else None
    return pomdp, spec.to_string(), family, metric


def _epsilons(config: RunConfig) -> List[float]:
    return [0.0] if config.epsilons is None else config.epsilons


def cmd_bench(args, config: RunConfig) -> int:
    if not config.benchmark:
        for benchmark_id, entry in BENCHMARKS.items():
            print(f"{benchmark_id:14s} {entry['metric']:9s} {entry['description']}")
        return 0
    pomdp = make_benchmark(config.benchmark)
    print(f"{pomdp.name}: |S|={pomdp.state_count} |A|={pomdp.action_count} |O|={pomdp.observation_count} "
          f"metric={pomdp.ground_metric_id}")
    print(f"histories through T={config.horizon}: {history_count(pomdp.observation_count, config.horizon)}")
    return 0


def cmd_cache(args, config: RunConfig) -> int:
    pomdp, bench, family, metric = _setup(config)
    cache = build_cache(pomdp, family, config.horizon, metric, serial=config.serial, benchmark_id=bench)
    path = storage.save_cache(cache, config.output_dir)
    top = float(cache.pair_matrix().max()) if cache.pair_count else 0.0
    print(f"{cache.pair_count} pairs x {cache.probe_count} probes, max distance {top:.6f} -> {path}")
    return 0


def cmd_partition(args, config: RunConfig) -> int:
    pomdp, bench, family, metric = _setup(config)
    cache = build_cache(pomdp, family, config.horizon, metric, serial=config.serial, benchmark_id=bench)
    for eps in _epsilons(config):
        partition = eps_partition(cache, eps, rule=args.rule)
        name = f"partition__{bench}__{family.descriptor}__eps{eps:g}__{args.rule}"
        path = storage.save_partition(partition, pomdp, name, config.output_dir)
        print(f"eps={eps:g}: {partition.class_count} classes {partition.class_counts()} -> {path}")
    return 0


def cmd_quotient(args, config: RunConfig) -> int:
    pomdp, bench, family, metric = _setup(config)
    cache = build_cache(pomdp, family, config.horizon, metric, serial=config.serial, benchmark_id=bench)
    for eps in _epsilons(config):
        quotient = build_quotient(pomdp, eps_partition(cache, eps, rule=args.rule))
        deviation = soundness_check(pomdp, quotient, family, metric)
        name = f"quotient__{bench}__{family.descriptor}__eps{eps:g}"
        path = storage.save_quotient(quotient, name, config.output_dir)
        print(f"eps={eps:g}: {quotient.class_count} classes, max W1 to model {deviation:.6f} -> {path}")
    return 0


def cmd_subset(args, config: RunConfig) -> int:
    pomdp, bench, family, metric = _setup(config)
    cache = build_cache(pomdp, family, config.horizon, metric, serial=config.serial, benchmark_id=bench)
    k = min(max(config.subset_sizes), cache.probe_count)
    selection = greedy_select(cache, k)
    rows = selection.rows(cache)
    path = storage.write_table(
        storage.artifact_path(f"subset__{bench}__{family.descriptor}", storage.ensure_dir(config.output_dir)),
        rows, list(rows[0]) if rows else ["step"], {"benchmark": bench, "family": family.descriptor},
    )
    print(f"greedy k={k}: delta_S={selection.delta_s:.6f} -> {path}")
    return 0


def cmd_sample(args, config: RunConfig) -> int:
    pomdp, bench, family, metric = _setup(config)
    cache = sampled_cache(pomdp, family, config.horizon, metric, config.sampling, serial=config.serial,
                          benchmark_id=bench)
    low, high = bootstrap_ci_max_w1(cache, config.sampling.resamples, config.sampling.confidence,
                                    seed=config.sampling.seed)
    for eps in _epsilons(config):
        print(f"eps={eps:g}: {eps_partition(cache, eps).class_count} classes")
    print(f"max W1 {config.sampling.confidence:.0%} interval: [{low:.4f}, {high:.4f}]")
    return 0


def cmd_layered(args, config: RunConfig) -> int:
    pomdp, bench, _, metric = _setup(config)
    eps = (_epsilons(config) or [0.0])[0]
    plan = build_horizon_plan(pomdp, config.horizon, args.tau, eps, config.family, metric)
    result = run_layered(plan)
    rows = [asdict(row) for row in result.rows]
    storage.write_table(
        storage.artifact_path(f"layered__{bench}__T{config.horizon}__tau{args.tau}",
                              storage.ensure_dir(config.output_dir)),
        rows, list(rows[0]), {"benchmark": bench, "epsilon": plan.epsilon},
    )
    for row in result.rows:
        print(f"layer {row.layer}: gamma={row.gamma:.6f} bound={row.bound:.6f} residual={row.residual:.6f} "
              f"carry={row.carry:.6f}{'' if row.holds else ' (recursion bound exceeded)'}")
    print(f"histories processed {result.histories_processed} vs {result.direct_histories} direct")
    return 0


def cmd_plan(args, config: RunConfig) -> int:
    pomdp, bench, family, metric = _setup(config)
    objective = OBJECTIVES[args.objective](pomdp)
    original = exhaustive_search(pomdp, family, objective, config.horizon)
    print(f"original: {original.policy} value {original.value:.6f}")
    if objective.agent_accessible:
        cache = build_cache(pomdp, family, config.horizon, metric, serial=config.serial, benchmark_id=bench)
        for eps in _epsilons(config):
            result = exhaustive_search(build_quotient(pomdp, eps_partition(cache, eps)), family, objective,
                                       config.horizon)
            print(f"eps={eps:g}: {result.policy} value {result.value:.6f} regret {result.regret:.6f}")
    return 0


def cmd_table(args, config: RunConfig) -> int:
    print(run_table(args.table_id, config))
    return 0


def cmd_sweep(args, config: RunConfig) -> int:
    start = time.time()
    for table_id in tables_for_profile(config.profile):
        print(run_table(table_id, config))
    logger.info(f"[sweep] {config.profile} profile finished in {time.time() - start:.1f}s")
    return 0


def cmd_verify(args, config: RunConfig) -> int:
    manifest = storage.load_manifest(args.manifest) if args.manifest else default_manifest()
    report = verify_artifacts(args.dir or config.output_dir, manifest)
    if not report.passed:
        for failure in report.failures:
            print(f"FAIL {failure}")
        raise VerificationError(f"{len(report.failures)} artifact checks failed")
    print(f"OK {report.checked} rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--benchmark", "-b", help="benchmark id, e.g. tiger-full, gridworld:3, rocksample:4,4")
    common.add_argument("--family", default="stationary", help="stationary | clock-aware | stochastic")
    common.add_argument("--memory", "-m", type=int, default=1, help="controller memory bound")
    common.add_argument("--count", type=int, default=40, help="stochastic family size")
    common.add_argument("--horizon", "-T", type=int, default=2)
    common.add_argument("--horizons", type=int, nargs="*", help="horizon list for tables")
    common.add_argument("--eps", type=float, nargs="*", help="epsilon list (empty for none)")
    common.add_argument("--metric", help="ground metric id: discrete, quadrant, line:<scale>")
    common.add_argument("--trajectories", type=int, help="trajectories per history and probe")
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("--k", type=int, nargs="+", default=[1, 3, 5], help="subset sizes")
    common.add_argument("--serial", action="store_true", help="single-threaded, for timing tables")
    common.add_argument("--output-dir", default=OUTPUT_DIR)
    common.add_argument("--tier", default="op-exact", choices=["exact-clk", "op-exact", "op-sampling"])
    common.add_argument("--profile", default="quick", choices=["quick", "full"])
    common.add_argument("--log-level", default=LOG_LEVEL)

    parser = argparse.ArgumentParser(prog="bounded-quotient",
                                     description="Bounded-observer quotients of finite POMDPs")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("bench", parents=[common], help="list benchmarks or describe one").set_defaults(handler=cmd_bench)
    sub.add_parser("cache", parents=[common], help="build and save a distance cache").set_defaults(handler=cmd_cache)
    for name, handler in (("partition", cmd_partition), ("quotient", cmd_quotient)):
        p = sub.add_parser(name, parents=[common], help=f"compute and save {name}s per epsilon")
        p.add_argument("--rule", default="le", choices=list(MERGE_RULES))
        p.set_defaults(handler=handler)
    sub.add_parser("subset", parents=[common], help="greedy probe subset").set_defaults(handler=cmd_subset)
    sub.add_parser("sample", parents=[common], help="sampled partitions and bootstrap interval") \
        .set_defaults(handler=cmd_sample)
    p = sub.add_parser("layered", parents=[common], help="layered horizon plan ledger")
    p.add_argument("--tau", type=int, required=True, help="segment length")
    p.set_defaults(handler=cmd_layered)
    p = sub.add_parser("plan", parents=[common], help="exhaustive policy search")
    p.add_argument("--objective", default="observation", choices=list(OBJECTIVES))
    p.set_defaults(handler=cmd_plan)
    p = sub.add_parser("table", parents=[common], help="write one table artifact")
    p.add_argument("table_id", choices=sorted(TABLES))
    p.set_defaults(handler=cmd_table)
    sub.add_parser("sweep", parents=[common], help="write every table of a profile").set_defaults(handler=cmd_sweep)
    p = sub.add_parser("verify", parents=[common], help="compare artifacts with a manifest")
    p.add_argument("--dir", help="artifact directory (defaults to --output-dir)")
    p.add_argument("--manifest", help="manifest JSON (defaults to the built-in reference rows)")
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the CLI.

    Returns:
        0 on success, 1 when a verification fails, 2 on configuration errors
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    start = time.time()
    try:
        config = _run_config(args)
        code = args.handler(args, config)
    except VerificationError as e:
        logger.error(f"[{args.command}] verification failed: {e}")
        return 1
    except (ConfigError, ValueError) as e:
        logger.error(f"[{args.command}] {type(e).__name__}: {e}")
        return 2
    logger.info(f"[{args.command}] done in {time.time() - start:.1f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
