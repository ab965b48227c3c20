"""Configuration for Bounded Quotient."""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file in the project root
env_path = Path(__file__).parent.parent / ".env"
load_dotenv(dotenv_path=env_path)


def _parse_csv_env(value: str | None) -> list[str]:
    """Parse a comma-separated env var into a clean list."""
    if not value:
        return []
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_int_list(value: str | None, default: list[int]) -> list[int]:
    """Parse a comma-separated list of integers, falling back to a default."""
    items = _parse_csv_env(value)
    if not items:
        return list(default)
    return [int(item) for item in items]


# Where CSV artifacts, caches and manifests are written
OUTPUT_DIR = os.getenv("QUOTIENT_OUTPUT_DIR", "artifacts")

# Size guards
ENUMERATION_CAP = int(os.getenv("QUOTIENT_ENUMERATION_CAP", "10000000"))
CACHE_CAP = int(os.getenv("QUOTIENT_CACHE_CAP", "50000000"))

# Cache build parallelism
WORKERS = int(os.getenv("QUOTIENT_WORKERS", "4"))
SERIAL_DEFAULT = os.getenv("QUOTIENT_SERIAL", "False").lower() == "true"

# Seeds and sampling defaults
MASTER_SEED = int(os.getenv("QUOTIENT_SEED", "7"))
TRAJECTORIES = int(os.getenv("QUOTIENT_TRAJECTORIES", "500"))
BOOTSTRAP_RESAMPLES = int(os.getenv("QUOTIENT_BOOTSTRAP_RESAMPLES", "1000"))
STABILITY_SEEDS = _parse_int_list(os.getenv("QUOTIENT_STABILITY_SEEDS"), list(range(10)))

LOG_LEVEL = os.getenv("QUOTIENT_LOG_LEVEL", "INFO").upper()

# Numeric tolerances
PROBABILITY_TOLERANCE = 1e-12
LAW_TOLERANCE = 1e-10
DISTANCE_TOLERANCE = 1e-9
CLAMP_TOLERANCE = 1e-12

# Artifact schema version, written into every CSV header
SCHEMA_VERSION = "1"

# Benchmark registry: id -> description, default ground metric, parameter ranges
BENCHMARKS = {
    "tiger-full": {
        "id": "tiger-full",
        "name": "Tiger",
        "description": "Two doors, listen or open; listen -1, correct open +10, wrong open -100.",
        "metric": "discrete",
        "ranges": {"accuracy": (0.5, 1.0), "left": (0.0, 1.0)},
    },
    "tiger-listen": {
        "id": "tiger-listen",
        "name": "Tiger (listen only)",
        "description": "Tiger with the single listen action.",
        "metric": "discrete",
        "ranges": {"accuracy": (0.5, 1.0), "left": (0.0, 1.0)},
    },
    "gridworld": {
        "id": "gridworld",
        "name": "GridWorld",
        "description": "n x n grid, slip 0.1, noisy quadrant observations, goal and trap cells.",
        "metric": "quadrant",
        "ranges": {"size": (2, 12)},
    },
    "rocksample": {
        "id": "rocksample",
        "name": "RockSample",
        "description": "Navigate, check rocks with distance-dependent sensors, sample and exit east.",
        "metric": "discrete",
        "ranges": {"size": (2, 7), "rocks": (1, 8)},
    },
    "network": {
        "id": "network",
        "name": "Network monitoring",
        "description": "n nodes failing at rate 0.1, per-node probes and a reboot action.",
        "metric": "discrete",
        "ranges": {"nodes": (1, 10)},
    },
    "hallway": {
        "id": "hallway",
        "name": "Hallway",
        "description": "Corridor with cyclic landmarks and a reward at the right end.",
        "metric": "discrete",
        "ranges": {"length": (2, 200)},
    },
    "random": {
        "id": "random",
        "name": "Random POMDP",
        "description": "Dirichlet(1) kernels, uniform rewards in [0, 1], seeded.",
        "metric": "discrete",
        "ranges": {"states": (1, 4096), "observations": (1, 64), "actions": (1, 16)},
    },
    "witness": {
        "id": "witness",
        "name": "Stationary witness",
        "description": "Nine-state model separating stationary from clock-aware probing.",
        "metric": "discrete",
        "ranges": {},
    },
}
