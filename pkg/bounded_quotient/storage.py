"""Artifact storage: self-describing CSV tables, distance-cache files and manifests."""

import hashlib
import json
import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import OUTPUT_DIR, SCHEMA_VERSION
from .errors import ConfigError
from .model import Pomdp
from .probes import ProbeFamily
from .pseudometric import DistanceCache
from .quotient import Partition, QuotientPomdp
from .transport import GroundMetric

logger = logging.getLogger("bounded-quotient.storage")

FLOAT_FORMAT = "%.12g"


def sanitize_id(name: str) -> str:
    """Sanitize an artifact id for filesystem safety."""
    return re.sub(r'[^a-zA-Z0-9_.-]', '_', name)


def ensure_dir(directory: Optional[str] = None) -> str:
    """Ensure the artifact directory exists and return it."""
    directory = directory or OUTPUT_DIR
    Path(directory).mkdir(parents=True, exist_ok=True)
    return directory


def artifact_path(name: str, directory: Optional[str] = None, suffix: str = ".csv") -> str:
    """Get the file path for an artifact."""
    return os.path.join(directory or OUTPUT_DIR, f"{sanitize_id(name)}{suffix}")


def config_hash(config: Dict[str, Any]) -> str:
    """Short stable hash of a configuration dict."""
    text = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def write_table(path: str, rows: Sequence[dict], columns: Sequence[str],
                metadata: Optional[Dict[str, Any]] = None) -> str:
    """
    Write rows as CSV preceded by '# key: value' header lines.

    Args:
        path: Destination file
        rows: Records; missing keys are written empty
        columns: Column order (also written when there are no rows)
        metadata: Header entries; schema version and config hash are added

    Returns:
        The path written
    """
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    header = {"schema_version": SCHEMA_VERSION}
    header.update(metadata or {})
    header.setdefault("config_hash", config_hash(header))

    frame = pd.DataFrame(list(rows), columns=list(columns))
    with open(path, "w", newline="") as f:
        for key, value in header.items():
            f.write(f"# {key}: {value}\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_table(path: str) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """
    Load a table written by write_table.

    Returns:
        (frame, header metadata)
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"artifact {path} not found")
    metadata = {}
    with open(path, "r") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            metadata[key.strip()] = value.strip()
    frame = pd.read_csv(path, comment="#", keep_default_na=False, na_values=[""])
    return frame, metadata


def cache_key(benchmark_id: str, family_descriptor: str, horizon: int, metric_id: str) -> str:
    return sanitize_id(f"cache__{benchmark_id}__{family_descriptor}__T{horizon}__{metric_id}")


def save_cache(cache: DistanceCache, directory: Optional[str] = None) -> str:
    """
    Persist a distance cache as .npz with a CSV mirror of its qualified entries.

    Returns:
        Path of the .npz file
    """
    directory = ensure_dir(directory)
    benchmark_id = cache.benchmark_id or cache.pomdp.name
    key = cache_key(benchmark_id, cache.family.descriptor, cache.horizon, cache.metric.kind)
    metadata = {
        "benchmark": benchmark_id,
        "family": cache.family.descriptor,
        "probes": cache.probe_count,
        "horizon": cache.horizon,
        "metric": cache.metric.kind,
        "schema_version": SCHEMA_VERSION,
    }
    arrays = {"metadata": np.array(json.dumps(metadata, sort_keys=True))}
    for depth in range(len(cache.layers)):
        arrays[f"distances_{depth}"] = cache.distances[depth]
        arrays[f"qualified_{depth}"] = cache.qualified[depth]
        arrays[f"reach_{depth}"] = cache.reach[depth]
    path = artifact_path(key, directory, ".npz")
    np.savez_compressed(path, **arrays)

    rows = []
    for depth in range(len(cache.layers)):
        pair_rows, pair_cols = cache.pair_indices(depth)
        for k, p in zip(*np.nonzero(cache.qualified[depth])):
            rows.append({"depth": depth, "i": int(pair_rows[k]), "j": int(pair_cols[k]), "p": int(p),
                         "distance": float(cache.distances[depth][k, p])})
    write_table(artifact_path(key, directory), rows, ["depth", "i", "j", "p", "distance"], metadata)
    logger.info(f"[{benchmark_id}] cache saved to {path}")
    return path


def load_cache(path: str, pomdp: Pomdp, family: ProbeFamily, metric: GroundMetric) -> DistanceCache:
    """
    Load a cache saved by save_cache for the given model and family.

    Raises:
        ConfigError: the file was written for another family, horizon or metric
    """
    from .model import history_tree

    with np.load(path) as data:
        metadata = json.loads(str(data["metadata"]))
        if metadata["family"] != family.descriptor or metadata["probes"] != len(family) or metadata["metric"] != metric.kind:
            raise ConfigError(f"cache {path} was built for {metadata['family']} ({metadata['probes']} probes, "
                              f"{metadata['metric']}), not {family.descriptor}")
        horizon = int(metadata["horizon"])
        layers = history_tree(pomdp, horizon)
        depths = range(len(layers))
        return DistanceCache(
            pomdp=pomdp,
            family=family,
            horizon=horizon,
            metric=metric,
            layers=layers,
            distances=[data[f"distances_{d}"] for d in depths],
            qualified=[data[f"qualified_{d}"] for d in depths],
            reach=[data[f"reach_{d}"] for d in depths],
            benchmark_id=metadata["benchmark"],
        )


def save_partition(partition: Partition, pomdp: Pomdp, name: str, directory: Optional[str] = None) -> str:
    """CSV of (depth, history, class_id)."""
    metadata = {"benchmark": pomdp.name, "family": partition.descriptor,
                "epsilon": partition.epsilon, "rule": partition.rule, "classes": partition.class_count}
    return write_table(artifact_path(name, ensure_dir(directory)), partition.rows(pomdp),
                       ["depth", "history", "class_id"], metadata)


def save_quotient(quotient: QuotientPomdp, name: str, directory: Optional[str] = None) -> str:
    """CSV dump of the reference predictive kernel."""
    metadata = {"benchmark": quotient.pomdp.name, "family": quotient.partition.descriptor,
                "epsilon": quotient.partition.epsilon, "classes": quotient.class_count,
                "reference_probe": quotient.reference}
    columns = ["depth", "class_id", "action", "observation", "probability", "next_class"]
    return write_table(artifact_path(name, ensure_dir(directory)), quotient.kernel_rows(), columns, metadata)


def write_manifest(path: str, manifest: Dict[str, Any]) -> str:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
    return path


def load_manifest(path: str) -> Dict[str, Any]:
    """
    Load a manifest {"artifacts": [{"file", "key_columns", "rows": [{"key", "values", "tolerance"}]}]}.

    Raises:
        ConfigError: missing file or malformed manifest
    """
    if not os.path.exists(path):
        raise ConfigError(f"manifest {path} not found")
    with open(path, "r") as f:
        manifest = json.load(f)
    if not isinstance(manifest.get("artifacts"), list):
        raise ConfigError(f"manifest {path} has no 'artifacts' list")
    return manifest


def list_artifacts(directory: Optional[str] = None) -> List[str]:
    """CSV artifacts in a directory, sorted by name."""
    directory = directory or OUTPUT_DIR
    if not os.path.isdir(directory):
        return []
    return sorted(name for name in os.listdir(directory) if name.endswith(".csv"))
