"""Validated configuration models shared by the library and the CLI."""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from .config import (
    BENCHMARKS,
    BOOTSTRAP_RESAMPLES,
    MASTER_SEED,
    OUTPUT_DIR,
    SERIAL_DEFAULT,
    STABILITY_SEEDS,
    TRAJECTORIES,
)
from .errors import ConfigError

# Positional parameters accepted by each benchmark's string form
POSITIONAL_PARAMETERS = {
    "tiger-full": [],
    "tiger-listen": [],
    "gridworld": ["size"],
    "rocksample": ["size", "rocks"],
    "network": ["nodes"],
    "hallway": ["length"],
    "random": ["states", "observations"],
    "witness": [],
}

FAMILY_ALIASES = {
    "op": "stationary",
    "stationary-det": "stationary",
    "clk": "clock-aware",
    "clock": "clock-aware",
    "clock-aware-det": "clock-aware",
    "stochastic-sampled": "stochastic",
}


class BenchmarkSpec(BaseModel):
    """A benchmark name plus its size and kernel parameters."""
    name: str
    size: Optional[int] = None
    rocks: Optional[int] = None
    nodes: Optional[int] = None
    length: Optional[int] = None
    states: Optional[int] = None
    observations: Optional[int] = None
    actions: Optional[int] = None
    accuracy: Optional[float] = None
    left: Optional[float] = None
    seed: Optional[int] = None
    structured: bool = False

    @field_validator("name")
    @classmethod
    def _known_name(cls, value: str) -> str:
        name = value.strip().lower()
        if name not in BENCHMARKS:
            raise ValueError(f"unknown benchmark '{value}', expected one of {sorted(BENCHMARKS)}")
        return name

    @classmethod
    def parse(cls, text: str) -> "BenchmarkSpec":
        """
        Parse the CLI string form of a benchmark.

        Examples: "tiger-full", "gridworld:5", "rocksample:4,4",
        "random:100,4,seed=7", "tiger-full:accuracy=0.9,left=0.3".

        Raises:
            ConfigError: unknown name, surplus arguments or malformed values
        """
        name, _, rest = text.strip().partition(":")
        name = name.strip().lower()
        if name not in POSITIONAL_PARAMETERS:
            raise ConfigError(f"unknown benchmark '{name}', expected one of {sorted(BENCHMARKS)}")

        fields: dict = {"name": name}
        positional = list(POSITIONAL_PARAMETERS[name])
        for token in [t.strip() for t in rest.split(",") if t.strip()]:
            if "=" in token:
                key, _, value = token.partition("=")
                fields[key.strip().lower()] = value.strip()
            elif positional:
                fields[positional.pop(0)] = token
            else:
                raise ConfigError(f"unexpected argument '{token}' for benchmark '{name}'")
        if "structured" in fields:
            fields["structured"] = str(fields["structured"]).lower() in ("1", "true", "yes")

        try:
            return cls(**fields)
        except ValidationError as e:
            raise ConfigError(f"invalid benchmark '{text}': {e}") from e

    def to_string(self) -> str:
        """Canonical string form, used as the benchmark id in artifacts."""
        values = [str(getattr(self, key)) for key in POSITIONAL_PARAMETERS[self.name]
                  if getattr(self, key) is not None]
        for key in ("accuracy", "left", "seed", "actions"):
            value = getattr(self, key)
            if value is not None:
                values.append(f"{key}={value}")
        if self.structured:
            values.append("structured=true")
        return f"{self.name}:{','.join(values)}" if values else self.name


class FamilySpec(BaseModel):
    """Which probe family to enumerate or sample."""
    kind: Literal["stationary", "clock-aware", "stochastic"] = "stationary"
    memory: int = Field(default=1, ge=1)
    count: int = Field(default=40, ge=1)
    seed: int = MASTER_SEED

    @field_validator("kind", mode="before")
    @classmethod
    def _resolve_alias(cls, value):
        if isinstance(value, str):
            return FAMILY_ALIASES.get(value.strip().lower(), value.strip().lower())
        return value

    def descriptor(self, horizon: int) -> str:
        """Short id such as 'stationary-m2-T4' used in file names and headers."""
        if self.kind == "stochastic":
            return f"stochastic-m{self.memory}-n{self.count}-s{self.seed}-T{horizon}"
        return f"{self.kind}-m{self.memory}-T{horizon}"


class SamplingConfig(BaseModel):
    """Trajectory sampling and bootstrap settings."""
    trajectories: int = Field(default=TRAJECTORIES, gt=0)
    resamples: int = Field(default=BOOTSTRAP_RESAMPLES, gt=0)
    confidence: float = Field(default=0.95, gt=0.0, lt=1.0)
    seed: int = MASTER_SEED
    seeds: List[int] = Field(default_factory=lambda: list(STABILITY_SEEDS))


class RunConfig(BaseModel):
    """Everything a table or CLI command needs to run reproducibly."""
    benchmark: Optional[str] = None
    family: FamilySpec = Field(default_factory=FamilySpec)
    horizon: int = Field(default=2, ge=1)
    horizons: Optional[List[int]] = None
    epsilons: Optional[List[float]] = None
    metric: Optional[str] = None
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    serial: bool = SERIAL_DEFAULT
    output_dir: str = OUTPUT_DIR
    seed: int = MASTER_SEED
    tier: Literal["exact-clk", "op-exact", "op-sampling"] = "op-exact"
    profile: Literal["quick", "full"] = "quick"
    subset_sizes: List[int] = Field(default_factory=lambda: [1, 3, 5])

    @field_validator("epsilons")
    @classmethod
    def _nonnegative_epsilons(cls, value):
        if value is not None and any(eps < 0 for eps in value):
            raise ValueError(f"epsilon values must be >= 0, got {value}")
        return value

    def benchmark_spec(self, default: str) -> BenchmarkSpec:
        """The configured benchmark, or the table's default when none is set."""
        return BenchmarkSpec.parse(self.benchmark or default)

    def check_tier(self) -> None:
        """
        Reject family kinds that the selected evidence tier does not allow.

        Raises:
            ConfigError: when the tier and family kind disagree
        """
        allowed = {
            "exact-clk": {"clock-aware"},
            "op-exact": {"stationary"},
            "op-sampling": {"stationary", "stochastic"},
        }[self.tier]
        if self.family.kind not in allowed:
            raise ConfigError(
                f"tier '{self.tier}' does not allow a {self.family.kind} family; "
                f"use one of {sorted(allowed)} or change --tier"
            )
