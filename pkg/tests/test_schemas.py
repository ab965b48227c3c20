import pytest
from pydantic import ValidationError

from bounded_quotient.errors import ConfigError
from bounded_quotient.schemas import BenchmarkSpec, FamilySpec, RunConfig


def test_parse_positional_and_keyword():
    spec = BenchmarkSpec.parse("random:100,4,seed=7")
    assert (spec.states, spec.observations, spec.seed) == (100, 4, 7)
    assert spec.to_string() == "random:100,4,seed=7"


def test_parse_rocksample():
    spec = BenchmarkSpec.parse("rocksample:4,4")
    assert (spec.size, spec.rocks) == (4, 4)
    assert BenchmarkSpec.parse("tiger-full").to_string() == "tiger-full"


def test_parse_unknown_name():
    with pytest.raises(ConfigError, match="unknown benchmark"):
        BenchmarkSpec.parse("pacman")


def test_parse_malformed_value():
    with pytest.raises(ConfigError):
        BenchmarkSpec.parse("gridworld:big")


@pytest.mark.parametrize("alias, kind", [("op", "stationary"), ("clk", "clock-aware"),
                                         ("stochastic-sampled", "stochastic")])
def test_family_aliases(alias, kind):
    assert FamilySpec(kind=alias).kind == kind


def test_family_descriptor():
    assert FamilySpec(kind="stationary", memory=2).descriptor(4) == "stationary-m2-T4"
    assert FamilySpec(kind="stochastic", count=10, seed=3).descriptor(2) == "stochastic-m1-n10-s3-T2"


def test_family_memory_must_be_positive():
    with pytest.raises(ValidationError):
        FamilySpec(memory=0)


def test_negative_epsilon_rejected():
    with pytest.raises(ValidationError):
        RunConfig(epsilons=[0.1, -0.2])


def test_tier_check():
    RunConfig(tier="exact-clk", family=FamilySpec(kind="clk")).check_tier()
    with pytest.raises(ConfigError, match="tier"):
        RunConfig(tier="exact-clk", family=FamilySpec(kind="stationary")).check_tier()
    with pytest.raises(ConfigError):
        RunConfig(tier="op-exact", family=FamilySpec(kind="stochastic")).check_tier()


def test_benchmark_spec_default():
    assert RunConfig().benchmark_spec("gridworld:3").size == 3
    assert RunConfig(benchmark="hallway:7").benchmark_spec("gridworld:3").length == 7
