import numpy as np
import pytest

from bounded_quotient.benchmarks import make_benchmark
from bounded_quotient.errors import ConfigError


@pytest.mark.parametrize("text, sizes", [
    ("tiger-full", (2, 3, 2)),
    ("tiger-listen", (2, 1, 2)),
    ("gridworld:3", (9, 5, 4)),
    ("network:4", (16, 5, 3)),
    ("hallway:5", (5, 3, 3)),
    ("witness", (9, 2, 5)),
    ("random:6,3,seed=1", (6, 3, 3)),
])
def test_benchmark_sizes(text, sizes):
    pomdp = make_benchmark(text)
    assert (pomdp.state_count, pomdp.action_count, pomdp.observation_count) == sizes


def test_rocksample_is_valid():
    pomdp = make_benchmark("rocksample:4,4")
    assert pomdp.transition.sum(axis=-1) == pytest.approx(np.ones(pomdp.transition.shape[:2]))
    assert pomdp.ground_metric_id == "discrete"


def test_gridworld_uses_quadrant_metric():
    assert make_benchmark("gridworld:3").ground_metric_id == "quadrant"


def test_tiger_parameters():
    pomdp = make_benchmark("tiger-full:accuracy=0.9,left=0.3")
    assert pomdp.observation[0, 0] == pytest.approx([0.9, 0.1])
    assert pomdp.initial_belief == pytest.approx([0.3, 0.7])


def test_random_is_seeded():
    first = make_benchmark("random:5,2,seed=3")
    second = make_benchmark("random:5,2,seed=3")
    np.testing.assert_array_equal(first.transition, second.transition)


@pytest.mark.parametrize("text", ["nope", "gridworld:1", "tiger-full:accuracy=0.2", "rocksample:2,8",
                                  "gridworld:3,4"])
def test_invalid_benchmarks(text):
    with pytest.raises(ConfigError):
        make_benchmark(text)
