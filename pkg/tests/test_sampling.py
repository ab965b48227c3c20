import numpy as np
import pytest

from bounded_quotient.probes import StationaryFsc, enumerate_stationary
from bounded_quotient.quotient import adjusted_rand_index, eps_partition
from bounded_quotient.sampling import (
    bootstrap_ci_max_w1,
    empirical_suffix_law,
    law_from_codes,
    max_w1,
    sampled_cache,
    seed_stability,
)
from bounded_quotient.schemas import SamplingConfig


def test_law_from_codes_decodes_base_o():
    law = law_from_codes(np.array([0, 1, 2, 3, 3, 3]), 2, 2)
    assert law.support == ((0, 0), (0, 1), (1, 0), (1, 1))
    assert law.masses == pytest.approx([1 / 6, 1 / 6, 1 / 6, 0.5])


def test_law_from_codes_empty_suffix():
    law = law_from_codes(np.zeros(4, dtype=np.int64), 0, 3)
    assert law.support == ((),)


def test_empirical_law_is_seeded(listen):
    fsc = StationaryFsc((0,), ((0, 0),), 1, 2)
    first = empirical_suffix_law(listen, fsc, (0,), 500, seed=5, horizon=2)
    second = empirical_suffix_law(listen, fsc, (0,), 500, seed=5, horizon=2)
    assert first.distribution.same_as(second.distribution)
    assert first.distribution.as_dict()[(0,)] == pytest.approx(0.745, abs=0.08)


def test_empirical_law_needs_horizon(listen):
    fsc = StationaryFsc((0,), ((0, 0),), 1, 2)
    with pytest.raises(ValueError):
        empirical_suffix_law(listen, fsc, (), 10, seed=0)


def test_sampled_partition_matches_exact(listen, listen_cache):
    family = enumerate_stationary(1, 1, 2)
    cache = sampled_cache(listen, family, 2, config=SamplingConfig(trajectories=2000, seed=7), serial=True)
    exact = eps_partition(listen_cache, 0.3)
    sampled = eps_partition(cache, 0.3)
    assert sampled.class_count == exact.class_count == 4
    assert adjusted_rand_index(sampled, exact) == pytest.approx(1.0)


def test_sampled_cache_is_deterministic(tiger):
    family = enumerate_stationary(1, 3, 2)
    config = SamplingConfig(trajectories=200, seed=11)
    serial = sampled_cache(tiger, family, 2, config=config, serial=True)
    parallel = sampled_cache(tiger, family, 2, config=config, serial=False)
    for a, b in zip(serial.distances, parallel.distances):
        np.testing.assert_array_equal(a, b)
    assert max_w1(serial, serial.samples) == pytest.approx(float(serial.pair_matrix().max()))


def test_bootstrap_interval(listen):
    family = enumerate_stationary(1, 1, 2)
    cache = sampled_cache(listen, family, 2, config=SamplingConfig(trajectories=300, seed=1), serial=True)
    low, high = bootstrap_ci_max_w1(cache, resamples=25, confidence=0.9, seed=2)
    assert 0.0 <= low <= high <= 1.0


def test_bootstrap_needs_samples(listen_cache):
    with pytest.raises(ValueError, match="sampled cache"):
        bootstrap_ci_max_w1(listen_cache, resamples=10)


def test_seed_stability_exact_has_no_spread(listen):
    family = enumerate_stationary(1, 1, 2)
    rows = seed_stability(listen, family, 2, None, SamplingConfig(seeds=[0, 1, 2]), [0.0, 0.5], exact=True)
    assert [row["std"] for row in rows] == [0.0, 0.0]
    assert rows[0]["mean"] == 4.0
