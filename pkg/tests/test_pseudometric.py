import numpy as np
import pytest

from bounded_quotient.errors import AlphabetMismatchError, SizeGuardError
from bounded_quotient.probes import (
    ProbeFamily,
    StochasticFsc,
    enumerate_clock_aware,
    enumerate_stationary,
)
from bounded_quotient.pseudometric import (
    build_cache,
    delta_cross_family,
    delta_s,
    envelope,
    history_distance,
    mirror_distance,
    model_distance,
    perturb_and_bound,
    perturb_kernels,
    probe_distances,
)
from bounded_quotient.quotient import build_quotient, exact_partition


def test_listen_distance(listen_cache):
    assert history_distance(listen_cache, (0,), (1,)) == pytest.approx(0.49)
    assert history_distance(listen_cache, (1,), (0,)) == pytest.approx(0.49)
    assert history_distance(listen_cache, (0, 1), (1, 1)) == 0.0


def test_history_distance_requires_equal_depth(listen_cache):
    with pytest.raises(ValueError):
        history_distance(listen_cache, (0,), (0, 1))


def test_witness_stationary_probes_are_blind(witness):
    family = enumerate_stationary(1, witness.action_count, witness.observation_count)
    cache = build_cache(witness, family, 3, serial=True)
    assert history_distance(cache, (0,), (1,)) == 0.0


def test_witness_stochastic_probe_separates(witness):
    fsc = StochasticFsc(np.array([[0.5, 0.5]]), np.ones((1, 5, 1)))
    cache = build_cache(witness, ProbeFamily("stochastic", 1, None, (fsc,)), 3, serial=True)
    assert history_distance(cache, (0,), (1,)) == pytest.approx(0.25)


def test_witness_clock_aware_probe_separates(witness):
    family = enumerate_clock_aware(1, 3, witness.action_count, witness.observation_count)
    cache = build_cache(witness, family, 3, serial=True)
    assert history_distance(cache, (0,), (1,)) == pytest.approx(1.0)


def test_unreachable_histories_are_unqualified(witness):
    family = enumerate_stationary(1, witness.action_count, witness.observation_count)
    cache = build_cache(witness, family, 3, serial=True)
    u = witness.observations.index("U")
    assert not cache.reachable(1)[u]
    row = cache.pair_position(1, 0, u)
    assert not cache.qualified[1][row].any()
    assert history_distance(cache, (0,), (u,)) == 0.0


def test_serial_and_parallel_agree(tiger):
    family = enumerate_stationary(2, tiger.action_count, tiger.observation_count)
    serial = build_cache(tiger, family, 3, serial=True)
    parallel = build_cache(tiger, family, 3, serial=False, workers=4)
    for a, b in zip(serial.distances, parallel.distances):
        np.testing.assert_array_equal(a, b)


def test_cache_size_guard(tiger):
    family = enumerate_stationary(1, tiger.action_count, tiger.observation_count)
    with pytest.raises(SizeGuardError, match="subset"):
        build_cache(tiger, family, 3, serial=True, cap=10)


def test_alphabet_mismatch(tiger, listen):
    family = enumerate_stationary(1, tiger.action_count, tiger.observation_count)
    with pytest.raises(AlphabetMismatchError):
        build_cache(listen, family, 2, serial=True)
    with pytest.raises(AlphabetMismatchError):
        model_distance(tiger, listen, family, 2)


def test_clock_aware_family_must_match_horizon(tiger):
    family = enumerate_clock_aware(1, 2, tiger.action_count, tiger.observation_count)
    with pytest.raises(ValueError):
        build_cache(tiger, family, 3, serial=True)


def test_cross_family_gap(tiger):
    op = build_cache(tiger, enumerate_stationary(1, 3, 2), 2, serial=True)
    clk = build_cache(tiger, enumerate_clock_aware(1, 2, 3, 2), 2, serial=True)
    assert delta_cross_family(clk, op).delta == pytest.approx(0.0, abs=1e-9)
    assert mirror_distance(clk, 1) == pytest.approx(0.49)


def test_cross_family_gap_at_four(tiger):
    op = build_cache(tiger, enumerate_stationary(1, 3, 2), 4, serial=True)
    clk = build_cache(tiger, enumerate_clock_aware(1, 4, 3, 2), 4, serial=True)
    gap = delta_cross_family(clk, op)
    assert gap.delta == pytest.approx(0.98, abs=1e-3)
    assert mirror_distance(clk, 2) == pytest.approx(1.3154, abs=1e-3)


def test_envelope_and_delta_s(tiger_op_cache):
    full = envelope(tiger_op_cache)
    assert full.values.shape == (tiger_op_cache.pair_count,)
    assert delta_s(tiger_op_cache, range(tiger_op_cache.probe_count)) == 0.0
    # listen is the only informative one-node probe
    assert delta_s(tiger_op_cache, [0]) == 0.0
    assert delta_s(tiger_op_cache, [1]) == pytest.approx(0.49)
    with pytest.raises(IndexError):
        envelope(tiger_op_cache, [7])


def test_model_distance_to_itself(tiger):
    family = enumerate_stationary(1, 3, 2)
    assert model_distance(tiger, tiger, family, 2) == 0.0
    shifted = tiger.with_initial_belief([0.9, 0.1])
    distances = probe_distances(tiger, shifted, family, 2)
    assert distances[0] > 0
    assert distances[1] == pytest.approx(0.0)


def test_perturb_kernels(tiger):
    perturbed = perturb_kernels(tiger, 0.05, seed=3)
    assert np.max(np.abs(perturbed.transition - tiger.transition)) <= 0.05 + 1e-12
    assert perturbed.observation.sum(axis=-1) == pytest.approx(np.ones((3, 2)))
    with pytest.raises(ValueError):
        perturb_kernels(tiger, 1.0, seed=0)


def test_perturbation_bound_holds(tiger):
    family = enumerate_stationary(1, 3, 2)
    check = perturb_and_bound(tiger, family, 2, None, 0.05, seed=1)
    assert check.holds
    assert check.bound == pytest.approx(0.4)


@pytest.mark.parametrize("delta", [0.01, 0.05])
def test_perturbation_bound_over_seeds(tiger, delta):
    family = enumerate_stationary(1, 3, 2)
    target = build_quotient(tiger, exact_partition(build_cache(tiger, family, 2, serial=True)))
    for seed in range(20):
        check = perturb_and_bound(tiger, family, 2, None, delta, seed=seed, target=target)
        assert check.bound == pytest.approx(8 * delta)
        assert check.observed_shift <= check.bound
        assert check.holds
