import numpy as np
import pytest

from bounded_quotient.benchmarks import tiger_full
from bounded_quotient.probes import enumerate_stationary
from bounded_quotient.pseudometric import build_cache, delta_s
from bounded_quotient.quotient import adjusted_rand_index, eps_partition, exact_partition
from bounded_quotient.selection import coverage, effective_rank, greedy_select, hankel_matrix, hankel_rank


@pytest.fixture(scope="module")
def tiger_m2_cache():
    tiger = tiger_full()
    family = enumerate_stationary(2, tiger.action_count, tiger.observation_count)
    return build_cache(tiger, family, 4, serial=True)


def test_single_probe_certificate(tiger_m2_cache):
    selection = greedy_select(tiger_m2_cache, 1)
    assert selection.delta_s == pytest.approx(0.98, abs=1e-3)
    assert selection.delta_s == pytest.approx(delta_s(tiger_m2_cache, selection.indices))


@pytest.mark.parametrize("k,certificate", [(1, 0.98), (3, 0.245), (5, 0.0)])
def test_greedy_certificates(tiger_m2_cache, k, certificate):
    selection = greedy_select(tiger_m2_cache, k)
    assert selection.delta_s == pytest.approx(certificate, abs=1e-3)
    assert delta_s(tiger_m2_cache, selection.indices) == pytest.approx(selection.delta_s, abs=1e-9)


def test_five_probes_recover_full_partition(tiger_m2_cache):
    selection = greedy_select(tiger_m2_cache, 5)
    assert selection.delta_s == pytest.approx(0.0, abs=1e-9)
    subset = eps_partition(tiger_m2_cache, 0.0, subset=selection.indices)
    full = exact_partition(tiger_m2_cache)
    assert subset.class_count == full.class_count
    assert adjusted_rand_index(subset, full) == pytest.approx(1.0)


def test_greedy_chain_is_monotone(tiger_m2_cache):
    selection = greedy_select(tiger_m2_cache, 5)
    assert list(selection.coverage) == sorted(selection.coverage)
    assert list(selection.deltas) == sorted(selection.deltas, reverse=True)
    assert all(gain >= 0 for gain in selection.gains)
    assert len(set(selection.indices)) == 5


def test_full_family_has_zero_certificate(tiger_op_cache):
    selection = greedy_select(tiger_op_cache, tiger_op_cache.probe_count)
    assert selection.delta_s == 0.0
    assert selection.coverage[-1] == pytest.approx(coverage(tiger_op_cache, range(tiger_op_cache.probe_count)))


def test_greedy_picks_listen_first(tiger_op_cache):
    selection = greedy_select(tiger_op_cache, 1)
    assert selection.indices == (0,)
    rows = selection.rows(tiger_op_cache)
    assert rows[0]["probe"] == "listen"
    assert rows[0]["step"] == 1


def test_subset_size_bounds(tiger_op_cache):
    with pytest.raises(ValueError):
        greedy_select(tiger_op_cache, 0)
    with pytest.raises(ValueError):
        greedy_select(tiger_op_cache, tiger_op_cache.probe_count + 1)


def test_coverage_of_empty_set(tiger_op_cache):
    assert coverage(tiger_op_cache, []) == 0.0
    assert coverage(tiger_op_cache, [0]) == pytest.approx(0.49)


def test_effective_rank(tiger_op_cache):
    # only the listen column is nonzero
    assert effective_rank(tiger_op_cache) == 1
    with pytest.raises(ValueError):
        effective_rank(tiger_op_cache, variance_fraction=0.0)


def test_hankel_rank(listen):
    matrix = hankel_matrix(listen, 2)
    assert matrix.shape == (3, 2)
    assert np.all(matrix >= 0)
    assert hankel_rank(listen, 2) == 2
    with pytest.raises(ValueError):
        hankel_matrix(listen, 1)
