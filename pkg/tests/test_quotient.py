import dataclasses

import numpy as np
import pytest

from bounded_quotient.errors import VerificationError
from bounded_quotient.probes import enumerate_clock_aware, enumerate_stationary
from bounded_quotient.pseudometric import build_cache, model_distance
from bounded_quotient.quotient import (
    SINK,
    adjusted_rand_index,
    belief_partition,
    build_quotient,
    cluster_matrix,
    eps_partition,
    exact_partition,
    per_depth_ari,
    random_partition,
    soundness_check,
    truncation_partition,
)


def test_listen_class_counts(listen_cache):
    assert eps_partition(listen_cache, 0.0, "le").class_count == 4
    assert eps_partition(listen_cache, 0.0, "lt").class_count == 7
    assert eps_partition(listen_cache, 0.5, "le").class_count == 3
    assert eps_partition(listen_cache, 0.5, "lt").class_count == 3


def test_unknown_rule(listen_cache):
    with pytest.raises(ValueError):
        eps_partition(listen_cache, 0.1, "eq")
    with pytest.raises(ValueError):
        eps_partition(listen_cache, -0.1)


def test_cluster_matrix_complete_linkage():
    # 0-1 and 1-2 are close but 0-2 is not, so no cluster holds all three
    matrix = np.array([[0.0, 0.3, 0.6], [0.3, 0.0, 0.3], [0.6, 0.3, 0.0]])
    labels = cluster_matrix(matrix, 0.4)
    assert len(set(labels.tolist())) == 2
    assert cluster_matrix(matrix, 0.6).tolist() == [0, 0, 0]
    assert cluster_matrix(np.zeros((1, 1)), 0.0).tolist() == [0]


def test_tiger_exact_counts(tiger, tiger_op_cache, tiger_clk_cache):
    assert exact_partition(tiger_op_cache).class_count == 4
    assert exact_partition(tiger_clk_cache).class_count == 4
    op = build_cache(tiger, enumerate_stationary(1, 3, 2), 4, serial=True)
    clk = build_cache(tiger, enumerate_clock_aware(1, 4, 3, 2), 4, serial=True)
    op_partition, clk_partition = exact_partition(op), exact_partition(clk)
    assert op_partition.class_count == 11
    assert clk_partition.class_count == 16
    assert adjusted_rand_index(op_partition, clk_partition) == pytest.approx(0.9614, abs=1e-3)


def test_class_counts_shrink_with_epsilon(tiger):
    cache = build_cache(tiger, enumerate_stationary(1, 3, 2), 3, serial=True)
    counts = [eps_partition(cache, eps).class_count for eps in (0.0, 0.1, 0.25, 0.5, 1.0, 3.0)]
    assert counts == sorted(counts, reverse=True)
    assert counts[-1] == 4


def test_partition_rows_and_lookup(listen, listen_cache):
    partition = exact_partition(listen_cache)
    assert partition.class_counts() == [1, 2, 1]
    assert partition.class_of((0,)) != partition.class_of((1,))
    rows = partition.rows(listen)
    assert rows[0] == {"depth": 0, "history": "-", "class_id": 0}
    assert len(rows) == 7


def test_exact_quotient_is_sound(tiger, tiger_op_cache):
    quotient = build_quotient(tiger, exact_partition(tiger_op_cache))
    assert soundness_check(tiger, quotient) <= 1e-9
    assert quotient.representative_deviation <= 1e-7


def test_exact_clock_aware_quotient_is_sound(tiger):
    cache = build_cache(tiger, enumerate_clock_aware(1, 3, 3, 2), 3, serial=True)
    quotient = build_quotient(tiger, exact_partition(cache))
    assert soundness_check(tiger, quotient) <= 1e-9


def test_merged_quotient_distance(tiger, tiger_op_cache):
    partition = eps_partition(tiger_op_cache, 0.5)
    assert partition.class_count == 3
    quotient = build_quotient(tiger, partition)
    distance = model_distance(tiger, quotient, tiger_op_cache.family, 2)
    assert distance == pytest.approx(0.245, abs=1e-6)
    assert distance <= 0.5


def test_quotient_observation_law_is_normalized(tiger, tiger_op_cache):
    quotient = build_quotient(tiger, eps_partition(tiger_op_cache, 0.5))
    law = quotient.observation_law(tiger_op_cache.family[0])
    assert law.masses.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        quotient.observation_law(tiger_op_cache.family[0], 3)


def test_materialized_quotient(tiger, tiger_op_cache):
    quotient = build_quotient(tiger, exact_partition(tiger_op_cache))
    reduced = quotient.to_pomdp()
    # root, one state per (class, arriving observation) at depths 1..2, end
    assert reduced.state_count == 1 + 2 + 2 + 1
    assert reduced.actions == tiger.actions
    assert reduced.initial_belief[0] == 1.0


def test_kernel_rows(tiger, tiger_op_cache):
    quotient = build_quotient(tiger, exact_partition(tiger_op_cache))
    rows = quotient.kernel_rows()
    first = [r for r in rows if r["depth"] == 0 and r["action"] == "listen"]
    assert sum(r["probability"] for r in first) == pytest.approx(1.0)
    assert quotient.back_map(1, 0) == [(0,)]


def test_ari_identity_and_per_depth(tiger_op_cache):
    partition = exact_partition(tiger_op_cache)
    assert adjusted_rand_index(partition, partition) == 1.0
    assert all(v == 1.0 for v in per_depth_ari(partition, partition).values())


def test_ari_rejects_different_trees(tiger_op_cache, listen_cache):
    with pytest.raises(ValueError):
        adjusted_rand_index(exact_partition(tiger_op_cache), exact_partition(listen_cache))


def test_baselines(tiger, tiger_op_cache):
    exact = exact_partition(tiger_op_cache)
    truncation = truncation_partition(tiger_op_cache, 1)
    assert truncation.class_counts() == [1, 2, 2]
    assert truncation.epsilon is None

    shuffled = random_partition(exact, seed=3)
    assert shuffled.class_counts() == exact.class_counts()

    beliefs = belief_partition(tiger_op_cache, 0.0)
    assert beliefs.class_counts()[1] == 2

    # baselines carry no epsilon, so merging them never raises
    quotient = build_quotient(tiger, truncation)
    assert model_distance(tiger, quotient, tiger_op_cache.family, 2) >= 0.0


def test_sinks_for_unreachable_histories(witness):
    cache = build_cache(witness, enumerate_stationary(1, 2, 5), 2, serial=True)
    partition = exact_partition(cache)
    u = witness.observations.index("U")
    assert partition.labels[1][u] == SINK
    assert partition.sink_count() > 0


def test_exact_label_on_merged_classes_is_rejected(tiger, tiger_op_cache):
    merged = dataclasses.replace(eps_partition(tiger_op_cache, 0.5), epsilon=0.0)
    with pytest.raises(VerificationError, match="representative"):
        build_quotient(tiger, merged)
