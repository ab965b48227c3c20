import numpy as np
import pytest

from bounded_quotient.model import (
    Pomdp,
    belief_update,
    effective_dimension,
    history_count,
    history_tree,
    predict,
)


def test_history_counts():
    assert history_count(4, 2) == 21
    assert history_count(3, 2) == 13
    assert history_count(2, 10) == 2047


def test_history_tree_is_lexicographic(listen):
    layers = history_tree(listen, 2)
    assert layers[0] == [()]
    assert layers[1] == [(0,), (1,)]
    assert layers[2] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    # child index = parent index * |O| + o
    assert layers[2].index((1, 0)) == 1 * 2 + 0


def test_history_tree_rejects_zero_horizon(listen):
    with pytest.raises(ValueError):
        history_tree(listen, 0)


def test_listen_update(tiger):
    update = belief_update(tiger, [0.5, 0.5], 0, 0)
    assert not update.zero_mass
    assert update.probability == pytest.approx(0.5)
    assert update.belief == pytest.approx([0.85, 0.15])


def test_open_resets_belief(tiger):
    update = belief_update(tiger, [0.85, 0.15], 1, 0)
    assert update.belief == pytest.approx([0.5, 0.5])


def test_zero_mass_update(witness):
    # the first observation is L or R, never X
    update = belief_update(witness, witness.initial_belief, 0, witness.observations.index("X"))
    assert update.zero_mass
    assert update.belief is None
    assert update.probability == 0.0


def test_predict(tiger):
    assert predict(tiger, np.array([1.0, 0.0]), 0) == pytest.approx([0.85, 0.15])


def test_effective_dimension():
    assert effective_dimension(np.full(4, 0.25)) == pytest.approx(4.0)
    assert effective_dimension([1.0, 0.0]) == pytest.approx(1.0)


def test_invalid_kernels_rejected(tiger):
    transition = np.array(tiger.transition)
    transition[0, 0] = [0.7, 0.7]
    with pytest.raises(ValueError, match="sum to 1"):
        Pomdp(
            name="broken",
            states=tiger.states,
            actions=tiger.actions,
            observations=tiger.observations,
            transition=transition,
            observation=tiger.observation,
            reward=tiger.reward,
            initial_belief=tiger.initial_belief,
        )


def test_shape_mismatch_rejected(tiger):
    with pytest.raises(ValueError, match="shape"):
        Pomdp(
            name="broken",
            states=tiger.states,
            actions=tiger.actions,
            observations=tiger.observations,
            transition=tiger.transition[:2],
            observation=tiger.observation,
            reward=tiger.reward,
            initial_belief=tiger.initial_belief,
        )


def test_with_initial_belief(tiger):
    shifted = tiger.with_initial_belief([0.1, 0.9])
    assert shifted.initial_belief == pytest.approx([0.1, 0.9])
    assert tiger.initial_belief == pytest.approx([0.5, 0.5])
    with pytest.raises(ValueError):
        tiger.with_initial_belief([0.2, 0.3, 0.5])


def test_format_history(tiger, grid3):
    assert tiger.format_history(()) == "-"
    assert tiger.format_history((0, 1)) == "LR"
    assert grid3.format_history((0, 3)) == "NW.SE"
