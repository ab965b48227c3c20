import itertools

import numpy as np
import pytest

from bounded_quotient.errors import AlphabetMismatchError, SizeGuardError
from bounded_quotient.probes import (
    ClockAwareFsc,
    StationaryFsc,
    StochasticFsc,
    clock_aware_family_size,
    closed_loop_belief,
    describe,
    enumerate_clock_aware,
    enumerate_family,
    enumerate_stationary,
    observation_law,
    sample_stochastic,
    stationary_family_size,
    suffix_law,
)
from bounded_quotient.schemas import FamilySpec


def _brute_force_law(pomdp, actions, horizon):
    """Open-loop law by summing over every state path."""
    law = {}
    n_s = pomdp.state_count
    for observations in itertools.product(range(pomdp.observation_count), repeat=horizon):
        total = 0.0
        for path in itertools.product(range(n_s), repeat=horizon + 1):
            weight = pomdp.initial_belief[path[0]]
            for t, a in enumerate(actions):
                weight *= pomdp.transition[a, path[t], path[t + 1]] * pomdp.observation[a, path[t + 1], observations[t]]
            total += weight
        if total > 0:
            law[observations] = total
    return law


def test_family_sizes():
    assert stationary_family_size(2, 3, 2) == 147
    assert stationary_family_size(2, 5, 4) == 6405
    assert stationary_family_size(2, 5, 3) == 1605
    assert clock_aware_family_size(2, 2, 3, 2) == 1296
    assert clock_aware_family_size(1, 4, 3, 2) == 81


def test_enumeration_matches_size_formula():
    assert len(enumerate_stationary(2, 3, 2)) == 147
    assert len(enumerate_clock_aware(2, 2, 3, 2)) == 1296


def test_enumeration_order():
    family = enumerate_stationary(2, 3, 2)
    assert [fsc.node_count for fsc in family][:3] == [1, 1, 1]
    assert family[3].node_count == 2
    clk = enumerate_clock_aware(1, 3, 3, 2)
    assert clk[0].stage_actions == ((0,), (0,), (0,))


def test_size_guard():
    with pytest.raises(SizeGuardError, match="layered"):
        enumerate_stationary(3, 3, 2, cap=100)


def test_enumerate_family_dispatch(tiger):
    assert len(enumerate_family(FamilySpec(kind="op"), tiger, 2)) == 3
    assert enumerate_family(FamilySpec(kind="clk"), tiger, 2).horizon == 2
    stochastic = enumerate_family(FamilySpec(kind="stochastic", count=5, seed=1), tiger, 2)
    assert len(stochastic) == 5


def test_stochastic_sampling_is_seeded():
    first = sample_stochastic(2, 3, 11, 3, 2)
    second = sample_stochastic(2, 3, 11, 3, 2)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.action_probs, b.action_probs)


def test_open_loop_law_matches_brute_force(tiger):
    fsc = ClockAwareFsc(((0,), (1,), (0,)), (((0, 0),), ((0, 0),)), 3, 2)
    law = observation_law(tiger, fsc, 3).as_dict()
    expected = _brute_force_law(tiger, (0, 1, 0), 3)
    assert set(law) == set(expected)
    for key, mass in expected.items():
        assert law[key] == pytest.approx(mass)


def test_listen_law(listen):
    fsc = StationaryFsc((0,), ((0, 0),), 1, 2)
    law = observation_law(listen, fsc, 2).as_dict()
    assert law[(0, 0)] == pytest.approx(0.3725)
    assert law[(0, 1)] == pytest.approx(0.1275)


def test_suffix_law_conditions_on_history(listen):
    fsc = StationaryFsc((0,), ((0, 0),), 1, 2)
    law = suffix_law(listen, fsc, (0,), 2)
    assert law.reach == pytest.approx(0.5)
    assert law.distribution.as_dict()[(0,)] == pytest.approx(0.745)


def test_unreachable_history(witness):
    fsc = StationaryFsc((0,), ((0,) * 5,), 2, 5)
    u = witness.observations.index("U")
    assert suffix_law(witness, fsc, (u,), 3).absent
    assert not closed_loop_belief(witness, fsc, (u,)).reachable


def test_reactive_controller_switches_action(tiger):
    # node 0 listens, moves to node 1 (open-left) after R
    fsc = StationaryFsc((0, 1), ((0, 1), (1, 1)), 3, 2)
    belief = closed_loop_belief(tiger, fsc, (1,))
    assert belief.joint[1].sum() == pytest.approx(1.0)


def test_alphabet_mismatch(tiger, listen):
    fsc = StationaryFsc((2,), ((0, 0),), 3, 2)
    with pytest.raises(AlphabetMismatchError):
        suffix_law(listen, fsc, (), 2)


def test_clock_aware_horizon_enforced(tiger):
    fsc = enumerate_clock_aware(1, 2, 3, 2)[0]
    with pytest.raises(ValueError):
        suffix_law(tiger, fsc, (), 3)


def test_stochastic_validation():
    with pytest.raises(ValueError):
        StochasticFsc(np.array([[0.6, 0.6]]), np.ones((1, 2, 1)))


def test_describe(tiger):
    assert describe(StationaryFsc((0,), ((0, 0),), 3, 2), tiger) == "listen"
    clk = ClockAwareFsc(((0,), (2,)), (((0, 0),),), 3, 2)
    assert describe(clk, tiger) == "listen open-right"
    assert describe(StationaryFsc((0, 1), ((0, 1), (1, 1)), 3, 2), tiger).startswith("stationary m=2")


def test_family_subset(tiger):
    family = enumerate_stationary(1, 3, 2)
    assert len(family.subset([2, 0])) == 2
    with pytest.raises(IndexError):
        family.subset([5])
