import numpy as np
import pytest

from bounded_quotient.benchmarks import tiger_full
from bounded_quotient.errors import AlphabetMismatchError
from bounded_quotient.layered import (
    WrappedModel,
    Wrapper,
    apply_wrapper,
    boundary_belief,
    build_horizon_plan,
    check_data_processing,
    coarsen,
    histories_processed,
    identity_wrapper,
    noise_wrapper,
    quadrant_merge,
    run_layered,
    segment_lengths,
    terminal_belief,
)
from bounded_quotient.probes import enumerate_stationary
from bounded_quotient.pseudometric import model_distance
from bounded_quotient.schemas import FamilySpec
from bounded_quotient.transport import GroundMetric


def test_segment_lengths():
    assert segment_lengths(10, 5) == [5, 5]
    assert segment_lengths(6, 4) == [4, 2]
    assert segment_lengths(3, 5) == [3]
    with pytest.raises(ValueError):
        segment_lengths(4, 0)


@pytest.mark.parametrize("horizon, tau, expected", [(10, 5, 126), (6, 4, 38), (8, 4, 62), (4, 2, 14)])
def test_histories_processed(horizon, tau, expected):
    assert histories_processed(2, segment_lengths(horizon, tau)) == expected


def test_quadrant_merge(grid3):
    wrapper = quadrant_merge(grid3)
    assert wrapper.lipschitz == pytest.approx(1.0)
    assert wrapper.channel_map.tolist() == [0, 1, 0, 1]
    merged = apply_wrapper(grid3, wrapper)
    assert merged.observations == ("N", "S")
    assert merged.ground_metric_id == "line:0.5"


def test_noise_wrapper(tiger):
    wrapper = noise_wrapper(tiger, 0.1)
    assert wrapper.lipschitz == pytest.approx(0.8)
    assert not wrapper.deterministic
    with pytest.raises(ValueError):
        noise_wrapper(tiger, 1.5)
    with pytest.raises(ValueError, match="stochastic channel"):
        WrappedModel(tiger, wrapper)


def test_identity_wrapper_keeps_model(tiger):
    wrapped = apply_wrapper(tiger, identity_wrapper(tiger))
    np.testing.assert_array_equal(wrapped.transition, tiger.transition)
    assert wrapped.ground_metric_id == "discrete"


def test_stochastic_action_remap_augments_state(tiger):
    metric = GroundMetric.discrete(2)
    wrapper = Wrapper("any-action", np.full((1, 3), 1 / 3), np.eye(2), metric, metric,
                      tiger.observations, ("any",))
    wrapped = apply_wrapper(tiger, wrapper)
    assert wrapped.state_count == 6
    assert wrapped.actions == ("any",)


def test_wrapper_alphabet_mismatch(tiger, grid3):
    with pytest.raises(AlphabetMismatchError):
        apply_wrapper(tiger, quadrant_merge(grid3))


def test_coarsen_quadrants(grid3):
    coarse, spec = coarsen(grid3, 0.5)
    assert spec.representatives == (0, 1)
    assert spec.quantization == (0, 1, 0, 1)
    assert coarse.observations == ("NW", "SW")
    assert coarse.observation_count == 2


def test_coarsen_at_zero_resolution_keeps_alphabet(grid3):
    coarse, spec = coarsen(grid3, 0.0)
    assert spec.representatives == (0, 1, 2, 3)
    assert coarse.observation_count == 4


def test_data_processing_holds(grid3):
    wrapper = quadrant_merge(grid3)
    other = grid3.with_initial_belief(np.eye(9)[0])
    family = enumerate_stationary(1, 5, 2)
    check = check_data_processing(grid3, other, wrapper, family, 2)
    assert check.holds
    assert 0.0 < check.lhs <= check.rhs + 1e-9


def test_layered_plan(tiger):
    plan = build_horizon_plan(tiger, 4, 2, 0.0, FamilySpec(kind="stationary", memory=1))
    assert plan.lengths == [2, 2]
    result = run_layered(plan)
    assert len(result.rows) == 2
    assert result.histories_processed == 14
    assert result.direct_histories == 31
    first, second = result.rows
    assert first.gamma == pytest.approx(0.0, abs=1e-9)
    assert second.lipschitz == pytest.approx(1.0)
    assert second.empirical <= second.bound + 1e-9
    assert result.terminal_value_bound(1.0, 4) == pytest.approx(4 * second.gamma)


def test_layered_plan_with_merging(tiger):
    plan = build_horizon_plan(tiger, 4, 2, 0.5, FamilySpec(kind="stationary", memory=1))
    result = run_layered(plan)
    first = result.rows[0]
    family = plan.segments[0].family
    assert first.gamma == pytest.approx(model_distance(tiger, plan.segments[0].approximate, family, 2))
    assert result.rows[1].empirical <= result.rows[1].bound + 1e-9


@pytest.fixture
def lopsided_tiger():
    return tiger_full(initial_left=0.8)


def test_stitched_segments_measure_residual(tiger):
    plan = build_horizon_plan(tiger, 8, 4, 0.5, FamilySpec(kind="stationary", memory=1))
    result = run_layered(plan)
    one, two = result.rows
    assert one.gamma > 0
    # symmetric entry belief, so segment 2 repeats the segment 1 quotient error
    assert two.residual == pytest.approx(one.gamma, abs=1e-6)
    assert two.carry == pytest.approx(0.0, abs=1e-9)
    assert two.bound == pytest.approx(two.lipschitz * one.gamma + two.residual)
    assert two.empirical <= two.bound + 1e-9
    assert result.holds


def test_segment_entry_beliefs(lopsided_tiger):
    plan = build_horizon_plan(lopsided_tiger, 4, 2, 0.0, FamilySpec(kind="stationary", memory=1))
    first, second = plan.segments
    listen = first.family[first.approximate.reference]
    np.testing.assert_allclose(boundary_belief(lopsided_tiger, listen, 2), [0.8, 0.2], atol=1e-12)
    np.testing.assert_allclose(second.reference.initial_belief, [0.8, 0.2], atol=1e-12)
    # uniform average of the four depth-2 posteriors
    np.testing.assert_allclose(terminal_belief(first.approximate), [0.675762, 0.324238], atol=1e-5)
    np.testing.assert_allclose(second.approximate.pomdp.initial_belief, [0.675762, 0.324238], atol=1e-5)


def test_ledger_flags_carry_beyond_recursion(lopsided_tiger):
    plan = build_horizon_plan(lopsided_tiger, 4, 2, 0.0, FamilySpec(kind="stationary", memory=1))
    result = run_layered(plan)
    one, two = result.rows
    assert one.gamma == pytest.approx(0.0, abs=1e-9)
    assert two.residual == pytest.approx(0.0, abs=1e-9)
    assert two.carry > 0.05
    assert two.empirical == pytest.approx(two.carry, abs=1e-9)
    assert two.bound == pytest.approx(0.0, abs=1e-9)
    assert not two.holds
    assert not result.holds


def test_layered_approximation_must_be_stitched(lopsided_tiger):
    plan = build_horizon_plan(lopsided_tiger, 4, 2, 0.0, FamilySpec(kind="stationary", memory=1))
    plan.segments[1].approximate = plan.segments[0].approximate
    with pytest.raises(ValueError, match="built on"):
        run_layered(plan)


def test_layered_chain_must_match(tiger):
    plan = build_horizon_plan(tiger, 4, 2, 0.0, FamilySpec(kind="stationary", memory=1))
    plan.segments[1].reference = tiger.with_initial_belief([0.9, 0.1])
    with pytest.raises(ValueError, match="wrapped"):
        run_layered(plan)
