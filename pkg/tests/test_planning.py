import pytest

from bounded_quotient.planning import (
    action_observation_objective,
    check_exact_sufficiency,
    check_value_bound,
    compare_pbvi,
    constant_objective,
    exhaustive_search,
    latent_objective,
    observation_objective,
    observation_reward_model,
    pbvi,
    policy_value,
    sample_belief_points,
)
from bounded_quotient.probes import enumerate_clock_aware, enumerate_stationary
from bounded_quotient.quotient import build_quotient, eps_partition, exact_partition


def test_objectives(tiger):
    latent = latent_objective(tiger)
    assert not latent.agent_accessible
    assert latent.lipschitz == pytest.approx(110.0)
    bonus = action_observation_objective(tiger)
    assert bonus.action_bonus == (0.0, 0.5, 0.5)
    assert observation_objective(tiger).score_matrix(tiger).shape == (3, 2)


def test_all_listen_values(tiger):
    listen = enumerate_clock_aware(1, 4, 3, 2)[0]
    assert policy_value(tiger, listen, latent_objective(tiger), 4) == pytest.approx(-4.0)
    assert policy_value(tiger, listen, observation_objective(tiger), 4) == pytest.approx(2.0)
    assert policy_value(tiger, listen, constant_objective(tiger, 1.0), 4) == pytest.approx(4.0)


def test_latent_search(tiger):
    family = enumerate_clock_aware(1, 2, 3, 2)
    result = exhaustive_search(tiger, family, latent_objective(tiger), 2)
    assert result.policy == "listen listen"
    assert result.value == pytest.approx(-2.0)
    assert result.regret == 0.0


def test_exact_sufficiency(tiger, tiger_clk_cache):
    quotient = build_quotient(tiger, exact_partition(tiger_clk_cache))
    family = tiger_clk_cache.family
    for objective in (observation_objective(tiger), action_observation_objective(tiger)):
        assert check_exact_sufficiency(tiger, quotient, family, objective) <= 1e-9
        result = exhaustive_search(quotient, family, objective, 2)
        assert result.regret == pytest.approx(0.0, abs=1e-9)
        assert result.value == pytest.approx(result.original_value)


def test_exact_sufficiency_rejects_latent(tiger, tiger_clk_cache):
    quotient = build_quotient(tiger, exact_partition(tiger_clk_cache))
    with pytest.raises(ValueError):
        check_exact_sufficiency(tiger, quotient, tiger_clk_cache.family, latent_objective(tiger))


def test_value_bound(tiger, tiger_op_cache):
    quotient = build_quotient(tiger, eps_partition(tiger_op_cache, 0.5))
    report = check_value_bound(tiger, quotient, tiger_op_cache.family, observation_objective(tiger), 0.5)
    assert report.holds
    assert report.distance == pytest.approx(0.245, abs=1e-6)
    assert report.bound == pytest.approx(1.0)
    assert report.canonical_bound == pytest.approx(17 * report.bound)
    assert report.regret_bound == pytest.approx(2 * report.bound)
    assert report.empirical_gap <= report.bound


def test_value_bound_latent(tiger, tiger_op_cache):
    quotient = build_quotient(tiger, eps_partition(tiger_op_cache, 0.25))
    report = check_value_bound(tiger, quotient, tiger_op_cache.family, latent_objective(tiger), 0.25)
    assert report.bound == pytest.approx(110.0 * 2 * 0.25)
    assert report.holds


def test_observation_reward_model(tiger):
    model = observation_reward_model(tiger, observation_objective(tiger))
    assert model.reward[:, 0] == pytest.approx([0.85, 0.15])
    assert observation_reward_model(tiger, latent_objective(tiger)) is tiger


def test_belief_points(tiger):
    points = sample_belief_points(tiger, 3, 20, seed=4)
    assert points.shape == (20, 2)
    assert points[0] == pytest.approx([0.5, 0.5])


def test_pbvi_tiger(tiger):
    result = pbvi(tiger, 2)
    assert result.value == pytest.approx(-2.0)
    assert result.points == 50
    with pytest.raises(ValueError):
        pbvi(tiger, 0)


def test_pbvi_on_exact_quotient(tiger, tiger_op_cache):
    row = compare_pbvi(tiger, tiger_op_cache, 0.0)
    assert row["original_value"] == pytest.approx(-2.0)
    assert row["gap"] == pytest.approx(0.0, abs=1e-9)
    assert row["quotient_states"] == 6
    assert row["classes"] == 4
