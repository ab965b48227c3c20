import pytest

from bounded_quotient.benchmarks import gridworld, stationary_witness, tiger_full, tiger_listen_only
from bounded_quotient.probes import enumerate_clock_aware, enumerate_stationary
from bounded_quotient.pseudometric import build_cache


@pytest.fixture
def tiger():
    return tiger_full()


@pytest.fixture
def listen():
    return tiger_listen_only()


@pytest.fixture
def grid3():
    return gridworld(3)


@pytest.fixture
def witness():
    return stationary_witness()


@pytest.fixture
def listen_cache(listen):
    family = enumerate_stationary(1, listen.action_count, listen.observation_count)
    return build_cache(listen, family, 2, serial=True)


@pytest.fixture
def tiger_op_cache(tiger):
    """Stationary one-node probes on Tiger at T=2."""
    family = enumerate_stationary(1, tiger.action_count, tiger.observation_count)
    return build_cache(tiger, family, 2, serial=True)


@pytest.fixture
def tiger_clk_cache(tiger):
    family = enumerate_clock_aware(1, 2, tiger.action_count, tiger.observation_count)
    return build_cache(tiger, family, 2, serial=True)
