"""Benchmark POMDP constructors."""

import itertools
import logging

import numpy as np

from .config import BENCHMARKS
from .errors import ConfigError
from .model import Pomdp
from .schemas import BenchmarkSpec

logger = logging.getLogger("bounded-quotient.benchmarks")

TIGER_ACCURACY = 0.85
GRID_MOVE_SUCCESS = 0.9
GRID_ACCURACY = 0.85
# Quadrant order puts the two west quadrants first; the quadrant metric is taxicab/2
QUADRANTS = ("NW", "SW", "NE", "SE")
QUADRANT_CELLS = {"NW": (0, 0), "SW": (1, 0), "NE": (0, 1), "SE": (1, 1)}
ROCK_SENSOR_HALF_DISTANCE = 2.0
NETWORK_FAILURE_RATE = 0.1
NETWORK_ACCURACY = 0.95
NETWORK_REBOOT_COST = 2.0
HALLWAY_ACCURACY = 0.9
HALLWAY_LANDMARKS = 3


def _check_range(spec_name: str, key: str, value) -> None:
    low, high = BENCHMARKS[spec_name]["ranges"][key]
    if value is None or not low <= value <= high:
        raise ConfigError(f"{spec_name}: {key}={value} outside [{low}, {high}]")


def tiger_full(accuracy: float = TIGER_ACCURACY, initial_left: float = 0.5) -> Pomdp:
    """
    The Tiger problem with listen, open-left and open-right.

    Opening a door resets the tiger uniformly and emits an uninformative
    observation. Listening costs 1, opening the safe door pays 10 and opening
    the tiger's door costs 100.
    """
    states = ("tiger-left", "tiger-right")
    actions = ("listen", "open-left", "open-right")
    observations = ("L", "R")

    transition = np.zeros((3, 2, 2))
    transition[0] = np.eye(2)
    transition[1:] = 0.5

    observation = np.full((3, 2, 2), 0.5)
    observation[0] = [[accuracy, 1 - accuracy], [1 - accuracy, accuracy]]

    reward = np.array([
        [-1.0, -100.0, 10.0],
        [-1.0, 10.0, -100.0],
    ])
    return Pomdp(
        name="tiger-full",
        states=states,
        actions=actions,
        observations=observations,
        transition=transition,
        observation=observation,
        reward=reward,
        initial_belief=np.array([initial_left, 1 - initial_left]),
        ground_metric_id="discrete",
    )


def tiger_listen_only(accuracy: float = TIGER_ACCURACY, initial_left: float = 0.5) -> Pomdp:
    """Tiger restricted to the listen action."""
    return Pomdp(
        name="tiger-listen",
        states=("tiger-left", "tiger-right"),
        actions=("listen",),
        observations=("L", "R"),
        transition=np.eye(2)[None, :, :],
        observation=np.array([[[accuracy, 1 - accuracy], [1 - accuracy, accuracy]]]),
        reward=np.full((2, 1), -1.0),
        initial_belief=np.array([initial_left, 1 - initial_left]),
        ground_metric_id="discrete",
    )


def quadrant_of(row: int, col: int, n: int) -> int:
    """Index into QUADRANTS of the quadrant containing cell (row, col)."""
    north = 2 * row < n
    west = 2 * col < n
    name = ("N" if north else "S") + ("W" if west else "E")
    return QUADRANTS.index(name)


def gridworld(n: int) -> Pomdp:
    """
    n x n grid with noisy quadrant observations.

    Moves succeed with probability 0.9 and otherwise stay put; moves into a wall
    stay put. The observed quadrant is correct with probability 0.85, the rest is
    spread over the other three. The goal (n-1, n-1) pays +1 and the trap (0, n-1)
    costs 1.
    """
    moves = {"Up": (-1, 0), "Down": (1, 0), "Left": (0, -1), "Right": (0, 1), "Stay": (0, 0)}
    actions = tuple(moves)
    cells = [(r, c) for r in range(n) for c in range(n)]
    n_s = n * n

    transition = np.zeros((len(actions), n_s, n_s))
    for a, (dr, dc) in enumerate(moves.values()):
        for s, (r, c) in enumerate(cells):
            tr = min(max(r + dr, 0), n - 1)
            tc = min(max(c + dc, 0), n - 1)
            target = tr * n + tc
            transition[a, s, target] += GRID_MOVE_SUCCESS
            transition[a, s, s] += 1 - GRID_MOVE_SUCCESS

    residual = (1 - GRID_ACCURACY) / (len(QUADRANTS) - 1)
    emission = np.full((n_s, len(QUADRANTS)), residual)
    for s, (r, c) in enumerate(cells):
        emission[s, quadrant_of(r, c, n)] = GRID_ACCURACY
    observation = np.repeat(emission[None, :, :], len(actions), axis=0)

    reward = np.zeros((n_s, len(actions)))
    reward[(n - 1) * n + (n - 1), :] = 1.0
    reward[n - 1, :] = -1.0

    return Pomdp(
        name=f"gridworld-{n}",
        states=tuple(f"({r},{c})" for r, c in cells),
        actions=actions,
        observations=QUADRANTS,
        transition=transition,
        observation=observation,
        reward=reward,
        initial_belief=np.full(n_s, 1.0 / n_s),
        ground_metric_id="quadrant",
    )


def rocksample(n: int, k: int, seed: int = 0) -> Pomdp:
    """
    RockSample(n, k).

    States are (x, y, rock qualities) plus one terminal state. The agent starts
    at (0, n // 2) with every rock configuration equally likely. Checking rock i
    reports its quality with accuracy 0.5 + 0.5 * 2^(-d/2) at Euclidean distance
    d. Sampling a good rock pays 10 and spoils it, anything else sampled costs 10.
    Leaving the grid eastwards pays 10 and ends the episode.
    """
    rng = np.random.default_rng(seed)
    start = (0, n // 2)
    free = [(x, y) for x in range(n) for y in range(n) if (x, y) != start]
    picks = rng.choice(len(free), size=k, replace=False)
    rocks = [free[i] for i in sorted(int(p) for p in picks)]

    configs = 2 ** k
    n_s = n * n * configs + 1
    terminal = n_s - 1

    def index(x: int, y: int, bits: int) -> int:
        return (x * n + y) * configs + bits

    actions = ("North", "South", "East", "West", "Sample") + tuple(f"Check-{i + 1}" for i in range(k))
    observations = ("none", "good", "bad")
    n_a = len(actions)

    transition = np.zeros((n_a, n_s, n_s))
    observation = np.zeros((n_a, n_s, 3))
    observation[:, :, 0] = 1.0
    reward = np.zeros((n_s, n_a))
    transition[:, terminal, terminal] = 1.0

    steps = {0: (0, 1), 1: (0, -1), 2: (1, 0), 3: (-1, 0)}
    for x, y, bits in itertools.product(range(n), range(n), range(configs)):
        s = index(x, y, bits)
        for a, (dx, dy) in steps.items():
            nx, ny = x + dx, y + dy
            if nx >= n:
                transition[a, s, terminal] = 1.0
                reward[s, a] = 10.0
            else:
                nx, ny = max(nx, 0), min(max(ny, 0), n - 1)
                transition[a, s, index(nx, ny, bits)] = 1.0

        if (x, y) in rocks:
            i = rocks.index((x, y))
            good = bool(bits >> i & 1)
            transition[4, s, index(x, y, bits & ~(1 << i))] = 1.0
            reward[s, 4] = 10.0 if good else -10.0
        else:
            transition[4, s, s] = 1.0
            reward[s, 4] = -10.0

        for i, (rx, ry) in enumerate(rocks):
            a = 5 + i
            transition[a, s, s] = 1.0
            distance = float(np.hypot(x - rx, y - ry))
            accuracy = 0.5 + 0.5 * 2.0 ** (-distance / ROCK_SENSOR_HALF_DISTANCE)
            good = bool(bits >> i & 1)
            observation[a, s] = [0.0, accuracy, 1 - accuracy] if good else [0.0, 1 - accuracy, accuracy]

    initial = np.zeros(n_s)
    for bits in range(configs):
        initial[index(*start, bits)] = 1.0 / configs

    names = [f"({x},{y})|{bits:0{k}b}" for x, y, bits in itertools.product(range(n), range(n), range(configs))]
    return Pomdp(
        name=f"rocksample-{n}-{k}",
        states=tuple(names) + ("terminal",),
        actions=actions,
        observations=observations,
        transition=transition,
        observation=observation,
        reward=reward,
        initial_belief=initial,
        ground_metric_id="discrete",
    )


def network_monitoring(n: int) -> Pomdp:
    """
    Network of n nodes; state bit i set means node i has failed.

    Working nodes fail independently with rate 0.1 per step and stay failed
    until a reboot, which restores every node and emits the null observation.
    Probing node i reports ok/fault with accuracy 0.95. Each step costs the
    number of failed nodes, and a reboot costs 2 more.
    """
    n_s = 2 ** n
    actions = tuple(f"probe-{i}" for i in range(n)) + ("reboot",)
    observations = ("ok", "fault", "null")

    failed = np.array([[s >> i & 1 for i in range(n)] for s in range(n_s)], dtype=bool)
    popcount = failed.sum(axis=1)
    current = np.arange(n_s)[:, None]
    following = np.arange(n_s)[None, :]
    # failed nodes never recover without a reboot
    allowed = (current & ~following) == 0
    newly = popcount[following & ~current]
    stays_up = n - popcount[np.broadcast_to(following, (n_s, n_s))]
    drift = np.where(
        allowed,
        NETWORK_FAILURE_RATE ** newly * (1 - NETWORK_FAILURE_RATE) ** stays_up,
        0.0,
    )

    transition = np.zeros((n + 1, n_s, n_s))
    observation = np.zeros((n + 1, n_s, 3))
    for i in range(n):
        transition[i] = drift
        for s in range(n_s):
            if failed[s, i]:
                observation[i, s] = [1 - NETWORK_ACCURACY, NETWORK_ACCURACY, 0.0]
            else:
                observation[i, s] = [NETWORK_ACCURACY, 1 - NETWORK_ACCURACY, 0.0]
    transition[n, :, 0] = 1.0
    observation[n, :, 2] = 1.0

    reward = np.repeat(-failed.sum(axis=1, keepdims=True).astype(float), n + 1, axis=1)
    reward[:, n] -= NETWORK_REBOOT_COST

    initial = np.zeros(n_s)
    initial[0] = 1.0
    return Pomdp(
        name=f"network-{n}",
        states=tuple(f"{s:0{n}b}" for s in range(n_s)),
        actions=actions,
        observations=observations,
        transition=transition,
        observation=observation,
        reward=reward,
        initial_belief=initial,
        ground_metric_id="discrete",
    )


def hallway(length: int) -> Pomdp:
    """Corridor of `length` cells with landmarks at position mod 3 and +1 at the right end."""
    actions = ("left", "right", "stay")
    observations = tuple(f"mark-{j}" for j in range(HALLWAY_LANDMARKS))
    shifts = (-1, 1, 0)

    transition = np.zeros((3, length, length))
    for a, shift in enumerate(shifts):
        for pos in range(length):
            transition[a, pos, min(max(pos + shift, 0), length - 1)] = 1.0

    residual = (1 - HALLWAY_ACCURACY) / (HALLWAY_LANDMARKS - 1)
    emission = np.full((length, HALLWAY_LANDMARKS), residual)
    for pos in range(length):
        emission[pos, pos % HALLWAY_LANDMARKS] = HALLWAY_ACCURACY
    observation = np.repeat(emission[None, :, :], 3, axis=0)

    reward = np.zeros((length, 3))
    reward[length - 1, :] = 1.0
    return Pomdp(
        name=f"hallway-{length}",
        states=tuple(f"cell-{pos}" for pos in range(length)),
        actions=actions,
        observations=observations,
        transition=transition,
        observation=observation,
        reward=reward,
        initial_belief=np.full(length, 1.0 / length),
        ground_metric_id="discrete",
    )


def random_pomdp(
    state_count: int,
    observation_count: int,
    seed: int = 0,
    action_count: int = 3,
    structured: bool = False,
) -> Pomdp:
    """
    Random POMDP with Dirichlet(1) kernel rows and uniform rewards in [0, 1].

    The structured variant keeps 3 successors per (s, a) before normalizing.
    """
    rng = np.random.default_rng(seed)
    shape = (action_count, state_count)
    transition = rng.dirichlet(np.ones(state_count), size=shape)
    if structured and state_count > 3:
        for a, s in itertools.product(range(action_count), range(state_count)):
            keep = rng.choice(state_count, size=3, replace=False)
            row = np.zeros(state_count)
            row[keep] = transition[a, s, keep]
            transition[a, s] = row / row.sum()
    observation = rng.dirichlet(np.ones(observation_count), size=shape)
    reward = rng.uniform(0.0, 1.0, size=(state_count, action_count))
    return Pomdp(
        name=f"random-{state_count}-{observation_count}-s{seed}",
        states=tuple(f"s{i}" for i in range(state_count)),
        actions=tuple(f"a{i}" for i in range(action_count)),
        observations=tuple(f"o{i}" for i in range(observation_count)),
        transition=transition,
        observation=observation,
        reward=reward,
        initial_belief=np.full(state_count, 1.0 / state_count),
        ground_metric_id="discrete",
    )


def stationary_witness() -> Pomdp:
    """
    Nine-state model where a one-node deterministic stationary controller cannot
    tell L from R but a stochastic or clock-aware one can.

    After L (resp. R) the model sits in x0 (y0). Action A moves to x1, B to the
    absorbing U state; from x1, A goes to U and B reveals X (Y for the y branch).
    """
    states = ("p_L", "p_R", "x0", "y0", "x1", "y1", "d_U", "d_X", "d_Y")
    actions = ("A", "B")
    observations = ("L", "R", "U", "X", "Y")
    s = {name: i for i, name in enumerate(states)}

    successors = {
        "p_L": ("x0", "x0"), "p_R": ("y0", "y0"),
        "x0": ("x1", "d_U"), "y0": ("y1", "d_U"),
        "x1": ("d_U", "d_X"), "y1": ("d_U", "d_Y"),
        "d_U": ("d_U", "d_U"), "d_X": ("d_X", "d_X"), "d_Y": ("d_Y", "d_Y"),
    }
    emits = {"p_L": "U", "p_R": "U", "x0": "L", "y0": "R", "x1": "U", "y1": "U",
             "d_U": "U", "d_X": "X", "d_Y": "Y"}

    transition = np.zeros((2, 9, 9))
    observation = np.zeros((2, 9, 5))
    for name, (after_a, after_b) in successors.items():
        transition[0, s[name], s[after_a]] = 1.0
        transition[1, s[name], s[after_b]] = 1.0
        observation[:, s[name], observations.index(emits[name])] = 1.0

    initial = np.zeros(9)
    initial[[s["p_L"], s["p_R"]]] = 0.5
    return Pomdp(
        name="witness",
        states=states,
        actions=actions,
        observations=observations,
        transition=transition,
        observation=observation,
        reward=np.zeros((9, 2)),
        initial_belief=initial,
        ground_metric_id="discrete",
    )


def make_benchmark(spec: BenchmarkSpec | str) -> Pomdp:
    """
    Build a benchmark model from its spec or CLI string form.

    Raises:
        ConfigError: unknown benchmark or parameters outside documented ranges
    """
    if isinstance(spec, str):
        spec = BenchmarkSpec.parse(spec)
    name = spec.name

    if name in ("tiger-full", "tiger-listen"):
        accuracy = TIGER_ACCURACY if spec.accuracy is None else spec.accuracy
        left = 0.5 if spec.left is None else spec.left
        _check_range(name, "accuracy", accuracy)
        _check_range(name, "left", left)
        build = tiger_full if name == "tiger-full" else tiger_listen_only
        return build(accuracy=accuracy, initial_left=left)
    if name == "gridworld":
        _check_range(name, "size", spec.size)
        return gridworld(spec.size)
    if name == "rocksample":
        _check_range(name, "size", spec.size)
        _check_range(name, "rocks", spec.rocks)
        if spec.rocks > spec.size * spec.size - 1:
            raise ConfigError(f"rocksample: {spec.rocks} rocks do not fit a {spec.size}x{spec.size} grid")
        return rocksample(spec.size, spec.rocks, seed=spec.seed or 0)
    if name == "network":
        _check_range(name, "nodes", spec.nodes)
        return network_monitoring(spec.nodes)
    if name == "hallway":
        _check_range(name, "length", spec.length)
        return hallway(spec.length)
    if name == "random":
        actions = 3 if spec.actions is None else spec.actions
        _check_range(name, "states", spec.states)
        _check_range(name, "observations", spec.observations)
        _check_range(name, "actions", actions)
        return random_pomdp(spec.states, spec.observations, seed=spec.seed or 0,
                            action_count=actions, structured=spec.structured)
    if name == "witness":
        return stationary_witness()
    raise ConfigError(f"unknown benchmark '{name}'")
