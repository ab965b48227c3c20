"""Finite-state-controller probes, probe families and closed-loop suffix laws."""

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import ENUMERATION_CAP
from .errors import AlphabetMismatchError, SizeGuardError
from .model import History, Pomdp
from .schemas import FamilySpec
from .transport import DiscreteDistribution

logger = logging.getLogger("bounded-quotient.probes")

STATIONARY = "stationary"
CLOCK_AWARE = "clock-aware"
STOCHASTIC = "stochastic"


@dataclass(frozen=True, eq=False)
class StationaryFsc:
    """Deterministic stationary controller; node 0 is the initial node."""
    action_map: Tuple[int, ...]
    node_transition: Tuple[Tuple[int, ...], ...]
    action_count: int
    observation_count: int

    deterministic = True
    horizon = None

    @property
    def node_count(self) -> int:
        return len(self.action_map)

    @cached_property
    def _policy(self) -> np.ndarray:
        policy = np.zeros((self.node_count, self.action_count))
        policy[np.arange(self.node_count), self.action_map] = 1.0
        return policy

    @cached_property
    def _transition(self) -> np.ndarray:
        return _one_hot_transition(self.node_transition, self.node_count, self.observation_count)

    def action_matrix(self, stage: int) -> np.ndarray:
        return self._policy

    def transition_tensor(self, stage: int) -> np.ndarray:
        return self._transition

    def next_nodes(self, stage: int) -> np.ndarray:
        return np.asarray(self.node_transition, dtype=int)

    def node_actions(self, stage: int) -> np.ndarray:
        return np.asarray(self.action_map, dtype=int)

    def to_text(self) -> str:
        alpha = ",".join(str(a) for a in self.action_map)
        beta = ";".join(f"{n}:" + ",".join(str(x) for x in row) for n, row in enumerate(self.node_transition))
        return f"stationary m={self.node_count} | alpha={alpha} | beta={beta}"


@dataclass(frozen=True, eq=False)
class ClockAwareFsc:
    """Deterministic controller with stage-indexed action and transition maps."""
    stage_actions: Tuple[Tuple[int, ...], ...]
    stage_transitions: Tuple[Tuple[Tuple[int, ...], ...], ...]
    action_count: int
    observation_count: int

    deterministic = True

    @property
    def node_count(self) -> int:
        return len(self.stage_actions[0])

    @property
    def horizon(self) -> int:
        return len(self.stage_actions)

    @cached_property
    def _policies(self) -> np.ndarray:
        policies = np.zeros((self.horizon, self.node_count, self.action_count))
        for stage, actions in enumerate(self.stage_actions):
            policies[stage, np.arange(self.node_count), actions] = 1.0
        return policies

    @cached_property
    def _transitions(self) -> List[np.ndarray]:
        return [_one_hot_transition(t, self.node_count, self.observation_count)
                for t in self.stage_transitions]

    @cached_property
    def _hold(self) -> np.ndarray:
        hold = [[n] * self.observation_count for n in range(self.node_count)]
        return _one_hot_transition(hold, self.node_count, self.observation_count)

    def _check_stage(self, stage: int) -> None:
        if not 0 <= stage < self.horizon:
            raise ValueError(f"stage {stage} outside clock-aware horizon {self.horizon}")

    def action_matrix(self, stage: int) -> np.ndarray:
        self._check_stage(stage)
        return self._policies[stage]

    def transition_tensor(self, stage: int) -> np.ndarray:
        self._check_stage(stage)
        # the last stage has no successor map; nodes hold
        if stage >= len(self.stage_transitions):
            return self._hold
        return self._transitions[stage]

    def next_nodes(self, stage: int) -> np.ndarray:
        self._check_stage(stage)
        if stage >= len(self.stage_transitions):
            return np.repeat(np.arange(self.node_count)[:, None], self.observation_count, axis=1)
        return np.asarray(self.stage_transitions[stage], dtype=int)

    def node_actions(self, stage: int) -> np.ndarray:
        self._check_stage(stage)
        return np.asarray(self.stage_actions[stage], dtype=int)

    def to_text(self) -> str:
        parts = [f"clock m={self.node_count} T={self.horizon}"]
        for stage, actions in enumerate(self.stage_actions):
            parts.append(f"t{stage} alpha=" + ",".join(str(a) for a in actions))
        for stage, rows in enumerate(self.stage_transitions):
            parts.append(f"t{stage} beta=" + ";".join(
                f"{n}:" + ",".join(str(x) for x in row) for n, row in enumerate(rows)))
        return " | ".join(parts)


@dataclass(frozen=True, eq=False)
class StochasticFsc:
    """Stochastic stationary controller with node 0 initial."""
    action_probs: np.ndarray
    transition_probs: np.ndarray

    deterministic = False
    horizon = None

    def __post_init__(self):
        policy = np.array(self.action_probs, dtype=float)
        transition = np.array(self.transition_probs, dtype=float)
        m = policy.shape[0]
        if transition.shape[0] != m or transition.shape[2] != m:
            raise ValueError(f"transition shape {transition.shape} does not match {m} nodes")
        for name, array in (("action", policy), ("transition", transition)):
            if np.any(array < 0) or np.max(np.abs(array.sum(axis=-1) - 1.0)) > 1e-12:
                raise ValueError(f"{name} distributions must be probability vectors")
        policy.setflags(write=False)
        transition.setflags(write=False)
        object.__setattr__(self, "action_probs", policy)
        object.__setattr__(self, "transition_probs", transition)

    @property
    def node_count(self) -> int:
        return self.action_probs.shape[0]

    @property
    def action_count(self) -> int:
        return self.action_probs.shape[1]

    @property
    def observation_count(self) -> int:
        return self.transition_probs.shape[1]

    def action_matrix(self, stage: int) -> np.ndarray:
        return self.action_probs

    def transition_tensor(self, stage: int) -> np.ndarray:
        return self.transition_probs

    def to_text(self) -> str:
        def fmt(array):
            return ",".join(f"{x:.6f}" for x in np.ravel(array))
        return f"stochastic m={self.node_count} | pi={fmt(self.action_probs)} | beta={fmt(self.transition_probs)}"


Controller = StationaryFsc | ClockAwareFsc | StochasticFsc


def _one_hot_transition(rows, node_count: int, observation_count: int) -> np.ndarray:
    tensor = np.zeros((node_count, observation_count, node_count))
    for n, row in enumerate(rows):
        tensor[n, np.arange(observation_count), list(row)] = 1.0
    return tensor


def describe(fsc: Controller, pomdp: Pomdp) -> str:
    """Short human label: action names for one-node controllers, canonical text otherwise."""
    if isinstance(fsc, StationaryFsc) and fsc.node_count == 1:
        return pomdp.actions[fsc.action_map[0]]
    if isinstance(fsc, ClockAwareFsc) and fsc.node_count == 1:
        return " ".join(pomdp.actions[actions[0]] for actions in fsc.stage_actions)
    return fsc.to_text()


@dataclass(frozen=True, eq=False)
class ProbeFamily:
    """A finite set of probe controllers sharing alphabets."""
    kind: str
    memory: int
    horizon: Optional[int]
    members: Tuple[Controller, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("a probe family needs at least one member")
        for fsc in self.members:
            if fsc.node_count > self.memory:
                raise ValueError(f"member with {fsc.node_count} nodes exceeds memory bound {self.memory}")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Controller]:
        return iter(self.members)

    def __getitem__(self, index: int) -> Controller:
        return self.members[index]

    @property
    def descriptor(self) -> str:
        suffix = f"-T{self.horizon}" if self.horizon is not None else ""
        return f"{self.kind}-m{self.memory}{suffix}"

    def subset(self, indices: Sequence[int]) -> "ProbeFamily":
        """A family holding only the listed members, in the given order."""
        for i in indices:
            if not 0 <= i < len(self.members):
                raise IndexError(f"probe index {i} out of range for family of {len(self.members)}")
        return ProbeFamily(self.kind, self.memory, self.horizon, tuple(self.members[i] for i in indices))

    def check_horizon(self, horizon: int, exact: bool = False) -> None:
        """Clock-aware members must cover the horizon (exactly, when requested)."""
        if self.horizon is None:
            return
        if horizon > self.horizon or (exact and horizon != self.horizon):
            raise ValueError(f"family horizon {self.horizon} does not fit horizon {horizon}")


def stationary_family_size(m: int, action_count: int, observation_count: int) -> int:
    """Σ_{m' ≤ m} |A|^{m'} (m')^{m'|O|}."""
    return sum(action_count ** k * k ** (k * observation_count) for k in range(1, m + 1))


def clock_aware_family_size(m: int, horizon: int, action_count: int, observation_count: int) -> int:
    """|A|^{T m} m^{(T-1) m |O|} stage-indexed controllers over exactly m nodes."""
    return action_count ** (horizon * m) * m ** ((horizon - 1) * m * observation_count)


def _guard(size: int, what: str, cap: int) -> None:
    if size > cap:
        raise SizeGuardError(
            f"{what} has {size:,} members, above the cap of {cap:,}; "
            f"use a layered plan (shorter segments), a greedy probe subset, "
            f"or raise QUOTIENT_ENUMERATION_CAP"
        )


def enumerate_stationary(m: int, action_count: int, observation_count: int,
                         cap: int = ENUMERATION_CAP) -> ProbeFamily:
    """
    All deterministic stationary controllers with at most m nodes.

    Members are ordered by node count, then lexicographically by action map
    and transition table. Duplicated behaviors are kept.

    Raises:
        SizeGuardError: when the family would exceed `cap`
    """
    if m < 1:
        raise ValueError(f"memory bound must be >= 1, got {m}")
    _guard(stationary_family_size(m, action_count, observation_count), "stationary family", cap)

    members = []
    for nodes in range(1, m + 1):
        for actions in itertools.product(range(action_count), repeat=nodes):
            for flat in itertools.product(range(nodes), repeat=nodes * observation_count):
                table = tuple(tuple(flat[n * observation_count:(n + 1) * observation_count])
                              for n in range(nodes))
                members.append(StationaryFsc(actions, table, action_count, observation_count))
    logger.debug(f"Enumerated {len(members)} stationary controllers (m<={m})")
    return ProbeFamily(STATIONARY, m, None, tuple(members))


def enumerate_clock_aware(m: int, horizon: int, action_count: int, observation_count: int,
                          cap: int = ENUMERATION_CAP) -> ProbeFamily:
    """
    All deterministic clock-aware controllers over exactly m nodes.

    For m=1 these are the |A|^T open-loop action sequences. Controllers with fewer
    nodes are behaviorally contained (they never leave node 0).

    Raises:
        SizeGuardError: when the family would exceed `cap`
    """
    if m < 1 or horizon < 1:
        raise ValueError(f"need m >= 1 and T >= 1, got m={m}, T={horizon}")
    _guard(clock_aware_family_size(m, horizon, action_count, observation_count), "clock-aware family", cap)

    cells = m * observation_count
    members = []
    for flat_actions in itertools.product(range(action_count), repeat=horizon * m):
        stage_actions = tuple(tuple(flat_actions[t * m:(t + 1) * m]) for t in range(horizon))
        for flat in itertools.product(range(m), repeat=(horizon - 1) * cells):
            stage_transitions = tuple(
                tuple(tuple(flat[t * cells + n * observation_count: t * cells + (n + 1) * observation_count])
                      for n in range(m))
                for t in range(horizon - 1)
            )
            members.append(ClockAwareFsc(stage_actions, stage_transitions, action_count, observation_count))
    logger.debug(f"Enumerated {len(members)} clock-aware controllers (m={m}, T={horizon})")
    return ProbeFamily(CLOCK_AWARE, m, horizon, tuple(members))


def sample_stochastic(m: int, count: int, seed: int, action_count: int,
                      observation_count: int) -> ProbeFamily:
    """Draw `count` stochastic m-node controllers with Dirichlet(1) rows."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if m < 1:
        raise ValueError(f"memory bound must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    members = []
    for _ in range(count):
        policy = rng.dirichlet(np.ones(action_count), size=m)
        transition = rng.dirichlet(np.ones(m), size=(m, observation_count))
        members.append(StochasticFsc(policy, transition))
    return ProbeFamily(STOCHASTIC, m, None, tuple(members))


def enumerate_family(spec: FamilySpec, pomdp: Pomdp, horizon: int) -> ProbeFamily:
    """Build the family a FamilySpec describes for a model and horizon."""
    if spec.kind == STATIONARY:
        return enumerate_stationary(spec.memory, pomdp.action_count, pomdp.observation_count)
    if spec.kind == CLOCK_AWARE:
        return enumerate_clock_aware(spec.memory, horizon, pomdp.action_count, pomdp.observation_count)
    return sample_stochastic(spec.memory, spec.count, spec.seed, pomdp.action_count, pomdp.observation_count)


def check_compatible(pomdp: Pomdp, fsc: Controller, horizon: int) -> None:
    """
    Raises:
        AlphabetMismatchError: controller alphabets differ from the model's
        ValueError: clock-aware controller shorter than the horizon
    """
    if fsc.action_count != pomdp.action_count or fsc.observation_count != pomdp.observation_count:
        raise AlphabetMismatchError(
            f"controller over |A|={fsc.action_count}, |O|={fsc.observation_count} does not fit "
            f"{pomdp.name} with |A|={pomdp.action_count}, |O|={pomdp.observation_count}"
        )
    if fsc.horizon is not None and horizon > fsc.horizon:
        raise ValueError(f"clock-aware controller of horizon {fsc.horizon} used at horizon {horizon}")


def initial_joint(pomdp: Pomdp, fsc: Controller) -> np.ndarray:
    """Joint (node, state) distribution before the first step."""
    joint = np.zeros((fsc.node_count, pomdp.state_count))
    joint[0] = pomdp.initial_belief
    return joint


def propagate(pomdp: Pomdp, fsc: Controller, joint: np.ndarray, stage: int) -> np.ndarray:
    """
    One closed-loop step from a joint (node, state) weight.

    Returns:
        Array [o, node', state'] of unnormalized joint weights after acting at
        `stage`, moving, emitting o and updating the controller node
    """
    policy = fsc.action_matrix(stage)
    emitted = np.zeros((pomdp.observation_count, fsc.node_count, pomdp.state_count))
    for a in range(pomdp.action_count):
        weight = joint * policy[:, a][:, None]
        if not weight.any():
            continue
        moved = weight @ pomdp.transition[a]
        emitted += moved[None, :, :] * pomdp.observation[a].T[:, None, :]
    return np.einsum("ont,nom->omt", emitted, fsc.transition_tensor(stage))


@dataclass(frozen=True, eq=False)
class FilteredBelief:
    """Normalized joint (node, state) belief after a history, with its reach probability."""
    joint: Optional[np.ndarray]
    reach: float

    @property
    def reachable(self) -> bool:
        return self.joint is not None

    @property
    def state_belief(self) -> np.ndarray:
        return self.joint.sum(axis=0)


def closed_loop_belief(pomdp: Pomdp, fsc: Controller, history: History) -> FilteredBelief:
    """Run the controller along `history`, conditioning each step on the observed symbol."""
    joint = initial_joint(pomdp, fsc)
    reach = 1.0
    for stage, o in enumerate(history):
        nxt = propagate(pomdp, fsc, joint, stage)[o]
        mass = float(nxt.sum())
        if mass <= 0.0:
            return FilteredBelief(None, 0.0)
        reach *= mass
        joint = nxt / mass
    return FilteredBelief(joint, reach)


def filtered_tree(pomdp: Pomdp, fsc: Controller, horizon: int) -> List[List[FilteredBelief]]:
    """Filtered beliefs for every history of depth 0..horizon, layers in lexicographic order."""
    n_o = pomdp.observation_count
    layer = [FilteredBelief(initial_joint(pomdp, fsc), 1.0)]
    layers = [layer]
    for stage in range(horizon):
        children = []
        for parent in layer:
            if not parent.reachable:
                children.extend([FilteredBelief(None, 0.0)] * n_o)
                continue
            nxt = propagate(pomdp, fsc, parent.joint, stage)
            for o in range(n_o):
                mass = float(nxt[o].sum())
                if mass > 0.0:
                    children.append(FilteredBelief(nxt[o] / mass, parent.reach * mass))
                else:
                    children.append(FilteredBelief(None, 0.0))
        layer = children
        layers.append(layer)
    return layers


def step_law(pomdp: Pomdp, fsc: Controller, joint: np.ndarray, stage: int) -> np.ndarray:
    """Joint law [a, o] of the next action and observation from a normalized joint belief."""
    policy = fsc.action_matrix(stage)
    law = np.zeros((pomdp.action_count, pomdp.observation_count))
    for a in range(pomdp.action_count):
        weight = (joint * policy[:, a][:, None]).sum(axis=0)
        if weight.any():
            law[a] = (weight @ pomdp.transition[a]) @ pomdp.observation[a]
    return law


@dataclass(frozen=True, eq=False)
class SuffixLaw:
    """Conditional law of the remaining observations; distribution is None when unreachable."""
    distribution: Optional[DiscreteDistribution]
    reach: float

    @property
    def absent(self) -> bool:
        return self.distribution is None


def expand(pomdp: Pomdp, fsc: Controller, joint: np.ndarray, start: int, horizon: int) -> DiscreteDistribution:
    """Exhaustive law of observations start+1..horizon from a normalized joint belief."""
    frontier = [((), joint)]
    for stage in range(start, horizon):
        grown = []
        for sequence, weight in frontier:
            nxt = propagate(pomdp, fsc, weight, stage)
            masses = nxt.sum(axis=(1, 2))
            for o in np.flatnonzero(masses > 0.0):
                grown.append((sequence + (int(o),), nxt[o]))
        frontier = grown
    support = tuple(seq for seq, _ in frontier)
    masses = np.array([w.sum() for _, w in frontier])
    return DiscreteDistribution(support, masses / masses.sum())


def suffix_law(pomdp: Pomdp, fsc: Controller, history: History, horizon: int) -> SuffixLaw:
    """
    Exact conditional law P(O_{t+1:T} | h) under a controller.

    Args:
        pomdp: The model
        fsc: Probe controller
        history: Observed prefix of depth t <= horizon
        horizon: Final step T

    Returns:
        SuffixLaw with the distribution over O^{T-t} and P(h); the distribution is
        None when P(h) = 0
    """
    if len(history) > horizon:
        raise ValueError(f"history depth {len(history)} exceeds horizon {horizon}")
    check_compatible(pomdp, fsc, horizon)
    filtered = closed_loop_belief(pomdp, fsc, history)
    if not filtered.reachable:
        return SuffixLaw(None, 0.0)
    return SuffixLaw(expand(pomdp, fsc, filtered.joint, len(history), horizon), filtered.reach)


def observation_law(pomdp: Pomdp, fsc: Controller, horizon: int) -> DiscreteDistribution:
    """Full-horizon observation law P^π(O_{1:T})."""
    return suffix_law(pomdp, fsc, (), horizon).distribution
