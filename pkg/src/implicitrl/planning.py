"""Planning on static map snapshots.

Value iteration over (cell, heading) with a frozen object set, the
stochastic plan-switching behavior policy, and task-statistic
calculators (Q*, optimality, behavior Q, advantages, surprise) with
Monte Carlo estimation in the full regenerating environment.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gridworld as gw

GAMMA = 0.95
VI_TOL = 1e-6
MAX_SWEEPS = 10_000

# The three object-to-reward mappings the data-collection agent switches among.
BEHAVIOR_SPECS = (
    {gw.PASSENGER: 6, gw.ROADBLOCK: -1, gw.PARKED_CAR: -5},
    {gw.PASSENGER: -1, gw.ROADBLOCK: 6, gw.PARKED_CAR: -5},
    {gw.PASSENGER: -1, gw.ROADBLOCK: -5, gw.PARKED_CAR: 6},
)
SWITCH_PROB = 0.1

MC_N_ROLLOUTS = 200
MC_HORIZON = 100


class ValueIterationError(Exception):
    pass


def _state_index(row: int, col: int, heading: str, size: int) -> int:
    return (row * size + col) * 4 + gw.HEADINGS.index(heading)


def build_transitions(static_map: gw.StaticMap, spec: dict[str, int]):
    """Deterministic planning transitions and rewards.

    State space is (cell, heading); objects persist as standing rewards on
    their cells. Forced-turn ties resolve to TurnLeft so the model is
    deterministic.
    """
    size = static_map.size
    n = size * size * 4
    next_idx = np.zeros((n, 3), dtype=np.int64)
    rewards = np.zeros((n, 3))
    obj = {(r, c): t for r, c, t in static_map.objects}
    for row in range(size):
        for col in range(size):
            for heading in gw.HEADINGS:
                s = _state_index(row, col, heading, size)
                for a, action in enumerate(gw.ACTIONS):
                    h2 = gw.resolve_heading(row, col, heading, action, size, "left")
                    r2, c2 = gw.forward_cell(row, col, h2)
                    next_idx[s, a] = _state_index(r2, c2, h2, size)
                    if (r2, c2) in obj:
                        rewards[s, a] = spec[obj[(r2, c2)]]
    return next_idx, rewards


@dataclass
class ValueFunction:
    values: np.ndarray  # flat over (row, col, heading)
    next_idx: np.ndarray
    rewards: np.ndarray
    gamma: float
    size: int
    sweeps: int

    def value(self, row: int, col: int, heading: str) -> float:
        return float(self.values[_state_index(row, col, heading, self.size)])

    def q_values(self, row: int, col: int, heading: str) -> np.ndarray:
        s = _state_index(row, col, heading, self.size)
        return self.rewards[s] + self.gamma * self.values[self.next_idx[s]]

    def greedy_action(self, row: int, col: int, heading: str) -> str:
        return gw.ACTIONS[int(np.argmax(self.q_values(row, col, heading)))]

    def bellman_residual(self) -> float:
        backed = (self.rewards + self.gamma * self.values[self.next_idx]).max(axis=1)
        return float(np.abs(backed - self.values).max())


def value_iterate(static_map: gw.StaticMap, spec: dict[str, int], gamma: float = GAMMA,
                  tol: float = VI_TOL, max_sweeps: int = MAX_SWEEPS) -> ValueFunction:
    next_idx, rewards = build_transitions(static_map, spec)
    v = np.zeros(rewards.shape[0])
    for sweep in range(1, max_sweeps + 1):
        v_new = (rewards + gamma * v[next_idx]).max(axis=1)
        if np.abs(v_new - v).max() < tol:
            return ValueFunction(v_new, next_idx, rewards, gamma, static_map.size, sweep)
        v = v_new
    raise ValueIterationError(f"no convergence within {max_sweeps} sweeps")


@dataclass
class PolicyTable:
    actions: dict[tuple[int, int, str], str]
    spec: dict[str, int]

    def action(self, row: int, col: int, heading: str) -> str:
        return self.actions[(row, col, heading)]


def greedy_policy(vf: ValueFunction, spec: dict[str, int]) -> PolicyTable:
    actions = {}
    for row in range(vf.size):
        for col in range(vf.size):
            for heading in gw.HEADINGS:
                actions[(row, col, heading)] = vf.greedy_action(row, col, heading)
    return PolicyTable(actions=actions, spec=dict(spec))


@dataclass
class BehaviorPolicy:
    """Plan-switching data-collection policy: greedy under one of the three
    reward mappings, reselected after every pickup and with probability 0.1
    at each step."""

    rng: np.random.Generator
    switch_prob: float = SWITCH_PROB
    spec_index: int = 0
    _vi_cache: dict = field(default_factory=dict)

    @classmethod
    def seeded(cls, seed: int) -> "BehaviorPolicy":
        rng = np.random.default_rng(seed)
        bp = cls(rng=rng)
        bp.spec_index = int(rng.integers(len(BEHAVIOR_SPECS)))
        return bp

    @property
    def current_spec(self) -> dict[str, int]:
        return BEHAVIOR_SPECS[self.spec_index]

    def _value_function(self, static_map: gw.StaticMap) -> ValueFunction:
        key = (static_map.objects, self.spec_index)
        if key not in self._vi_cache:
            self._vi_cache[key] = value_iterate(static_map, self.current_spec)
        return self._vi_cache[key]

    def __call__(self, state: gw.EnvState, just_picked_up: bool) -> str:
        return self.step(state, just_picked_up)

    def step(self, state: gw.EnvState, just_picked_up: bool) -> str:
        if just_picked_up or self.rng.random() < self.switch_prob:
            self.spec_index = int(self.rng.integers(len(BEHAVIOR_SPECS)))
        vf = self._value_function(gw.static_snapshot(state))
        pose = state.agent
        return vf.greedy_action(pose.row, pose.col, pose.heading)


def random_policy(rng: np.random.Generator):
    def policy(state, just_picked_up):
        return gw.ACTIONS[int(rng.integers(3))]
    return policy


@dataclass
class MCEstimate:
    mean: float
    se: float
    n: int


def _rollout_return(state: gw.EnvState, first_action: str | None, policy, horizon: int,
                    gamma: float, rng: np.random.Generator) -> float:
    env = state.copy()
    env.rng = np.random.default_rng(rng.integers(2**63))
    total = 0.0
    just_picked_up = False
    for i in range(horizon):
        if env.tick >= env.episode_len:
            break
        if i == 0 and first_action is not None:
            action = first_action
        else:
            action = policy(env, just_picked_up)
        env, reward, event = gw.step(env, action)
        total += (gamma ** i) * reward
        just_picked_up = event is not None
    return total


def mc_estimate(state: gw.EnvState, action: str | None, policy, spec: dict[str, int],
                n_rollouts: int = MC_N_ROLLOUTS, horizon: int = MC_HORIZON,
                gamma: float = GAMMA, seed: int = 0) -> MCEstimate:
    """Sample-mean discounted return from `state` (taking `action` first when
    given, else following the policy throughout) in the full environment."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    rng = np.random.default_rng(seed)
    base = state.copy()
    base.spec = dict(spec)
    returns = np.array([_rollout_return(base, action, policy, horizon, gamma, rng)
                        for _ in range(n_rollouts)])
    se = float(returns.std(ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return MCEstimate(mean=float(returns.mean()), se=se, n=n_rollouts)


@dataclass
class TaskStatistics:
    q_star: float
    optimality: int
    q_behavior: float
    q_behavior_starred: float  # R + gamma * V*(s'), the as-printed variant
    advantage_star: float
    advantage_behavior: float
    surprise: float
    q_behavior_se: float
    v_behavior_se: float


def task_statistics(state: gw.EnvState, action: str, behavior_policy, spec: dict[str, int],
                    n_rollouts: int = MC_N_ROLLOUTS, horizon: int = MC_HORIZON,
                    gamma: float = GAMMA, seed: int = 0) -> TaskStatistics:
    """All six per-(state, action) task statistics.

    Q* terms come exactly from value iteration on the static snapshot;
    behavior-policy terms are Monte Carlo estimates in the full environment.
    """
    vf = value_iterate(gw.static_snapshot(state), spec, gamma=gamma)
    pose = state.agent
    qs = vf.q_values(pose.row, pose.col, pose.heading)
    a_idx = gw.ACTIONS.index(action)
    q_star = float(qs[a_idx])
    v_star = float(qs.max())
    optimality = int(q_star >= v_star - 1e-9)

    q_b = mc_estimate(state, action, behavior_policy, spec, n_rollouts, horizon, gamma, seed)
    v_b = mc_estimate(state, None, behavior_policy, spec, n_rollouts, horizon, gamma, seed + 1)

    s = _state_index(pose.row, pose.col, pose.heading, state.size)
    q_starred = float(vf.rewards[s, a_idx] + gamma * vf.values[vf.next_idx[s, a_idx]])

    return TaskStatistics(
        q_star=q_star,
        optimality=optimality,
        q_behavior=q_b.mean,
        q_behavior_starred=q_starred,
        advantage_star=q_star - v_star,
        advantage_behavior=q_b.mean - v_b.mean,
        surprise=q_b.mean - q_star,
        q_behavior_se=q_b.se,
        v_behavior_se=v_b.se,
    )
