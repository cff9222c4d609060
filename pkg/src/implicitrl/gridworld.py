"""Taxi gridworld: a deterministic, seedable MDP.

An agent drives on a square grid (default 8x8) picking up passengers
(+6) and crashing into roadblocks (-1) and parked cars (-5). Picked-up
objects respawn at a random unoccupied cell two ticks later. Episodes
run for a fixed 200 steps.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

GRID_SIZE = 8
EPISODE_LEN = 200
RESPAWN_DELAY = 2
OBJECTS_PER_TYPE = 2

# Object types, in the fixed order used for respawn resolution.
PASSENGER = "passenger"
ROADBLOCK = "roadblock"
PARKED_CAR = "parked_car"
OBJECT_TYPES = (PASSENGER, ROADBLOCK, PARKED_CAR)

REWARD_VALUES = (6, -1, -5)
GROUND_TRUTH_SPEC = {PASSENGER: 6, ROADBLOCK: -1, PARKED_CAR: -5}

# Actions
MAINTAIN = "maintain"
TURN_LEFT = "turn_left"
TURN_RIGHT = "turn_right"
ACTIONS = (MAINTAIN, TURN_LEFT, TURN_RIGHT)

HEADINGS = ("N", "E", "S", "W")
_DELTA = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}
_LEFT_OF = {"N": "W", "W": "S", "S": "E", "E": "N"}
_RIGHT_OF = {"N": "E", "E": "S", "S": "W", "W": "N"}


class EpisodeFinished(Exception):
    """Raised when stepping an episode that already ran its full length."""


def validate_spec(spec: dict) -> None:
    if set(spec) != set(OBJECT_TYPES) or sorted(spec.values()) != sorted(REWARD_VALUES):
        raise ValueError(f"reward spec must assign {REWARD_VALUES} to the three object types, got {spec}")


def turn(heading: str, action: str) -> str:
    if action == TURN_LEFT:
        return _LEFT_OF[heading]
    if action == TURN_RIGHT:
        return _RIGHT_OF[heading]
    return heading


def forward_cell(row: int, col: int, heading: str) -> tuple[int, int]:
    dr, dc = _DELTA[heading]
    return row + dr, col + dc


def in_grid(row: int, col: int, size: int) -> bool:
    return 0 <= row < size and 0 <= col < size


def lateral_free_cells(row: int, col: int, heading: str, size: int) -> tuple[int, int]:
    """Free cells to the agent's left and right, perpendicular to its heading."""
    counts = {}
    for side, h in (("left", _LEFT_OF[heading]), ("right", _RIGHT_OF[heading])):
        dr, dc = _DELTA[h]
        n = 0
        r, c = row + dr, col + dc
        while in_grid(r, c, size):
            n += 1
            r, c = r + dr, c + dc
        counts[side] = n
    return counts["left"], counts["right"]


def forced_turn(row: int, col: int, heading: str, size: int, tie_break) -> str:
    """Turn direction toward the farther boundary when facing the wall.

    tie_break: "left", "right", or an np.random.Generator for a coin flip.
    """
    left, right = lateral_free_cells(row, col, heading, size)
    if left > right:
        return TURN_LEFT
    if right > left:
        return TURN_RIGHT
    if isinstance(tie_break, str):
        return TURN_LEFT if tie_break == "left" else TURN_RIGHT
    return TURN_LEFT if tie_break.random() < 0.5 else TURN_RIGHT


@dataclass
class AgentPose:
    row: int
    col: int
    heading: str


@dataclass(frozen=True)
class StaticMap:
    """Immutable grid snapshot used as the planning substrate."""

    size: int
    objects: tuple[tuple[int, int, str], ...]  # (row, col, type), sorted

    def object_at(self, row: int, col: int) -> str | None:
        for r, c, t in self.objects:
            if (r, c) == (row, col):
                return t
        return None


@dataclass
class EnvState:
    size: int
    tick: int
    agent: AgentPose
    objects: dict[tuple[int, int], str]
    spawn_queue: list[tuple[str, int]]  # (type, due_tick)
    score: int
    spec: dict[str, int]
    rng: np.random.Generator
    episode_len: int = EPISODE_LEN

    def copy(self) -> "EnvState":
        return copy.deepcopy(self)

    def snapshot(self) -> dict:
        """JSON-ready snapshot of the observable state (rng excluded)."""
        return {
            "tick": self.tick,
            "agent": [self.agent.row, self.agent.col, self.agent.heading],
            "objects": sorted([r, c, t] for (r, c), t in self.objects.items()),
            "score": self.score,
        }

    def fingerprint(self) -> str:
        return json.dumps({**self.snapshot(), "queue": sorted(self.spawn_queue),
                           "rng": self.rng.bit_generator.state}, sort_keys=True, default=str)


def _free_cells(size: int, occupied) -> list[tuple[int, int]]:
    occ = set(occupied)
    return [(r, c) for r in range(size) for c in range(size) if (r, c) not in occ]


def new_episode(seed: int, spec: dict[str, int] | None = None, size: int = GRID_SIZE,
                episode_len: int = EPISODE_LEN) -> EnvState:
    """Fresh episode: two objects of each type plus the agent, all placed
    uniformly at random on distinct cells."""
    spec = dict(spec if spec is not None else GROUND_TRUTH_SPEC)
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    objects: dict[tuple[int, int], str] = {}
    for obj_type in OBJECT_TYPES:
        for _ in range(OBJECTS_PER_TYPE):
            free = _free_cells(size, objects)
            cell = free[rng.integers(len(free))]
            objects[cell] = obj_type
    free = _free_cells(size, objects)
    row, col = free[rng.integers(len(free))]
    heading = HEADINGS[rng.integers(4)]
    return EnvState(size=size, tick=0, agent=AgentPose(row, col, heading),
                    objects=objects, spawn_queue=[], score=0, spec=spec,
                    rng=rng, episode_len=episode_len)


def boundary_resolve(state: EnvState, action: str) -> str:
    """Replace Maintain with a forced turn when the agent faces the wall."""
    pose = state.agent
    if action != MAINTAIN:
        return action
    fr, fc = forward_cell(pose.row, pose.col, pose.heading)
    if in_grid(fr, fc, state.size):
        return action
    return forced_turn(pose.row, pose.col, pose.heading, state.size, state.rng)


def resolve_heading(row: int, col: int, heading: str, action: str, size: int, tie_break) -> str:
    """Post-action heading with boundary enforcement.

    A Maintain into the wall becomes a forced turn; a deliberate turn that
    would face the wall is itself re-resolved, so the agent can never leave
    the grid.
    """
    if action == MAINTAIN:
        fr, fc = forward_cell(row, col, heading)
        if not in_grid(fr, fc, size):
            action = forced_turn(row, col, heading, size, tie_break)
    new_heading = turn(heading, action)
    fr, fc = forward_cell(row, col, new_heading)
    if not in_grid(fr, fc, size):
        fix = forced_turn(row, col, new_heading, size, tie_break)
        new_heading = turn(new_heading, fix)
    return new_heading


def step(state: EnvState, action: str) -> tuple[EnvState, int, str | None]:
    """Advance one tick in place. Returns (state, reward, pickup event)."""
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    if state.tick >= state.episode_len:
        raise EpisodeFinished(f"episode already finished at tick {state.tick}")
    pose = state.agent
    pose.heading = resolve_heading(pose.row, pose.col, pose.heading, action, state.size, state.rng)
    pose.row, pose.col = forward_cell(pose.row, pose.col, pose.heading)

    reward = 0
    event = None
    cell = (pose.row, pose.col)
    if cell in state.objects:
        event = state.objects.pop(cell)
        reward = state.spec[event]
        state.spawn_queue.append((event, state.tick + RESPAWN_DELAY))

    new_tick = state.tick + 1
    due = [q for q in state.spawn_queue if q[1] <= new_tick]
    if due:
        state.spawn_queue = [q for q in state.spawn_queue if q[1] > new_tick]
        # Fixed type order keeps simultaneous respawns deterministic.
        for obj_type in OBJECT_TYPES:
            for _, _tick in [q for q in due if q[0] == obj_type]:
                free = _free_cells(state.size, set(state.objects) | {cell})
                spawn = free[state.rng.integers(len(free))]
                state.objects[spawn] = obj_type

    state.tick = new_tick
    state.score += reward
    return state, reward, event


def static_snapshot(state: EnvState) -> StaticMap:
    objects = tuple(sorted((r, c, t) for (r, c), t in state.objects.items()))
    return StaticMap(size=state.size, objects=objects)


@dataclass
class LogRecord:
    tick: int
    agent: list  # [row, col, heading] before the action
    objects: list  # [[row, col, type], ...] before the action
    action: str
    reward: int
    event: str | None


@dataclass
class EpisodeLog:
    records: list[LogRecord] = field(default_factory=list)
    seed: int | None = None
    spec: dict[str, int] | None = None

    def append(self, state_before: EnvState, action: str, reward: int, event: str | None) -> None:
        snap = state_before.snapshot()
        self.records.append(LogRecord(tick=snap["tick"], agent=snap["agent"],
                                      objects=snap["objects"], action=action,
                                      reward=reward, event=event))

    @property
    def total_reward(self) -> int:
        return sum(r.reward for r in self.records)

    def pickup_events(self) -> list[tuple[int, str, int]]:
        """(tick, object type, reward) for every pickup record."""
        return [(r.tick, r.event, r.reward) for r in self.records if r.event is not None]

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(json.dumps({"tick": r.tick, "agent": r.agent, "objects": r.objects,
                                     "action": r.action, "reward": r.reward, "event": r.event}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            log.records.append(LogRecord(tick=d["tick"], agent=d["agent"], objects=d["objects"],
                                         action=d["action"], reward=d["reward"], event=d["event"]))
        return log


def run_episode(seed: int, policy, spec: dict[str, int] | None = None,
                size: int = GRID_SIZE, episode_len: int = EPISODE_LEN) -> EpisodeLog:
    """Roll a full episode under `policy(state, just_picked_up) -> action`."""
    state = new_episode(seed, spec, size=size, episode_len=episode_len)
    log = EpisodeLog(seed=seed, spec=dict(state.spec))
    just_picked_up = False
    while state.tick < state.episode_len:
        action = policy(state, just_picked_up)
        before = state.copy()
        state, reward, event = step(state, action)
        log.append(before, action, reward, event)
        just_picked_up = event is not None
    return log
