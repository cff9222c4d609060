"""Scripted robotic-sorting trajectories for the transfer evaluation.

Each trajectory is a reward-event timeline (returns +2, 0 or -1) plus
reaction cues (reach/retract moments a watching human responds to).
Synthetic observers react to both through the same gesture model as in
the gridworld sessions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import observer as obs

# Observer reaction classes standing in for the sorting-task rewards:
# recycling a can (+2) reads as a strongly positive event, a wrong item
# (-1) as a mild negative one.
REWARD_TO_CLASS = {2: 6, -1: -1}
CUE_TO_CLASS = {"positive": 6, "negative": -1}


@dataclass
class Trajectory:
    name: str
    duration_s: float
    events: list[dict]
    cues: list[dict]
    final_return: float


def load_trajectories() -> list[Trajectory]:
    text = resources.files("implicitrl.data").joinpath("trajectories.json").read_text()
    raw = json.loads(text)
    if raw.get("version") != "trajectories-v1":
        raise ValueError(f"unknown trajectory file version {raw.get('version')!r}")
    return [Trajectory(name=t["name"], duration_s=raw["duration_s"],
                       events=t["events"], cues=t["cues"], final_return=t["return"])
            for t in raw["trajectories"]]


def trajectory_returns() -> dict[str, float]:
    return {t.name: t.final_return for t in load_trajectories()}


def record_trajectory(trajectory: Trajectory, profile: obs.ObserverProfile,
                      seed: int, fps: int = obs.FPS) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize one observer's feature stream for a trajectory."""
    rng = np.random.default_rng(seed)
    n_frames = int(round(trajectory.duration_s * fps))
    gestures = []
    for ev in trajectory.events:
        frame = int(round(ev["t_s"] * fps))
        gestures.extend(obs.react_to_event(profile, frame, REWARD_TO_CLASS[ev["reward"]],
                                           rng, fps=fps))
    for cue in trajectory.cues:
        frame = int(round(cue["t_s"] * fps))
        gestures.extend(obs.react_to_event(profile, frame, CUE_TO_CLASS[cue["valence"]],
                                           rng, fps=fps))
    gestures.extend(obs.background_gestures(profile, n_frames, rng, fps=fps))
    return obs.synthesize_frames(gestures, n_frames, rng, fps=fps)
