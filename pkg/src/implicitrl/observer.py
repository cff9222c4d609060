"""Synthetic human observer.

Parametric gesture-emission model conditioned on reward events, plus a
frame-level synthesizer that turns gesture events into the 42-dim
facial feature stream and ground-truth annotation traces.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import features as feat
from . import gridworld as gw

FPS = 30
DEFAULT_STEP_PERIOD_S = 1.5

# Annotated gesture kinds plus the three sentiment channels.
SMILE = "smile"
POUT = "pout"
EYEBROW_RAISE = "eyebrow_raise"
EYEBROW_FROWN = "eyebrow_frown"
HEAD_NOD = "head_nod"
HEAD_SHAKE = "head_shake"
EYE_ROLL = "eye_roll"
GESTURE_KINDS = (SMILE, POUT, EYEBROW_RAISE, EYEBROW_FROWN, HEAD_NOD, HEAD_SHAKE, EYE_ROLL)

POSITIVE = "positive"
NEGATIVE = "negative"
NEUTRAL = "neutral"
SENTIMENTS = (POSITIVE, NEGATIVE, NEUTRAL)

ANNOTATION_CHANNELS = GESTURE_KINDS + SENTIMENTS  # width 10

GESTURE_VALENCE = {
    SMILE: POSITIVE,
    POUT: NEGATIVE,
    EYEBROW_RAISE: POSITIVE,
    EYEBROW_FROWN: NEGATIVE,
    HEAD_NOD: POSITIVE,
    HEAD_SHAKE: NEGATIVE,
    EYE_ROLL: NEGATIVE,
}

# Reaction onsets cluster in this window around the provoking event.
LATENCY_BOUNDS_S = (-2.8, 3.6)

# A valence-confused observer misreads the event but reacts with matching
# strength: the two large-magnitude classes swap, the mild negative class
# flips to the only positive class.
CONFUSION_FLIP = {6: -5, -5: 6, -1: 6}

# AU channels driven by each facial gesture.
GESTURE_AUS = {
    SMILE: ("06", "12"),
    POUT: ("15", "17"),
    EYEBROW_RAISE: ("01", "02", "05"),
    EYEBROW_FROWN: ("04", "07"),
    EYE_ROLL: ("05",),  # plus an AU45 blink burst, handled specially
}
HEAD_GESTURE_DIM = {HEAD_NOD: "pose_Rx", HEAD_SHAKE: "pose_Ry"}
HEAD_FREQ_HZ = 2.0
HEAD_AMPLITUDE_RAD = 0.12  # per unit intensity


@dataclass
class GestureEvent:
    kind: str
    onset_frame: int
    offset_frame: int
    sentiment: str
    intensity: float = 1.0
    provoking_tick: int | None = None

    def __post_init__(self):
        if self.offset_frame - self.onset_frame < 2:
            self.offset_frame = self.onset_frame + 2


@dataclass
class ClassReaction:
    """Gesture emission behavior for one reward class."""

    gesture_probs: dict[str, float]
    intensity: float = 3.0
    multi_gesture_prob: float = 0.0

    def __post_init__(self):
        total = sum(self.gesture_probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"gesture probabilities must sum to 1, got {total}")


@dataclass
class ObserverProfile:
    reactions: dict[int, ClassReaction]
    reaction_prob: float = 1.0
    latency_mean_s: float = 1.47
    latency_sd_s: float = 0.8
    duration_mean_s: float = 1.2
    duration_sd_s: float = 0.3
    background_rate_per_min: float = 2.0
    confusion_rate: float = 0.0
    name: str = "custom"

    def replaced(self, **kw) -> "ObserverProfile":
        d = asdict(self)
        d["reactions"] = {c: ClassReaction(**r) for c, r in d["reactions"].items()}
        d.update(kw)
        return ObserverProfile(**d)


def clean_profile(**kw) -> ObserverProfile:
    """High-SNR observer: valence-faithful, class-distinct gestures, no
    background noise or confusion."""
    prof = ObserverProfile(
        reactions={
            6: ClassReaction({SMILE: 0.6, HEAD_NOD: 0.4}, intensity=4.0, multi_gesture_prob=0.5),
            -1: ClassReaction({POUT: 1.0}, intensity=2.0, multi_gesture_prob=0.0),
            -5: ClassReaction({EYEBROW_FROWN: 0.5, HEAD_SHAKE: 0.5}, intensity=4.0,
                              multi_gesture_prob=0.5),
        },
        reaction_prob=1.0,
        latency_sd_s=0.4,
        background_rate_per_min=0.0,
        confusion_rate=0.0,
        name="clean",
    )
    return prof.replaced(**kw) if kw else prof


def default_profile(**kw) -> ObserverProfile:
    """Noisier observer: smiles appear under negative classes, the two
    negative classes share gesture kinds and differ only in intensity and
    multi-gesture probability."""
    negative_kinds = {EYEBROW_FROWN: 0.4, POUT: 0.3, HEAD_SHAKE: 0.2, SMILE: 0.1}
    prof = ObserverProfile(
        reactions={
            6: ClassReaction({SMILE: 0.45, HEAD_NOD: 0.35, EYEBROW_RAISE: 0.2}, intensity=3.0,
                             multi_gesture_prob=0.3),
            -1: ClassReaction(dict(negative_kinds), intensity=1.5, multi_gesture_prob=0.1),
            -5: ClassReaction(dict(negative_kinds), intensity=3.5, multi_gesture_prob=0.5),
        },
        reaction_prob=0.85,
        background_rate_per_min=2.0,
        confusion_rate=0.05,
        name="default",
    )
    return prof.replaced(**kw) if kw else prof


PROFILES = {"clean": clean_profile, "default": default_profile}


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float,
                      lo: float, hi: float) -> float:
    if sd <= 0:
        return min(max(mean, lo), hi)
    for _ in range(1000):
        x = rng.normal(mean, sd)
        if lo <= x <= hi:
            return x
    return min(max(mean, lo), hi)


def react_to_event(profile: ObserverProfile, event_frame: int, reward_class: int,
                   rng: np.random.Generator, fps: int = FPS,
                   provoking_tick: int | None = None) -> list[GestureEvent]:
    """Gesture emissions provoked by one reward event.

    With `reaction_prob`, 1-2 gestures are drawn from the (possibly
    valence-flipped) class distribution; onsets are the event time plus a
    truncated-Gaussian latency.
    """
    if reward_class not in profile.reactions:
        raise ValueError(f"unknown reward class {reward_class}")
    if rng.random() >= profile.reaction_prob:
        return []
    emission_class = reward_class
    if rng.random() < profile.confusion_rate:
        emission_class = CONFUSION_FLIP[reward_class]
    reaction = profile.reactions[emission_class]
    sentiment = POSITIVE if emission_class == 6 else NEGATIVE
    n_gestures = 2 if rng.random() < reaction.multi_gesture_prob else 1
    kinds = list(reaction.gesture_probs)
    probs = np.array([reaction.gesture_probs[k] for k in kinds])
    events = []
    for _ in range(n_gestures):
        kind = kinds[rng.choice(len(kinds), p=probs)]
        latency = _truncated_normal(rng, profile.latency_mean_s, profile.latency_sd_s,
                                    *LATENCY_BOUNDS_S)
        duration = max(2 / fps, rng.normal(profile.duration_mean_s, profile.duration_sd_s))
        onset = int(round(event_frame + latency * fps))
        offset = onset + int(round(duration * fps))
        events.append(GestureEvent(kind=kind, onset_frame=onset, offset_frame=offset,
                                   sentiment=sentiment, intensity=reaction.intensity,
                                   provoking_tick=provoking_tick))
    return events


def background_gestures(profile: ObserverProfile, n_frames: int,
                        rng: np.random.Generator, fps: int = FPS) -> list[GestureEvent]:
    minutes = n_frames / fps / 60.0
    count = rng.poisson(profile.background_rate_per_min * minutes)
    events = []
    for _ in range(count):
        kind = GESTURE_KINDS[rng.choice(len(GESTURE_KINDS))]
        onset = int(rng.integers(n_frames))
        duration = max(2 / fps, rng.normal(profile.duration_mean_s, profile.duration_sd_s))
        events.append(GestureEvent(kind=kind, onset_frame=onset,
                                   offset_frame=onset + int(round(duration * fps)),
                                   sentiment=NEUTRAL, intensity=1.0,
                                   provoking_tick=None))
    return events


def baseline_frames(n_frames: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Neutral-face stream: low AU intensities, slow pose random walk."""
    features = np.zeros((n_frames, 42))
    features[:, feat.SUCCESS_IDX] = 1.0
    for au in feat.AU_R_IDS:
        features[:, feat.column_index(f"AU{au}_r")] = np.abs(rng.normal(0, 0.05, n_frames))
    for col in feat.POSE_COLUMNS:
        scale = 0.1 if col.startswith("pose_T") else 0.002
        features[:, feat.column_index(col)] = np.cumsum(rng.normal(0, scale, n_frames))
    return features, np.zeros((n_frames, feat.N_ANNOTATION))


def overlay_gesture(features: np.ndarray, annotations: np.ndarray,
                    g: GestureEvent, fps: int = FPS) -> None:
    """Apply one gesture to a frame stream in place.

    AU channels combine with existing content by max; head-motion
    sinusoids add to pose.
    """
    n_frames = features.shape[0]
    lo = max(0, g.onset_frame)
    hi = min(n_frames, g.offset_frame)
    if hi <= lo:
        return
    annotations[lo:hi, ANNOTATION_CHANNELS.index(g.kind)] = 1.0
    annotations[lo:hi, ANNOTATION_CHANNELS.index(g.sentiment)] = 1.0
    span = np.arange(lo, hi)
    if g.kind in HEAD_GESTURE_DIM:
        col = feat.column_index(HEAD_GESTURE_DIM[g.kind])
        phase = 2 * np.pi * HEAD_FREQ_HZ * (span - g.onset_frame) / fps
        features[span, col] += HEAD_AMPLITUDE_RAD * g.intensity * np.sin(phase)
    else:
        for au in GESTURE_AUS[g.kind]:
            c = feat.column_index(f"AU{au}_c")
            features[lo:hi, c] = 1.0
            r = f"AU{au}_r"
            if r in feat.FEATURE_COLUMNS:
                ri = feat.column_index(r)
                features[lo:hi, ri] = np.maximum(features[lo:hi, ri], g.intensity)
        if g.kind == EYE_ROLL:
            burst_on = ((span - g.onset_frame) // 4) % 2 == 0
            on = span[burst_on]
            features[on, feat.column_index("AU45_c")] = 1.0
            ri = feat.column_index("AU45_r")
            features[on, ri] = np.maximum(features[on, ri], g.intensity)


def synthesize_frames(gestures: list[GestureEvent], n_frames: int,
                      rng: np.random.Generator, fps: int = FPS) -> tuple[np.ndarray, np.ndarray]:
    """Neutral-face baseline stream with gesture overlays.

    Returns (features (n, 42), annotations (n, 10)).
    """
    features, annotations = baseline_frames(n_frames, rng)
    for g in gestures:
        overlay_gesture(features, annotations, g, fps=fps)
    return features, annotations


@dataclass
class SessionRecording:
    """Time-aligned bundle: episode log + feature stream + annotations."""

    episode_log: gw.EpisodeLog
    features: np.ndarray
    annotations: np.ndarray
    gestures: list[GestureEvent]
    fps: int = FPS
    step_period_s: float = DEFAULT_STEP_PERIOD_S
    subject: str = "s0"
    episode: int = 0
    spec: dict[str, int] = field(default_factory=lambda: dict(gw.GROUND_TRUTH_SPEC))

    @property
    def frames_per_step(self) -> float:
        return self.fps * self.step_period_s

    def reward_by_tick(self) -> dict[int, int]:
        return {t: r for t, _obj, r in self.episode_log.pickup_events()}

    def event_object_by_tick(self) -> dict[int, str]:
        return {t: obj for t, obj, _r in self.episode_log.pickup_events()}

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "episode.jsonl"), "w") as f:
            f.write(self.episode_log.to_jsonl())
        feat.write_csv(os.path.join(directory, "features.csv"), self.features)
        with open(os.path.join(directory, "annotations.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("frame",) + ANNOTATION_CHANNELS)
            for i, row in enumerate(self.annotations):
                w.writerow([i] + [int(v) for v in row])
        meta = {"fps": self.fps, "step_period_s": self.step_period_s,
                "subject": self.subject, "episode": self.episode, "spec": self.spec}
        with open(os.path.join(directory, "meta.json"), "w") as f:
            json.dump(meta, f, sort_keys=True, indent=1)

    @classmethod
    def load(cls, directory: str) -> "SessionRecording":
        with open(os.path.join(directory, "episode.jsonl")) as f:
            log = gw.EpisodeLog.from_jsonl(f.read())
        features, _success = feat.ingest_csv(os.path.join(directory, "features.csv"))
        annotations = []
        with open(os.path.join(directory, "annotations.csv"), newline="") as f:
            reader = csv.reader(f)
            next(reader)
            for row in reader:
                annotations.append([float(v) for v in row[1:]])
        with open(os.path.join(directory, "meta.json")) as f:
            meta = json.load(f)
        return cls(episode_log=log, features=features, annotations=np.array(annotations),
                   gestures=[], fps=meta["fps"], step_period_s=meta["step_period_s"],
                   subject=meta["subject"], episode=meta["episode"], spec=meta["spec"])


def event_frame_for_tick(tick: int, fps: int, step_period_s: float) -> int:
    """Reward lands mid-way through its tick's frame span."""
    return int((tick + 0.5) * fps * step_period_s)


def generate_session(profile: ObserverProfile, episode_log: gw.EpisodeLog, seed: int,
                     fps: int = FPS, step_period_s: float = DEFAULT_STEP_PERIOD_S,
                     subject: str = "s0", episode: int = 0,
                     spec: dict[str, int] | None = None) -> SessionRecording:
    """Full synthetic recording for one episode: per-event reactions plus
    Poisson background gestures, synthesized into a frame stream."""
    rng = np.random.default_rng(seed)
    n_ticks = len(episode_log.records) or gw.EPISODE_LEN
    n_frames = int(round(n_ticks * fps * step_period_s))
    gestures: list[GestureEvent] = []
    for tick, _obj, reward in episode_log.pickup_events():
        frame = event_frame_for_tick(tick, fps, step_period_s)
        gestures.extend(react_to_event(profile, frame, reward, rng, fps=fps,
                                       provoking_tick=tick))
    gestures.extend(background_gestures(profile, n_frames, rng, fps=fps))
    features, annotations = synthesize_frames(gestures, n_frames, rng, fps=fps)
    return SessionRecording(episode_log=episode_log, features=features,
                            annotations=annotations, gestures=gestures, fps=fps,
                            step_period_s=step_period_s, subject=subject, episode=episode,
                            spec=dict(spec or episode_log.spec or gw.GROUND_TRUTH_SPEC))
