"""Facial-feature pipeline.

Per-frame 42-dim feature vectors (success flag, 18 FAU presence, 17 FAU
intensity, 6 head-pose channels) are detrended, augmented with
FFT head-motion features over a trailing 50-frame window, max-pooled
into aggregated frames, and assembled into labeled window samples with
train/test/validation/holdout splits.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

FPS = 30

AU_C_IDS = ["01", "02", "04", "05", "06", "07", "09", "10", "12", "14",
            "15", "17", "20", "23", "25", "26", "28", "45"]
AU_R_IDS = [i for i in AU_C_IDS if i != "28"]
POSE_COLUMNS = ["pose_Tx", "pose_Ty", "pose_Tz", "pose_Rx", "pose_Ry", "pose_Rz"]

FEATURE_COLUMNS = (
    ["success"]
    + [f"AU{i}_c" for i in AU_C_IDS]
    + [f"AU{i}_r" for i in AU_R_IDS]
    + POSE_COLUMNS
)
assert len(FEATURE_COLUMNS) == 42

SUCCESS_IDX = 0
FAU_SLICE = slice(1, 36)        # 18 presence + 17 intensity channels
POSE_SLICE = slice(36, 42)
N_FAU = 35
N_POSE = 6

FFT_WINDOW = 50
FFT_BINS = 9                    # magnitude bins 0..8 per pose dim
N_HEAD = N_POSE * FFT_BINS      # 54

# Reward classes in fixed label order.
CLASS_ORDER = (-5, -1, 6)
CLASS_INDEX = {v: i for i, v in enumerate(CLASS_ORDER)}
N_ANNOTATION = 10

DEFAULT_POOL = 9                # frames per aggregated frame (0.3 s at 30 fps)
DEFAULT_K = 0
DEFAULT_L = 12


class SchemaError(ValueError):
    pass


def column_index(name: str) -> int:
    return FEATURE_COLUMNS.index(name)


def pose_detrend(features: np.ndarray) -> np.ndarray:
    """Subtract the within-episode running mean from the 6 pose channels.

    Frame i is reduced by the cumulative mean of frames 0..i.
    """
    pose = features[:, POSE_SLICE].astype(float)
    n = pose.shape[0]
    counts = np.arange(1, n + 1)[:, None]
    running_mean = np.cumsum(pose, axis=0) / counts
    return pose - running_mean


def head_motion_fft(detrended_pose: np.ndarray, n_bins: int = FFT_BINS,
                    window: int = FFT_WINDOW, full_spectrum: bool = False) -> np.ndarray:
    """Magnitudes of trailing-window DFT bins per pose dim.

    History before frame `window` is zero-padded. Output per frame is
    6 x n_bins values, dim-major. `full_spectrum` switches to all rfft
    bins (diagnostic mode for energy checks).
    """
    n, d = detrended_pose.shape
    padded = np.vstack([np.zeros((window - 1, d)), detrended_pose])
    windows = np.lib.stride_tricks.sliding_window_view(padded, window, axis=0)  # (n, d, window)
    spectrum = np.abs(np.fft.rfft(windows, axis=2))
    if not full_spectrum:
        spectrum = spectrum[:, :, :n_bins]
    return spectrum.reshape(n, -1)


def aggregate(stream: np.ndarray, pool: int) -> np.ndarray:
    """Per-dimension max over consecutive non-overlapping blocks of `pool`
    frames; a trailing partial block is pooled as-is."""
    if pool < 1:
        raise ValueError("pool size must be >= 1")
    n = stream.shape[0]
    out = []
    for start in range(0, n, pool):
        out.append(stream[start:start + pool].max(axis=0))
    return np.array(out)


def hold_failed_frames(features: np.ndarray) -> np.ndarray:
    """Repeat the previous valid frame's feature values where success=0."""
    out = features.copy()
    success = out[:, SUCCESS_IDX] > 0
    last_valid = None
    for i in range(out.shape[0]):
        if success[i]:
            last_valid = out[i, 1:].copy()
        elif last_valid is not None:
            out[i, 1:] = last_valid
    return out


@dataclass
class AggregatedStreams:
    """Aggregated-frame view of one session, time-aligned to env ticks."""

    fau: np.ndarray          # (m, 35)
    head: np.ndarray         # (m, 54)
    annotations: np.ndarray  # (m, 10)
    ticks: np.ndarray        # (m,) containing env tick of each aggregated frame
    pool: int
    frame_spans: np.ndarray  # (m, 2) [first, last] source frames


def compute_aggregated(features: np.ndarray, annotations: np.ndarray,
                       pool: int = DEFAULT_POOL, fps: int = FPS,
                       step_period_s: float = 1.5) -> AggregatedStreams:
    feats = hold_failed_frames(features)
    detrended = pose_detrend(feats)
    head = head_motion_fft(detrended)
    fau = feats[:, FAU_SLICE]
    agg_fau = aggregate(fau, pool)
    agg_head = aggregate(head, pool)
    agg_annot = aggregate(annotations.astype(float), pool)
    m = agg_fau.shape[0]
    firsts = np.arange(m) * pool
    lasts = np.minimum(firsts + pool - 1, features.shape[0] - 1)
    frames_per_step = fps * step_period_s
    ticks = (firsts / frames_per_step).astype(int)
    return AggregatedStreams(fau=agg_fau, head=agg_head, annotations=agg_annot,
                             ticks=ticks, pool=pool,
                             frame_spans=np.stack([firsts, lasts], axis=1))


@dataclass
class Dataset:
    """Flattened window samples ready for the reaction model."""

    x_fau: np.ndarray   # (N, 35*(k+l+1))
    x_head: np.ndarray  # (N, 54*(k+l+1))
    y: np.ndarray       # (N, 3) one-hot over CLASS_ORDER
    y_bin: np.ndarray   # (N, 2) one-hot over (neg, pos)
    aux: np.ndarray     # (N, 10*(k+l+1))
    meta: list[dict] = field(default_factory=list)
    k: int = DEFAULT_K
    l: int = DEFAULT_L

    def __len__(self) -> int:
        return self.x_fau.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.x_fau[idx], self.x_head[idx], self.y[idx],
                       self.y_bin[idx], self.aux[idx],
                       [self.meta[i] for i in idx], self.k, self.l)

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValueError("no samples to concatenate")
        return cls(np.vstack([p.x_fau for p in parts]),
                   np.vstack([p.x_head for p in parts]),
                   np.vstack([p.y for p in parts]),
                   np.vstack([p.y_bin for p in parts]),
                   np.vstack([p.aux for p in parts]),
                   sum((p.meta for p in parts), []),
                   parts[0].k, parts[0].l)

    def save(self, path: str) -> None:
        np.savez_compressed(path, x_fau=self.x_fau, x_head=self.x_head, y=self.y,
                            y_bin=self.y_bin, aux=self.aux,
                            meta=json.dumps(self.meta), k=self.k, l=self.l,
                            version="dataset-v1")

    @classmethod
    def load(cls, path: str) -> "Dataset":
        z = np.load(path, allow_pickle=False)
        if str(z["version"]) != "dataset-v1":
            raise SchemaError(f"unknown dataset version {z['version']}")
        return cls(z["x_fau"], z["x_head"], z["y"], z["y_bin"], z["aux"],
                   json.loads(str(z["meta"])), int(z["k"]), int(z["l"]))


def empty_dataset(k: int = DEFAULT_K, l: int = DEFAULT_L) -> Dataset:
    w = k + l + 1
    return Dataset(np.zeros((0, N_FAU * w)), np.zeros((0, N_HEAD * w)),
                   np.zeros((0, 3)), np.zeros((0, 2)), np.zeros((0, N_ANNOTATION * w)),
                   [], k, l)


def window_sample(agg: AggregatedStreams, t: int, k: int, l: int):
    """Flattened inputs for the window [t-k, t+l]; None when clipped."""
    m = agg.fau.shape[0]
    if t - k < 0 or t + l >= m:
        return None
    sl = slice(t - k, t + l + 1)
    return (agg.fau[sl].reshape(-1), agg.head[sl].reshape(-1), agg.annotations[sl].reshape(-1))


def make_samples(agg: AggregatedStreams, reward_by_tick: dict[int, int],
                 k: int = DEFAULT_K, l: int = DEFAULT_L,
                 subject: str = "s0", episode: int = 0) -> Dataset:
    """One sample per aggregated frame whose containing tick carries a
    nonzero reward; windows clipped by the episode edges are dropped."""
    xs_fau, xs_head, ys, ybins, auxs, meta = [], [], [], [], [], []
    m = agg.fau.shape[0]
    half = m // 2
    for t in range(m):
        tick = int(agg.ticks[t])
        reward = reward_by_tick.get(tick, 0)
        if reward == 0:
            continue
        win = window_sample(agg, t, k, l)
        if win is None:
            continue
        x_fau, x_head, aux = win
        y = np.zeros(3)
        y[CLASS_INDEX[reward]] = 1.0
        y_bin = np.array([0.0, 1.0]) if reward == 6 else np.array([1.0, 0.0])
        xs_fau.append(x_fau)
        xs_head.append(x_head)
        ys.append(y)
        ybins.append(y_bin)
        auxs.append(aux)
        meta.append({"subject": subject, "episode": episode,
                     "half": 0 if t < half else 1, "tick": tick, "agg_frame": t,
                     "reward": reward})
    if not xs_fau:
        return empty_dataset(k, l)
    return Dataset(np.array(xs_fau), np.array(xs_head), np.array(ys),
                   np.array(ybins), np.array(auxs), meta, k, l)


@dataclass
class SplitPlan:
    """Episode-level split assignments keyed by (subject, episode, half)."""

    holdout: dict[str, int]                       # subject -> holdout episode
    validation: dict[str, tuple[str, int]]        # target subject -> its validation episode
    test_halves: dict[str, list[tuple[str, int, int]]]  # target subject -> (subject, episode, half)
    seed: int

    def to_json(self) -> str:
        return json.dumps({"holdout": self.holdout,
                           "validation": {k: list(v) for k, v in self.validation.items()},
                           "test_halves": {k: [list(x) for x in v]
                                           for k, v in self.test_halves.items()},
                           "seed": self.seed}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        d = json.loads(text)
        return cls(holdout=d["holdout"],
                   validation={k: tuple(v) for k, v in d["validation"].items()},
                   test_halves={k: [tuple(x) for x in v]
                                for k, v in d["test_halves"].items()},
                   seed=d["seed"])


def make_splits(subjects: list[str], episodes_per_subject: int, seed: int) -> SplitPlan:
    """Per-subject folds: one episode per subject held out globally; the
    target subject's remaining episode pair yields the validation episode,
    and a random half of one non-validation episode from every subject goes
    to the test set. Everything else trains."""
    if len(subjects) < 2:
        raise ValueError("need at least 2 subjects")
    if episodes_per_subject < 3:
        raise ValueError("subjects need at least 3 episodes")
    rng = np.random.default_rng(seed)
    episodes = list(range(episodes_per_subject))
    holdout = {s: int(rng.choice(episodes)) for s in subjects}
    remaining = {s: [e for e in episodes if e != holdout[s]] for s in subjects}

    validation: dict[str, tuple[str, int]] = {}
    test_halves: dict[str, list[tuple[str, int, int]]] = {}
    for target in subjects:
        val_ep = int(rng.choice(remaining[target]))
        validation[target] = (target, val_ep)
        halves = []
        for s in subjects:
            pool = [e for e in remaining[s] if not (s == target and e == val_ep)]
            ep = int(rng.choice(pool))
            halves.append((s, ep, int(rng.integers(2))))
        test_halves[target] = halves
    return SplitPlan(holdout=holdout, validation=validation,
                     test_halves=test_halves, seed=seed)


def fold_indices(dataset: Dataset, plan: SplitPlan, target: str) -> dict[str, np.ndarray]:
    """Sample-index sets for one target subject's fold. Pairwise disjoint;
    the union covers the whole dataset."""
    train, test, val, hold = [], [], [], []
    test_set = set(plan.test_halves[target])
    val_key = plan.validation[target]
    for i, m in enumerate(dataset.meta):
        s, e, h = m["subject"], m["episode"], m["half"]
        if plan.holdout.get(s) == e:
            hold.append(i)
        elif (s, e) == val_key:
            val.append(i)
        elif (s, e, h) in test_set:
            test.append(i)
        else:
            train.append(i)
    return {"train": np.array(train, dtype=int), "test": np.array(test, dtype=int),
            "validation": np.array(val, dtype=int), "holdout": np.array(hold, dtype=int)}


def final_split_indices(dataset: Dataset, plan: SplitPlan) -> dict[str, np.ndarray]:
    """Simpler split for the final holdout evaluation: per subject, one
    random half-episode of the non-holdout episodes goes to test, the rest
    of the non-holdout data trains."""
    rng = np.random.default_rng(plan.seed + 1)
    subjects = sorted(plan.holdout)
    test_set = set()
    for s in subjects:
        eps = sorted({m["episode"] for m in dataset.meta
                      if m["subject"] == s and m["episode"] != plan.holdout[s]})
        if eps:
            test_set.add((s, int(rng.choice(eps)), int(rng.integers(2))))
    train, test, hold = [], [], []
    for i, m in enumerate(dataset.meta):
        s, e, h = m["subject"], m["episode"], m["half"]
        if plan.holdout.get(s) == e:
            hold.append(i)
        elif (s, e, h) in test_set:
            test.append(i)
        else:
            train.append(i)
    return {"train": np.array(train, dtype=int), "test": np.array(test, dtype=int),
            "holdout": np.array(hold, dtype=int)}


def write_csv(path: str, features: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(FEATURE_COLUMNS)
        for row in features:
            w.writerow([f"{v:.6g}" for v in row])


def ingest_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a feature CSV. Returns (features (n, 42), success flags (n,)).

    Extra columns are ignored; a missing required column or a non-numeric
    cell is an error naming the offender.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = [h.strip() for h in next(reader)]
        missing = [c for c in FEATURE_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing required column(s): {', '.join(missing)}")
        idx = [header.index(c) for c in FEATURE_COLUMNS]
        rows = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[i]) for i in idx])
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"bad value at row {row_no}: {exc}") from exc
    features = np.array(rows) if rows else np.zeros((0, 42))
    success = features[:, SUCCESS_IDX] > 0 if len(features) else np.zeros(0, dtype=bool)
    return features, success
