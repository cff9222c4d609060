"""Bayesian inference over reward rankings.

A reward ranking assigns the values {+6, -1, -5} bijectively to the
three object types. The reaction model's class probabilities act as the
likelihood of the observed reaction given each candidate ranking; the
posterior accumulates in log space over pickup events.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from . import gridworld as gw
from . import model as mdl
from . import stats

LIKELIHOOD_FLOOR = 1e-6

# Canonical enumeration of all 6 rankings; ties in the MAP break toward
# the earliest entry. The ground-truth assignment comes first.
ALL_RANKINGS: tuple[dict[str, int], ...] = tuple(
    dict(zip(gw.OBJECT_TYPES, values))
    for values in itertools.permutations(gw.REWARD_VALUES)
)

# Restricted hypothesis space: the three behavior-policy mappings.
BEHAVIOR_RANKINGS: tuple[dict[str, int], ...] = tuple(
    r for r in ALL_RANKINGS
    if r in ({gw.PASSENGER: 6, gw.ROADBLOCK: -1, gw.PARKED_CAR: -5},
             {gw.PASSENGER: -1, gw.ROADBLOCK: 6, gw.PARKED_CAR: -5},
             {gw.PASSENGER: -1, gw.ROADBLOCK: -5, gw.PARKED_CAR: 6})
)


def ranking_values(ranking: dict[str, int]) -> list[int]:
    return [ranking[t] for t in gw.OBJECT_TYPES]


def ranking_tau(ranking: dict[str, int], truth: dict[str, int]) -> float:
    return stats.kendall_tau(ranking_values(truth), ranking_values(ranking)).tau


@dataclass
class Belief:
    """Log-posterior over a fixed enumeration of reward rankings."""

    log_weights: np.ndarray
    rankings: tuple = ALL_RANKINGS

    @classmethod
    def uniform(cls, rankings: tuple = ALL_RANKINGS) -> "Belief":
        return cls(log_weights=np.zeros(len(rankings)), rankings=rankings)

    def probabilities(self) -> np.ndarray:
        w = self.log_weights - self.log_weights.max()
        p = np.exp(w)
        return p / p.sum()

    def entropy(self) -> float:
        p = self.probabilities()
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())

    def copy(self) -> "Belief":
        return Belief(self.log_weights.copy(), self.rankings)


def posterior_update(belief: Belief, event_object: str, class_probs: np.ndarray,
                     floor: float = LIKELIHOOD_FLOOR) -> Belief:
    """One Bayes update: for each ranking m, add the log-likelihood of the
    class m assigns to the picked-up object. Floored so no single event can
    zero out a hypothesis."""
    class_probs = np.asarray(class_probs, dtype=float)
    out = belief.copy()
    for i, ranking in enumerate(out.rankings):
        cls = feat.CLASS_INDEX[ranking[event_object]]
        out.log_weights[i] += np.log(max(float(class_probs[cls]), floor))
    return out


def map_ranking(belief: Belief) -> dict[str, int]:
    return belief.rankings[int(np.argmax(belief.log_weights))]


def pool_event_probs(prob_rows: np.ndarray, mode: str = "geometric") -> list[np.ndarray]:
    """Reduce the per-aggregated-frame probability vectors of one event.

    Geometric-mean pooling counts the event once; "per-frame" yields one
    update per aggregated frame.
    """
    prob_rows = np.atleast_2d(prob_rows)
    if mode == "geometric":
        logs = np.log(np.maximum(prob_rows, 1e-300)).mean(axis=0)
        p = np.exp(logs - logs.max())
        return [p / p.sum()]
    if mode == "per-frame":
        return [row for row in prob_rows]
    raise ValueError(f"unknown pooling mode {mode!r}")


@dataclass
class RankingResult:
    belief: Belief
    ranking: dict[str, int] | None
    tau: float | None
    n_events: int
    no_evidence: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "posterior": [float(p) for p in self.belief.probabilities()],
            "rankings": [ranking_values(r) for r in self.belief.rankings],
            "map_ranking": self.ranking,
            "tau": self.tau,
            "n_events": self.n_events,
            "no_evidence": self.no_evidence,
        }, sort_keys=True)


def rank_episode(params: dict, config: mdl.ModelConfig, session, k: int = feat.DEFAULT_K,
                 l: int = feat.DEFAULT_L, pool: int = feat.DEFAULT_POOL,
                 pool_mode: str = "geometric", floor: float = LIKELIHOOD_FLOOR,
                 rankings: tuple = ALL_RANKINGS) -> RankingResult:
    """Uniform prior, one Bayes update per pickup, MAP ranking, and Kendall
    tau against the session's true reward spec."""
    agg = feat.compute_aggregated(session.features, session.annotations, pool=pool,
                                  fps=session.fps, step_period_s=session.step_period_s)
    data = feat.make_samples(agg, session.reward_by_tick(), k=k, l=l,
                             subject=session.subject, episode=session.episode)
    belief = Belief.uniform(rankings)
    if len(data) == 0:
        return RankingResult(belief=belief, ranking=None, tau=None, n_events=0,
                             no_evidence=True)
    pred = mdl.predict(params, config, data.x_fau, data.x_head)
    object_by_tick = session.event_object_by_tick()
    ticks = np.array([m["tick"] for m in data.meta])
    n_events = 0
    for tick in sorted(set(ticks)):
        rows = pred.probs[ticks == tick]
        for p in pool_event_probs(rows, pool_mode):
            belief = posterior_update(belief, object_by_tick[tick], p, floor)
        n_events += 1
    ranking = map_ranking(belief)
    tau = ranking_tau(ranking, session.spec)
    return RankingResult(belief=belief, ranking=ranking, tau=tau, n_events=n_events)


def trajectory_positivity(params: dict, config: mdl.ModelConfig, features: np.ndarray,
                          annotations: np.ndarray, k: int = feat.DEFAULT_K,
                          l: int = feat.DEFAULT_L, pool: int = feat.DEFAULT_POOL) -> float:
    """Mean positivity score over all full-window aggregated frames of a
    trajectory recording (binary-variant model)."""
    agg = feat.compute_aggregated(features, annotations, pool=pool)
    m = agg.fau.shape[0]
    windows = [feat.window_sample(agg, t, k, l) for t in range(m)]
    windows = [w for w in windows if w is not None]
    if not windows:
        raise ValueError("trajectory too short for one full window")
    x_fau = np.array([w[0] for w in windows])
    x_head = np.array([w[1] for w in windows])
    pred = mdl.predict(params, config, x_fau, x_head)
    return float(pred.positivity.mean())


def cross_subject_rank(scores: dict[str, list[float]], returns: dict[str, float],
                       one_sided: bool = True) -> tuple[list[str], stats.RankStatistic]:
    """Rank trajectories by mean positivity over subjects; tie-corrected tau
    against the ground-truth returns."""
    if len(scores) < 2:
        raise ValueError("need at least 2 trajectories")
    names = sorted(scores)
    means = {t: float(np.mean(scores[t])) for t in names}
    ordering = sorted(names, key=lambda t: -means[t])
    stat = stats.kendall_tau([returns[t] for t in names], [means[t] for t in names],
                             tie_corrected=True, one_sided=one_sided)
    return ordering, stat
