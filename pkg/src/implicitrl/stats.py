"""Nonparametric statistics: Kendall's tau (plain and tie-corrected),
exact Wilcoxon signed-rank, and exact binomial tests."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

EXACT_TAU_N = 8
EXACT_WILCOXON_N = 20


@dataclass
class RankStatistic:
    tau: float
    p_value: float
    variant: str  # "plain" | "tie-corrected"
    defined: bool = True


def _pair_counts(a, b) -> tuple[int, int, int, int]:
    """(concordant, discordant, ties-in-a-only+shared, ties-in-b) pair sums.

    Returns (C, D, tie_pairs_a, tie_pairs_b) where tie pairs count pairs
    tied within each input separately (pairs tied in both count in both).
    """
    n = len(a)
    c = d = ta = tb = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = a[i] - a[j]
            db = b[i] - b[j]
            if da == 0:
                ta += 1
            if db == 0:
                tb += 1
            if da == 0 or db == 0:
                continue
            if (da > 0) == (db > 0):
                c += 1
            else:
                d += 1
    return c, d, ta, tb


def _tau_value(a, b, tie_corrected: bool) -> float:
    n = len(a)
    c, d, ta, tb = _pair_counts(a, b)
    n0 = n * (n - 1) // 2
    if not tie_corrected:
        return (c - d) / n0
    denom = math.sqrt((n0 - ta) * (n0 - tb))
    if denom == 0:
        return float("nan")
    return (c - d) / denom


def _tie_groups(values) -> list[int]:
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return [t for t in counts.values() if t > 1]


def _tau_normal_p(a, b, one_sided: bool) -> float:
    """Normal approximation for the null distribution of C - D with ties."""
    n = len(a)
    c, d, _, _ = _pair_counts(a, b)
    s = c - d
    xt = _tie_groups(a)
    yt = _tie_groups(b)
    v0 = n * (n - 1) * (2 * n + 5)
    vt = sum(t * (t - 1) * (2 * t + 5) for t in xt)
    vu = sum(u * (u - 1) * (2 * u + 5) for u in yt)
    v1 = (sum(t * (t - 1) for t in xt) * sum(u * (u - 1) for u in yt)) / (2 * n * (n - 1))
    v2 = (sum(t * (t - 1) * (t - 2) for t in xt)
          * sum(u * (u - 1) * (u - 2) for u in yt)) / (9 * n * (n - 1) * (n - 2))
    var = (v0 - vt - vu) / 18 + v1 + v2
    if var <= 0:
        return 1.0
    z = s / math.sqrt(var)
    nd = NormalDist()
    if one_sided:
        return 1.0 - nd.cdf(z)
    return 2.0 * (1.0 - nd.cdf(abs(z)))


def kendall_tau(rank_a, rank_b, tie_corrected: bool = False,
                one_sided: bool = False) -> RankStatistic:
    """Kendall rank correlation with an independence-test p-value.

    Exact p by enumerating all permutations of rank_b for n <= 8, normal
    approximation above. All-tied input with tie correction is undefined.
    """
    a = list(rank_a)
    b = list(rank_b)
    if len(a) != len(b) or len(a) < 2:
        raise ValueError("inputs must have equal length >= 2")
    n = len(a)
    variant = "tie-corrected" if tie_corrected else "plain"
    tau = _tau_value(a, b, tie_corrected)
    if math.isnan(tau):
        return RankStatistic(tau=float("nan"), p_value=float("nan"),
                             variant=variant, defined=False)
    if n <= EXACT_TAU_N:
        # Tie-pair counts depend only on the value multisets, so the tau
        # denominator is shared by every permutation and C - D vectorizes.
        perms = np.array(list(itertools.permutations(b)), dtype=float)
        iu, ju = np.triu_indices(n, 1)
        arr = np.asarray(a, dtype=float)
        da = np.sign(arr[iu] - arr[ju])
        db = np.sign(perms[:, iu] - perms[:, ju])
        s = (da * db).sum(axis=1)
        n0 = n * (n - 1) // 2
        if tie_corrected:
            _, _, ta, tb = _pair_counts(a, b)
            denom = math.sqrt((n0 - ta) * (n0 - tb))
        else:
            denom = n0
        taus = s / denom
        if one_sided:
            p = float((taus >= tau - 1e-12).mean())
        else:
            p = float((np.abs(taus) >= abs(tau) - 1e-12).mean())
    else:
        p = _tau_normal_p(a, b, one_sided)
    return RankStatistic(tau=float(tau), p_value=float(p), variant=variant)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values)
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


class InsufficientData(ValueError):
    pass


def wilcoxon_signed_rank(values, null_median: float = 0.0,
                         one_sided: bool = True) -> float:
    """Wilcoxon signed-rank p-value against `null_median`.

    Zero differences are dropped, tied magnitudes mid-ranked. Exact
    distribution over all 2^n sign assignments for n <= 20 (computed by
    dynamic programming), normal approximation above. One-sided tests the
    alternative median > null_median.
    """
    d = np.asarray(values, dtype=float) - null_median
    d = d[d != 0]
    n = len(d)
    if n < 5:
        raise InsufficientData(f"need >= 5 nonzero values, got {n}")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_WILCOXON_N:
        # Distribution of W+ over sign assignments; double midranks so all
        # rank contributions are integers.
        r2 = np.rint(2 * ranks).astype(int)
        total = r2.sum()
        counts = np.zeros(total + 1, dtype=np.float64)
        counts[0] = 1.0
        for r in r2:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[:total + 1 - r]
            counts = counts + shifted
        w2 = int(round(2 * w_plus))
        denom = counts.sum()
        p_ge = counts[w2:].sum() / denom
        p_le = counts[:w2 + 1].sum() / denom
        if one_sided:
            return float(p_ge)
        return float(min(1.0, 2 * min(p_ge, p_le)))
    mean = n * (n + 1) / 4
    tie_term = sum(t ** 3 - t for t in _tie_groups(list(np.abs(d)))) / 48
    sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24 - tie_term)
    z = (w_plus - mean) / sd
    nd = NormalDist()
    if one_sided:
        return 1.0 - nd.cdf(z)
    return 2.0 * (1.0 - nd.cdf(abs(z)))


def binomial_test(k: int, n: int, p0: float, one_sided: bool = True,
                  alternative: str = "greater") -> float:
    """Exact binomial tail probability.

    One-sided "greater": P(X >= k); "less": P(X <= k). Two-sided: sum of
    all outcome probabilities not exceeding P(X = k).
    """
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    pmf = [math.comb(n, j) * p0 ** j * (1 - p0) ** (n - j) for j in range(n + 1)]
    if one_sided:
        if alternative == "greater":
            return float(sum(pmf[k:]))
        if alternative == "less":
            return float(sum(pmf[:k + 1]))
        raise ValueError(f"unknown alternative {alternative!r}")
    threshold = pmf[k] * (1 + 1e-12)
    return float(min(1.0, sum(p for p in pmf if p <= threshold)))
