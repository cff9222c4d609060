import itertools
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from implicitrl import stats


def pair_count_tau(a, b):
    """Independent O(n^2) oracle for tau-a on untied data."""
    n = len(a)
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            s += np.sign((a[i] - a[j]) * (b[i] - b[j]))
    return s / (n * (n - 1) / 2)


def test_tau_perfect_and_reversed():
    assert stats.kendall_tau([1, 2, 3], [10, 20, 30]).tau == 1.0
    assert stats.kendall_tau([1, 2, 3], [30, 20, 10]).tau == -1.0


def test_tau_matches_pair_counting_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(3, 9))
        a = rng.permutation(n)
        b = rng.permutation(n)
        assert stats.kendall_tau(a, b).tau == pytest.approx(pair_count_tau(a, b))


def test_tau_matches_scipy_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(4, 12))
        a = rng.integers(0, 4, n)
        b = rng.integers(0, 4, n)
        ours = stats.kendall_tau(a, b, tie_corrected=True)
        ref = scipy.stats.kendalltau(a, b)
        if math.isnan(ref.statistic):
            assert not ours.defined
        else:
            assert ours.tau == pytest.approx(ref.statistic)


def test_tau_exact_p_small_n():
    # Perfect agreement on n=3: only 1 of 6 permutations reaches tau=1,
    # so the one-sided exact p is 1/6.
    r = stats.kendall_tau([1, 2, 3], [1, 2, 3], one_sided=True)
    assert r.p_value == pytest.approx(1 / 6)


def test_tau_exact_p_matches_enumeration():
    rng = np.random.default_rng(2)
    a = [1, 2, 3, 4, 5]
    b = list(rng.permutation(5))
    observed = stats.kendall_tau(a, b, one_sided=True)
    taus = [pair_count_tau(a, list(p)) for p in itertools.permutations(range(5))]
    expected = sum(t >= observed.tau - 1e-12 for t in taus) / len(taus)
    assert observed.p_value == pytest.approx(expected)


def test_tau_all_tied_undefined():
    r = stats.kendall_tau([1, 1, 1, 1], [1, 2, 3, 4], tie_corrected=True)
    assert not r.defined


@given(st.lists(st.integers(0, 100), min_size=3, max_size=8, unique=True),
       st.randoms(use_true_random=False))
@settings(max_examples=50, deadline=None)
def test_tau_symmetry_property(values, rnd):
    other = list(values)
    rnd.shuffle(other)
    assert stats.kendall_tau(values, other).tau == pytest.approx(
        stats.kendall_tau(other, values).tau)


def wilcoxon_enumeration(values):
    """Full 2^n enumeration oracle for the one-sided exact p."""
    d = np.array([v for v in values if v != 0], dtype=float)
    ranks = scipy.stats.rankdata(np.abs(d))
    w_obs = ranks[d > 0].sum()
    n = len(d)
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = ranks[np.array(signs, dtype=bool)].sum()
        if w >= w_obs - 1e-12:
            count += 1
    return count / 2 ** n


def test_wilcoxon_all_positive_exact():
    # Five positives: only the all-positive assignment reaches W+ = 15.
    assert stats.wilcoxon_signed_rank([1, 2, 3, 4, 5]) == pytest.approx(1 / 32)


def test_wilcoxon_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(5, 11))
        values = rng.normal(0.3, 1.0, n).round(2)
        values = values[values != 0]
        if len(values) < 5:
            continue
        ours = stats.wilcoxon_signed_rank(values)
        assert ours == pytest.approx(wilcoxon_enumeration(values))


def test_wilcoxon_matches_scipy_exact_two_sided():
    rng = np.random.default_rng(4)
    for _ in range(20):
        values = rng.normal(0.5, 1.0, 10)
        ref = scipy.stats.wilcoxon(values, alternative="two-sided",
                                   mode="exact").pvalue
        assert stats.wilcoxon_signed_rank(values, one_sided=False) == pytest.approx(ref)


def test_wilcoxon_insufficient_data():
    with pytest.raises(stats.InsufficientData):
        stats.wilcoxon_signed_rank([1, 2, 0, 0])


def test_wilcoxon_normal_approx_large_n():
    rng = np.random.default_rng(5)
    values = rng.normal(0.4, 1.0, 40)
    ours = stats.wilcoxon_signed_rank(values, one_sided=False)
    ref = scipy.stats.wilcoxon(values, alternative="two-sided",
                               mode="approx", correction=False).pvalue
    assert ours == pytest.approx(ref, rel=1e-6)


def test_binomial_nine_of_ten():
    assert stats.binomial_test(9, 10, 0.5) == pytest.approx(11 / 1024)
    assert stats.binomial_test(9, 10, 0.5) == 11 / 1024


def test_binomial_matches_scipy():
    rng = np.random.default_rng(6)
    for _ in range(30):
        n = int(rng.integers(2, 25))
        k = int(rng.integers(0, n + 1))
        p0 = float(rng.uniform(0.1, 0.9))
        assert stats.binomial_test(k, n, p0) == pytest.approx(
            scipy.stats.binomtest(k, n, p0, alternative="greater").pvalue)
        assert stats.binomial_test(k, n, p0, one_sided=False) == pytest.approx(
            scipy.stats.binomtest(k, n, p0, alternative="two-sided").pvalue)


def test_binomial_input_validation():
    with pytest.raises(ValueError):
        stats.binomial_test(5, 3, 0.5)
