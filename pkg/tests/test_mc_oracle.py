import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from kkperm.bounds import SampleSplit, build_sync_matrix, center_columns, univariate_null_statistics, univariate_statistic
from kkperm.errors import DomainError, SizeError
from kkperm.mc_oracle import (
    BLOCK,
    McEstimate,
    SignVector,
    count_exceedances,
    draw_signs,
    exhaustive_pvalue,
    iter_sign_blocks,
    mc_pvalue,
    mc_sync_pvalue,
    sample_sign_vector,
    sign_block,
    stratified_permutations,
)


def test_sign_vector_validation():
    assert len(SignVector([1, -1, -1, 1])) == 4
    with pytest.raises(DomainError):
        SignVector([1, 1, -1])
    with pytest.raises(DomainError):
        SignVector([1, 0, -1])


def test_sample_sign_vector_odd():
    with pytest.raises(DomainError):
        sample_sign_vector(5, 0)


def test_sample_sign_vector_n2_frequency():
    rng = np.random.default_rng(3)
    first = [sample_sign_vector(2, rng).signs[0] for _ in range(10_000)]
    assert abs(np.mean(np.array(first) > 0) - 0.5) <= 0.02


def test_sample_sign_vector_n4_uniform():
    rng = np.random.default_rng(4)
    counts = Counter(tuple(sample_sign_vector(4, rng).signs) for _ in range(100_000))
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / 100_000 - 1 / 6) <= 0.02
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


@given(n=st.integers(1, 12).map(lambda h: 2 * h), seed=st.integers(0, 2**32 - 1))
def test_sample_sign_vector_zero_sum(n, seed):
    assert sample_sign_vector(n, seed).signs.sum() == 0


@given(n=st.integers(2, 30), count=st.integers(1, 3000), seed=st.integers(0, 1000))
def test_draws_are_zero_sum_or_respect_split(n, count, seed):
    s = draw_signs(n, count, seed)
    assert s.shape == (count, n)
    if n % 2 == 0:
        assert np.all(s.sum(axis=1) == 0)
    assert np.all(np.sum(s > 0, axis=1) == n // 2)


def test_unbalanced_draws_have_m1_positive():
    s = draw_signs(9, 500, 1, m1=3)
    assert np.all(np.sum(s > 0, axis=1) == 3)


def test_draw_uniform_over_splits():
    s = draw_signs(6, 40_000, 2, m1=2)
    keys = Counter(tuple(np.flatnonzero(r > 0)) for r in s)
    assert len(keys) == math.comb(6, 2)
    assert stats.chisquare(list(keys.values())).pvalue > 0.001


def test_draws_independent_of_chunking():
    whole = draw_signs(10, 3 * BLOCK + 17, 9)
    pieces = np.concatenate([draw_signs(10, 1000, 9, start=j) for j in range(0, 3 * BLOCK + 17, 1000)])[: 3 * BLOCK + 17]
    assert np.array_equal(whole, pieces)
    via_iter = np.concatenate(list(iter_sign_blocks(10, 3 * BLOCK + 17, 9)))
    assert np.array_equal(whole, via_iter)


def test_draws_identical_in_parallel():
    serial = [sign_block(5, (0,), b, 12) for b in range(8)]
    with ThreadPoolExecutor(4) as ex:
        par = list(ex.map(lambda b: sign_block(5, (0,), b, 12), range(8)))
    assert all(np.array_equal(a, b) for a, b in zip(serial, par))


def test_streams_differ():
    assert not np.array_equal(draw_signs(20, 50, 1, (0,)), draw_signs(20, 50, 1, (1,)))


def test_mc_estimate_convention():
    est = McEstimate.from_count(0, 99)
    assert est.p_hat == 0.01
    assert McEstimate.from_count(99, 99).p_hat == 1.0


def test_mc_pvalue_edges():
    ev = lambda s: np.abs(s @ np.arange(8.0))
    assert mc_pvalue(ev, 0.0, 200, 1, 8).p_hat == 1.0
    assert mc_pvalue(ev, 1e9, 200, 1, 8).p_hat == 1 / 201
    with pytest.raises(DomainError):
        mc_pvalue(ev, 1.0, 0, 1, 8)


def test_mc_pvalue_reproducible():
    x = np.random.default_rng(0).standard_normal(10)
    ev = lambda s: np.abs(s @ x)
    a = mc_pvalue(ev, 2.0, 5000, 42, 10)
    b = mc_pvalue(ev, 2.0, 5000, 42, 10)
    assert a == b


@given(count=st.integers(0, 5000), n=st.integers(1, 10_000))
def test_add_one_bounds(count, n):
    count = min(count, n)
    est = McEstimate.from_count(count, n)
    assert 1 / (n + 1) <= est.p_hat <= 1


def test_count_exceedances_ties():
    assert count_exceedances([1.0, 1.0 - 1e-15, 0.5], 1.0) == 2


def test_exhaustive_hand_example():
    x = np.array([0.0, 0.0, 1.0, 1.0])
    ev = lambda s: np.abs(s @ x)
    obs = abs(np.array([1, 1, -1, -1]) @ x)
    assert exhaustive_pvalue(ev, obs, 4, 2) == pytest.approx(1 / 3)
    assert exhaustive_pvalue(ev, 0.0, 4, 2) == 1.0


def test_exhaustive_size_guard():
    with pytest.raises(SizeError):
        exhaustive_pvalue(lambda s: s.sum(axis=1), 0.0, 16, 8)


def test_exhaustive_matches_direct_enumeration(rng):
    x = rng.standard_normal(7)
    split = SampleSplit(3, 4)
    obs = univariate_statistic(x, split).value
    hits = 0
    for idx in combinations(range(7), 3):
        g1 = x[list(idx)]
        g2 = np.delete(x, list(idx))
        hits += abs(g1.mean() - g2.mean()) / x.std(ddof=1) >= obs - 1e-12
    assert exhaustive_pvalue(univariate_null_statistics(x, split), obs, 7, 3) == hits / math.comb(7, 3)


def test_mc_vs_exhaustive_n8():
    x = np.random.default_rng(8).standard_normal(8)
    split = SampleSplit(4, 4)
    ev = univariate_null_statistics(x, split)
    obs = univariate_statistic(x, split).value
    exact = exhaustive_pvalue(ev, obs, 8, 4)
    est = mc_pvalue(ev, obs, 100_000, 1, 8)
    assert abs(est.p_hat - exact) <= 3 * est.std_err


def test_mc_vs_exhaustive_agreement_rate():
    rng = np.random.default_rng(12)
    ok = 0
    for i in range(200):
        n = (8, 10, 12)[i % 3]
        m1 = n // 2 if i % 2 else n // 3
        split = SampleSplit(m1, n - m1)
        x = rng.standard_normal(n)
        ev = univariate_null_statistics(x, split)
        obs = univariate_statistic(x, split).value
        exact = exhaustive_pvalue(ev, obs, n, m1)
        est = mc_pvalue(ev, obs, 10_000, i, n, m1)
        ok += abs(est.p_hat - exact) <= 3 * est.std_err
    assert ok >= 198


def test_mc_sync_zero_matrix():
    assert mc_sync_pvalue(np.zeros((6, 3)), 100, 0).p_hat == 1.0


def test_mc_sync_k2_matches_two_sample():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(6), rng.standard_normal(6) + 1
    x = center_columns(build_sync_matrix([a, b]))
    pooled = np.concatenate([a, b])
    ev = lambda s: np.abs(s @ (pooled - pooled.mean()))
    obs = abs(np.r_[np.ones(6), -np.ones(6)] @ (pooled - pooled.mean()))
    assert mc_sync_pvalue(x, 3000, 7).exceed_count == mc_pvalue(ev, obs, 3000, 7, 12).exceed_count


def test_mc_sync_power_increases_with_shift():
    means = []
    for shift in (0.0, 0.5, 1.0, 2.0):
        logs = []
        for rep in range(100):
            rng = np.random.default_rng([rep, int(shift * 10)])
            samples = [rng.standard_normal(20) for _ in range(4)]
            samples[0] = samples[0] + shift
            x = center_columns(build_sync_matrix(samples))
            logs.append(math.log2(mc_sync_pvalue(x, 300, rep).p_hat))
        means.append(np.mean(logs))
    assert all(np.diff(means) <= 0)


def test_stratified_permutations_respect_strata():
    strata = np.array([0, 1, 0, 1, 2, 2, 0])
    perms = stratified_permutations(strata, 500, 3, (9,))
    assert perms.shape == (500, 7)
    for p in perms:
        assert sorted(p) == list(range(7))
        assert np.array_equal(strata[p], strata)
    assert len({tuple(p) for p in perms}) > 1
