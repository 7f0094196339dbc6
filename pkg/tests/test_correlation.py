import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coresel.correlation import (AllocationError, AllocationPlan, allocate, allocate_random,
                                 correlation_matrix, correlation_plan, correlation_scores,
                                 pearson, rank_cores, update_and_reallocate)
from coresel.thermal import SimConfig, cluster_labels, probe_temperatures
from coresel.trace import DataError, TemperatureBuffer


def pearson_oracle(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


@pytest.mark.parametrize("x, y, r", [
    ([1, 2, 3], [2, 4, 6], 1.0),
    ([1, 2, 3], [3, 2, 1], -1.0),
    ([1, 2, 3, 4], [1, 3, 2, 4], 0.8),  # sxy = 4, sxx = syy = 5
])
def test_pearson_examples(x, y, r):
    val, degenerate = pearson(x, y)
    assert val == pytest.approx(r, abs=1e-12)
    assert not degenerate


def test_pearson_constant_series():
    assert pearson([5, 5, 5], [1, 2, 3]) == (0.0, True)


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(DataError):
        pearson([1], [2])


def test_identical_series_matrix():
    x = np.random.default_rng(0).normal(size=50)
    corr = correlation_matrix(np.column_stack([x, x]))
    assert corr.r[0, 1] == pytest.approx(1.0)


def test_independent_noise_bound():
    z = np.random.default_rng(1).normal(size=(1000, 2))
    assert abs(correlation_matrix(z).r[0, 1]) < 0.15


def test_degenerate_column_zeroed():
    data = np.column_stack([np.full(10, 60.0), np.arange(10.0), np.arange(10.0) ** 2])
    corr = correlation_matrix(data)
    assert corr.degenerate.tolist() == [True, False, False]
    assert np.all(corr.r[0] == 0) and np.all(corr.r[:, 0] == 0)
    assert corr.r[1, 1] == 1.0


def test_block_coupled_trace_structure():
    cfg = SimConfig.clustered((2, 3))
    r = correlation_matrix(probe_temperatures(cfg, 500, seed=3)).r
    labels = cluster_labels(cfg)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(cfg.m, dtype=bool)
    assert np.abs(r[same & off]).mean() > np.abs(r[~same]).mean()


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(3, 40), st.integers(2, 6)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_matrix_symmetric_and_bounded(data):
    corr = correlation_matrix(data)
    r = corr.r
    np.testing.assert_array_equal(r, r.T)
    assert np.all(np.abs(r) <= 1.0)
    np.testing.assert_array_equal(np.diag(r)[~corr.degenerate], 1.0)
    s = correlation_scores(corr)
    assert np.all((s >= 0) & (s <= 1))


@settings(max_examples=25, deadline=None)
@given(arrays(float, st.tuples(st.integers(3, 30), st.integers(2, 5)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_matrix_matches_oracle(data):
    corr = correlation_matrix(data)
    m = data.shape[1]
    for i in range(m):
        for j in range(i + 1, m):
            if corr.degenerate[i] or corr.degenerate[j]:
                continue
            assert corr.r[i, j] == pytest.approx(pearson_oracle(data[:, i], data[:, j]), abs=1e-9)


def test_scores_examples():
    r = np.array([[1.0, 0.5, -0.5], [0.5, 1.0, 1.0], [-0.5, 1.0, 1.0]])
    s = correlation_scores(r)
    np.testing.assert_allclose(s, [0.5, 0.75, 0.75])
    assert rank_cores(s) == [0, 1, 2]
    np.testing.assert_allclose(correlation_scores(np.array([[1, -0.3], [-0.3, 1]])), [0.3, 0.3])
    np.testing.assert_array_equal(correlation_scores(np.eye(4)), np.zeros(4))
    with pytest.raises(DataError):
        correlation_scores(np.eye(1))


def test_rank_ties_and_order():
    assert rank_cores([0.2, 0.2, 0.2]) == [0, 1, 2]
    assert rank_cores([0.9, 0.5, 0.1]) == [2, 1, 0]
    assert rank_cores([0.3, 0.1], core_ids=[4, 7]) == [7, 4]
    with pytest.raises(ValueError):
        rank_cores([0.1, np.nan])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=10))
def test_rank_invariant_under_monotone_transform(ticks):
    # a coarse grid keeps exp() strictly increasing in floating point
    s = np.array(ticks) / 1000.0
    assert rank_cores(s) == rank_cores(np.exp(3 * s) + 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=10), st.data())
def test_allocation_is_sorted_prefix(scores, data):
    m = len(scores)
    reserved = set(data.draw(st.sets(st.integers(0, m - 1), max_size=m - 1)))
    t = data.draw(st.integers(0, m - len(reserved)))
    plan = allocate(rank_cores(scores), t, reserved, scores)
    # brute-force oracle: sort eligible (score, id) pairs
    oracle = [c for _, c in sorted((scores[c], c) for c in range(m) if c not in reserved)][:t]
    assert list(plan.cores) == oracle


def test_allocate_examples():
    assert allocate([3, 1, 4, 2], 2, set()).cores == (3, 1)
    assert allocate([0, 3, 1], 2, {0}).cores == (3, 1)
    assert allocate([2, 0, 1], 2).cores == (2, 1)
    with pytest.raises(AllocationError):
        allocate([0, 1, 2], 3)


def test_plan_validation():
    with pytest.raises(AllocationError):
        AllocationPlan((1, 1), "x")
    with pytest.raises(AllocationError):
        AllocationPlan((0, 1), "x")


def test_random_allocation():
    plan = allocate_random(5, 4, {0}, seed=1)
    assert sorted(plan.cores) == [1, 2, 3, 4]
    assert allocate_random(8, 3, seed=9) == allocate_random(8, 3, seed=9)
    with pytest.raises(AllocationError):
        allocate_random(3, 3, {0}, seed=0)


def test_random_allocation_uniform():
    rng = np.random.default_rng(0)
    counts = np.zeros(5)
    for _ in range(10_000):
        for c in allocate_random(5, 2, {0}, rng).cores:
            counts[c] += 1
    assert counts[0] == 0
    np.testing.assert_allclose(counts[1:] / 10_000, 0.5, atol=0.03)


def test_reallocate_identical_reading_keeps_plan():
    rng = np.random.default_rng(2)
    buf = TemperatureBuffer.for_cores(5).extend(rng.normal(size=(200, 5)))
    before = correlation_plan(buf, 2)
    after = update_and_reallocate(buf, buf.as_array()[-1], 2)
    assert after.cores == before.cores


def test_reallocate_after_comoving_samples():
    rng = np.random.default_rng(4)
    buf = TemperatureBuffer.for_cores(4).extend(rng.normal(size=(50, 4)))
    before = rank_cores(correlation_scores(correlation_matrix(buf)))
    for _ in range(100):
        z = rng.normal(size=4)
        z[2] = z[1] + 0.01 * rng.normal()
        plan = update_and_reallocate(buf, z, 1, reserved=set())
    after = list(plan.ranked)
    assert after.index(1) > before.index(1) or after.index(2) > before.index(2)


def test_reallocate_insufficient_samples():
    with pytest.raises(DataError):
        update_and_reallocate(TemperatureBuffer.for_cores(3), [1, 2, 3], 1)
