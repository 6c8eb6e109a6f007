import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlblock.blocking import optimize_1d_partition, scaled_sequential_allocate, sequential_allocate
from mlblock.errors import BadBlockCount, TooFewUnits


def sizes_in_score_order(part, scores):
    order = np.argsort(scores, kind="stable")
    blocks = part.block_of[order]
    return [int((blocks == b).sum()) for b in dict.fromkeys(blocks)]


def test_sequential_exact():
    s = np.array([8, 1, 7, 2, 6, 3, 5, 4.0])
    p = sequential_allocate(s, 4)
    assert sizes_in_score_order(p, s) == [4, 4]
    assert set(p.block_of[s <= 4]) == {0}


def test_sequential_remainder_joins_top():
    s = np.arange(9.0)
    assert sizes_in_score_order(sequential_allocate(s, 4), s) == [4, 5]


def test_sequential_tie_run_then_repair():
    # five tied 1's fill the first block; the 3 left are too few and merge in
    s = np.array([1, 1, 1, 1, 1, 2, 3, 4.0])
    p = sequential_allocate(s, 4)
    assert p.b == 1 and p.sizes.tolist() == [8]


def test_sequential_too_few():
    with pytest.raises(TooFewUnits):
        sequential_allocate(np.arange(3.0), 4)


def test_scaled_sizes():
    s = np.arange(12.0)
    assert sizes_in_score_order(scaled_sequential_allocate(s, 3, 4), s) == [4, 4, 4]
    assert scaled_sequential_allocate(s, 1, 4).b == 1
    s10 = np.arange(10.0)
    assert sizes_in_score_order(scaled_sequential_allocate(s10, 3, 3), s10) == [4, 3, 3]
    with pytest.raises(BadBlockCount):
        scaled_sequential_allocate(s, 4, 4)


def exhaustive_one_cut(y, c_B):
    best = (np.inf, None)
    for p in range(c_B, len(y) - c_B + 1):
        sse = ((y[:p] - y[:p].mean()) ** 2).sum() + ((y[p:] - y[p:].mean()) ** 2).sum()
        best = min(best, (sse, p))
    return best[1]


def test_optimize_finds_step():
    s = np.arange(12.0)
    y = np.array([0.0] * 5 + [10.0] * 7)
    p = optimize_1d_partition(s, y, 2, 2)
    assert sizes_in_score_order(p, s) == [5, 7]
    assert exhaustive_one_cut(y, 2) == 5


def test_optimize_trivial_cases():
    s = np.arange(12.0)
    one = optimize_1d_partition(s, s, 1, 4)
    assert one.b == 1 and one.info["moves"] == 0
    y = np.repeat([0.0, 5.0, 9.0], 4)
    fixed = optimize_1d_partition(s, y, 3, 2)
    assert fixed.info == {"sweeps": 1, "moves": 0}


def test_optimize_never_worse_than_quantile_start():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = rng.standard_normal(30)
        y = s + rng.standard_normal(30)
        b = int(rng.integers(2, 6))
        q = scaled_sequential_allocate(s, b, 3)
        o = optimize_1d_partition(s, y, b, 3)

        def sse(p):
            return sum(((y[p.block_of == k] - y[p.block_of == k].mean()) ** 2).sum() for k in range(p.b))

        assert sse(o) <= sse(q) + 1e-9


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=4, max_size=40), st.integers(1, 5))
def test_allocators_respect_block_floor(vals, c_B):
    s = np.array(vals, dtype=float)
    if len(s) < c_B:
        return
    parts = [sequential_allocate(s, c_B)]
    for b in {1, max(1, len(s) // c_B)}:
        parts += [scaled_sequential_allocate(s, b, c_B), optimize_1d_partition(s, -s, b, c_B)]
    for p in parts:
        assert p.sizes.min() >= c_B and p.sizes.sum() == len(s)
        assert set(p.block_of.tolist()) == set(range(p.b))
        np.testing.assert_array_equal(p.replay(), p.block_of)
        # tied scores always share a block
        for v in np.unique(s):
            assert len(set(p.block_of[s == v].tolist())) == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 999))
def test_sequential_exact_division(c_B, m, seed):
    s = np.random.default_rng(seed).permutation(c_B * m).astype(float)
    p = sequential_allocate(s, c_B)
    assert p.b == m and set(p.sizes.tolist()) == {c_B}
