import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlblock.assignment import (
    BalanceStats,
    Criterion,
    assign_within_blocks,
    complete_draw,
    pairwise_match,
    rerandomize,
)
from mlblock.errors import OddN
from mlblock.seeds import derive

from .oracles import welch_t


def blocks_of(*sizes):
    return np.repeat(np.arange(len(sizes)), sizes)


def test_even_block_halves():
    a = assign_within_blocks(blocks_of(4), seed=3)
    assert a.n_treated == 2 and not a.misfit.any()


def test_two_odd_blocks():
    for seed in range(50):
        a = assign_within_blocks(blocks_of(5, 5), seed)
        assert a.misfit.sum() == 2
        assert a.d[a.misfit].tolist() in ([0, 1], [1, 0])


def test_three_odd_blocks_never_unanimous():
    for seed in range(1000):
        a = assign_within_blocks(blocks_of(5, 5, 5), seed)
        assert a.d[a.misfit].sum() in (1, 2)


def test_coin_flip_flips_every_misfit():
    b = blocks_of(5, 3, 4, 7)
    a0 = assign_within_blocks(b, 9, first_misfit_arm=0)
    a1 = assign_within_blocks(b, 9, first_misfit_arm=1)
    np.testing.assert_array_equal(a0.misfit, a1.misfit)
    np.testing.assert_array_equal(a0.d[~a0.misfit], a1.d[~a1.misfit])
    np.testing.assert_array_equal(a0.d[a0.misfit], 1 - a1.d[a1.misfit])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=8), st.integers(0, 2**32))
def test_block_balance_property(sizes, seed):
    b = blocks_of(*sizes)
    a = assign_within_blocks(b, seed)
    for k, s in enumerate(sizes):
        t = int(a.d[b == k].sum())
        assert abs(t - (s - t)) <= 1
    assert abs(2 * a.n_treated - a.n) <= 1
    assert a.misfit.sum() == sum(s % 2 for s in sizes)


def test_csv_columns(tmp_path):
    a = assign_within_blocks(blocks_of(3, 2), 1)
    a.to_csv(tmp_path / "a.csv", ["a", "b", "c", "d", "e"])
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert list(rows[0]) == ["unit_id", "arm", "block_or_pair_id", "misfit_flag"]
    assert sum(int(r["misfit_flag"]) for r in rows) == 1


# matching

def test_two_units_one_pair():
    pairs, a = pairwise_match(np.array([[0.0], [1.0]]), seed=4)
    assert pairs == [(0, 1)] and a.n_treated == 1


def test_greedy_matches_optimum_on_two_clusters():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    costs = {}
    for m in [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]:
        costs[m] = sum((X[a, 0] - X[b, 0]) ** 2 for a, b in m)
    optimum = sorted(min(costs, key=costs.get))
    for seed in range(50):
        assert pairwise_match(X, "vs", seed=seed)[0] == optimum


def test_fps_pairs_by_score():
    pairs, _ = pairwise_match(np.array([3.0, 1.0, 4.0, 2.0]), "fps")
    assert pairs == [(0, 2), (1, 3)]  # scores {1,2} and {3,4}


def test_pairs_partition_units():
    X = np.random.default_rng(0).standard_normal((21, 3))
    pairs, a = pairwise_match(X, "vs", weights=[2, 1, 0], seed=7)
    used = list(itertools.chain(*pairs))
    assert len(used) == len(set(used)) == 20
    hold = a.method["holdout"]
    assert hold not in used and a.misfit[hold] and a.misfit.sum() == 1
    for g, (i, j) in enumerate(pairs):
        assert a.d[i] + a.d[j] == 1 and a.group_of[i] == a.group_of[j] == g


def test_odd_policy():
    X = np.zeros((5, 1))
    with pytest.raises(OddN):
        pairwise_match(X, odd="error")
    _, a = pairwise_match(X, odd="error", holdout=2)
    assert a.misfit.tolist() == [False, False, True, False, False]


# rerandomization

def draws_for(n, seed, R):
    return [complete_draw(n, derive(seed, r)) for r in range(R)]


def test_minmax_two_draws():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((12, 2))
    w = np.array([1.0, 1.0])
    for seed in range(20):
        D = draws_for(12, seed, 2)
        maxima = [max(abs(welch_t(X[:, k], d)) * w[k] for k in range(2)) for d in D]
        a, stats = rerandomize(Criterion.vs(X, w), "minmax", R=2, seed=seed)
        np.testing.assert_array_equal(a.d, D[int(np.argmin(maxima))])
        np.testing.assert_allclose(stats.weighted_max, maxima, rtol=1e-10)


def test_constant_covariate_contributes_zero():
    X = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
    _, stats = rerandomize(Criterion.vs(X), R=20, seed=2)
    assert np.all(stats.theta[:, 0] == 0.0)


def test_weights_flip_the_choice():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((16, 2))
    found = False
    for seed in range(500):
        D = draws_for(16, seed, 2)
        th = np.array([[welch_t(X[:, k], d) for k in range(2)] for d in D])
        plain = np.abs(th).max(axis=1)
        weighted = (np.abs(th) * [10, 1]).max(axis=1)
        if np.argmin(plain) != np.argmin(weighted):
            found = True
            a, _ = rerandomize(Criterion.vs(X, [10, 1]), R=2, seed=seed)
            np.testing.assert_array_equal(a.d, D[int(np.argmin(weighted))])
            a, _ = rerandomize(Criterion.vs(X), R=2, seed=seed)
            np.testing.assert_array_equal(a.d, D[int(np.argmin(plain))])
            break
    assert found


def test_zero_weight_ignores_infinite_theta():
    c = Criterion.vs(np.zeros((4, 2)), [0.0, 1.0])
    assert c.weighted_max(np.array([[np.inf, 2.0]])).tolist() == [2.0]


def test_bigstick_passes_or_flags():
    X = np.random.default_rng(3).standard_normal((40, 3))
    a, stats = rerandomize(Criterion.vs(X), "bigstick", alpha=0.05, seed=1)
    assert a.method["converged"]
    assert np.all(np.abs(stats.theta[stats.chosen]) < 1.96)
    # alpha near 1 makes the test impossible to pass
    a, stats = rerandomize(Criterion.vs(X), "bigstick", alpha=0.999, max_draws=5, seed=1)
    assert not a.method["converged"] and a.method["draws"] == 5
    assert stats.weighted_max[stats.chosen] == stats.weighted_max.min()


def test_fps_criterion_single_column():
    s = np.arange(10.0)
    a, stats = rerandomize(Criterion.fps(s), R=30, seed=0)
    assert stats.theta.shape == (30, 1)
    assert abs(welch_t(s, a.d)) == pytest.approx(np.abs(stats.theta[:, 0]).min())


def test_balance_csv(tmp_path):
    stats = BalanceStats(np.array([[1.0, -2.0], [0.5, 0.1]]), np.array([2.0, 0.5]), 1)
    stats.to_csv(tmp_path / "b.csv")
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert rows[0] == ["draw", "theta_0", "theta_1", "weighted_max", "chosen"]
    assert rows[2][-1] == "1"
