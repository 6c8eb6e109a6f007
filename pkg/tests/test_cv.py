import numpy as np
import pytest

from mlblock.cv import cv_tune, kfold_split, select_index
from mlblock.errors import FoldError


def test_five_folds_of_two():
    plan = kfold_split(10, 5, seed=3)
    tests = [te for _, _, te in plan.folds()]
    assert all(len(t) == 2 for t in tests)
    np.testing.assert_array_equal(np.sort(np.concatenate(tests)), np.arange(10))


def test_leave_one_out():
    plan = kfold_split(10, 10, seed=0)
    assert all(len(te) == 1 for _, _, te in plan.folds())


def test_plan_deterministic():
    a, b = kfold_split(23, 4, 9), kfold_split(23, 4, 9)
    np.testing.assert_array_equal(a.assignments, b.assignments)


def test_rules():
    assert select_index([2.0, 1.0, 1.5], [0.1] * 3, "min") == 1
    # threshold 1.0 + 0.1 admits the simpler first value
    assert select_index([1.05, 1.0], [0.0, 0.1], "1se") == 0
    assert select_index([1.2, 1.0], [0.0, 0.1], "1se") == 1


class Mean:
    def __init__(self, y):
        self.m = y.mean()

    def predict(self, X):
        return np.full(len(X), self.m)


def test_constant_fitter_mspe():
    rng = np.random.default_rng(1)
    X, y = rng.standard_normal((20, 1)), rng.standard_normal(20)
    plan = kfold_split(20, 4, 0)
    res = cv_tune(lambda v, Xt, yt: Mean(yt), X, y, ["a", "b", "c"], plan)
    expect = np.mean(np.concatenate([(y[te] - y[tr].mean()) ** 2 for _, tr, te in plan.folds()]))
    np.testing.assert_allclose(res.mspe, expect, rtol=1e-12)
    assert res.chosen == 0


def test_fold_error_tagged():
    plan = kfold_split(6, 3, 0)

    def bad(v, X, y):
        raise ZeroDivisionError("boom")

    with pytest.raises(FoldError) as err:
        cv_tune(bad, np.zeros((6, 1)), np.zeros(6), [1], plan)
    assert err.value.fold == 0 and isinstance(err.value.__cause__, ZeroDivisionError)


def test_one_se_never_exceeds_threshold():
    rng = np.random.default_rng(5)
    for _ in range(200):
        m, se = rng.random(6), rng.random(6) * 0.2
        i = select_index(m, se, "1se")
        j = int(np.argmin(m))
        assert m[i] <= m[j] + se[j] + 1e-15
