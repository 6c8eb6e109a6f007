import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlblock.blocking import (
    IntervalDefinition,
    Partition,
    definition_from_dict,
    fallback_blocking,
    fps_blocking,
    from_definition,
    single_block,
    vs_blocking,
)
from mlblock.errors import InvariantError
from mlblock.mlcore.cart import cart_fit

from .conftest import make_panel


def builders():
    p = make_panel(n=60, periods=("pre1", "pre2"), seed=3)
    aux = fallback_blocking(p, "auxiliary", cart_fit(p.covariates[:, :1], p.outcome("pre1"), 1, 8), c_B=8)
    return {
        "vs": vs_blocking(p, seed=0, n_trees=30)[0],
        "fps": fps_blocking(p, seed=0, n_trees=30),
        "single_pre": fallback_blocking(p.restrict(["pre1"]), "single_pre"),
        "auxiliary": aux,
        "composed": fps_blocking(p, seed=0, n_trees=30, subgroup_seed=aux),
    }


@pytest.mark.parametrize("name", ["vs", "fps", "single_pre", "auxiliary", "composed"])
def test_definition_json_round_trip(name):
    part = builders()[name]
    d = definition_from_dict(json.loads(json.dumps(part.definition.to_dict())))
    np.testing.assert_array_equal(d.assign(part.features), part.block_of)
    assert d.to_dict() == part.definition.to_dict()


def test_round_trip_covers_composed_kind():
    assert builders()["composed"].definition.kind == "composed"


def test_to_dict_lists_units():
    part = single_block(3, 1)
    out = part.to_dict(["a", "b", "c"])
    assert out["b"] == 1 and out["sizes"] == [3]
    assert [a["unit"] for a in out["assignments"]] == ["a", "b", "c"]


def test_check_rejects_gaps_and_small_blocks():
    d = IntervalDefinition(np.array([0.5]))
    with pytest.raises(InvariantError):
        Partition(np.array([0, 0, 2, 2]), d, 1).check()
    with pytest.raises(InvariantError):
        Partition(np.array([0, 0, 0, 1]), d, 2).check()
    with pytest.raises(InvariantError):
        Partition(np.array([0, 1, 0, 1]), d, 1, features=np.array([[0.0], [1], [2], [3]])).check()


def test_block_of_is_read_only():
    part = single_block(4, 1)
    with pytest.raises(ValueError):
        part.block_of[0] = 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4, unique=True),
       st.lists(st.floats(-10, 10), min_size=1, max_size=40))
def test_intervals_are_monotone(cuts, scores):
    d = IntervalDefinition(np.sort(cuts))
    s = np.sort(scores)
    blocks = d.assign(s[:, None])
    assert np.all(np.diff(blocks) >= 0)
    assert blocks.max() <= len(cuts)


def test_from_definition_checks():
    d = IntervalDefinition(np.array([0.0]))
    part = from_definition(d, np.array([[-1.0], [-2], [1], [2]]), 2)
    assert part.block_of.tolist() == [0, 0, 1, 1]
    with pytest.raises(InvariantError):
        from_definition(d, np.array([[-1.0], [1], [2]]), 2)
