import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlblock.dataset import PanelSchema, load_panel, standardize
from mlblock.errors import LeakageError, MissingData, NonNumeric, SchemaMismatch

CSV = "unit,y1,y2,x1\na,1,2,0.5\nb,2,3,1.5\nc,3,5,2.5\nd,4,4,3.5\n"


def write(tmp_path, text):
    p = tmp_path / "panel.csv"
    p.write_text(text)
    return p


def test_load_four_rows(tmp_path):
    panel = load_panel(write(tmp_path, CSV), {"pre1": "y1", "pre2": "y2"})
    assert panel.n == 4 and panel.K == 1
    assert panel.covariate_names == ("x1",)
    np.testing.assert_array_equal(panel.outcome("pre2"), [2, 3, 5, 4])


def test_blank_cell_names_row(tmp_path):
    text = CSV.replace("c,3,5,2.5", "c,3,5,")
    with pytest.raises(MissingData) as err:
        load_panel(write(tmp_path, text), {"pre1": "y1", "pre2": "y2"})
    assert "3" in str(err.value)


def test_absent_column(tmp_path):
    with pytest.raises(SchemaMismatch, match="y3"):
        load_panel(write(tmp_path, CSV), {"pre1": "y1", "pre2": "y3"})


def test_non_numeric(tmp_path):
    with pytest.raises(NonNumeric):
        load_panel(write(tmp_path, CSV.replace("0.5", "abc")), {"pre1": "y1", "pre2": "y2"})


def test_load_is_deterministic(tmp_path):
    p = write(tmp_path, CSV)
    a = load_panel(p, {"pre1": "y1", "pre2": "y2"})
    b = load_panel(p, PanelSchema(periods={"pre1": "y1", "pre2": "y2"}))
    assert a.fingerprint() == b.fingerprint()


def test_withhold_raises_leakage(panel):
    held = panel.withhold("pre2")
    assert held.pre_periods == ("pre1",)
    with pytest.raises(LeakageError):
        held.outcome("pre2")
    with pytest.raises(LeakageError):
        held.feature("pre2")


def test_standardize_small_column():
    Z, sc = standardize(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(Z[:, 0], [-1, 0, 1], atol=1e-12)


def test_standardize_constant_flagged():
    Z, sc = standardize(np.array([[5.0], [5.0], [5.0]]))
    assert sc.constant[0]
    np.testing.assert_array_equal(Z[:, 0], 0.0)


def test_standardize_fixed_point():
    Z, _ = standardize(np.random.default_rng(0).standard_normal((30, 4)))
    Z2, _ = standardize(Z)
    np.testing.assert_allclose(Z2, Z, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardize_round_trip(X):
    Z, sc = standardize(X)
    back = sc.inverse_transform(Z)
    keep = ~sc.constant
    np.testing.assert_allclose(back[:, keep], X[:, keep], rtol=1e-10, atol=1e-10 * (1 + np.abs(X).max()))
    if keep.any() and X.shape[0] > 1:
        np.testing.assert_allclose(Z[:, keep].mean(axis=0), 0, atol=1e-10)
        np.testing.assert_allclose(Z[:, keep].std(axis=0, ddof=1), 1, atol=1e-10)
