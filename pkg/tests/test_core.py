import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drate.core import (
    AteEstimate,
    DataError,
    EmptyArm,
    NonBinaryTreatment,
    NonFinite,
    NuisanceEstimates,
    validate_dataset,
)


def test_minimal_two_arm_dataset():
    d = validate_dataset([[1], [2]], [1, 0], [3.0, 1.0])
    assert (d.n, d.p) == (2, 1)
    assert d.column_names == ("x1",)


def test_empty_control_arm():
    with pytest.raises(EmptyArm):
        validate_dataset([[1], [2]], [1, 1], [3.0, 1.0])


@pytest.mark.parametrize("where", ["X", "A", "Y"])
@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(where, bad):
    X = np.array([[1.0], [2.0], [3.0]])
    A = np.array([1.0, 0.0, 1.0])
    Y = np.array([3.0, 1.0, 2.0])
    {"X": X[:, 0], "A": A, "Y": Y}[where][1] = bad
    with pytest.raises(NonFinite):
        validate_dataset(X, A, Y)


def test_non_binary_treatment_reports_row():
    with pytest.raises(NonBinaryTreatment) as exc:
        validate_dataset([[1], [2], [3]], [1, 0, 2], [1.0, 2.0, 3.0])
    assert exc.value.row == 2


@pytest.mark.parametrize("kw", [
    dict(X=[[1], [2], [3]], A=[1, 0], Y=[1, 2, 3]),
    dict(X=[[1]], A=[1], Y=[1]),
])
def test_shape_problems(kw):
    with pytest.raises(DataError):
        validate_dataset(**kw)


def test_inputs_not_mutated_and_dataset_immutable():
    X = np.array([[1.0], [2.0]])
    A = np.array([1.0, 0.0])
    Y = np.array([3.0, 1.0])
    d = validate_dataset(X, A, Y)
    X[0, 0] = 99.0
    assert d.X[0, 0] == 1.0
    with pytest.raises(ValueError):
        d.Y[0] = 5.0


@given(arrays(float, (12, 2), elements=st.floats(-1e6, 1e6)),
       st.lists(st.sampled_from([0.0, 1.0]), min_size=12, max_size=12).filter(lambda a: 0 < sum(a) < 12),
       arrays(float, 12, elements=st.floats(-1e6, 1e6)))
def test_validation_is_idempotent(X, A, Y):
    d = validate_dataset(X, A, Y)
    assert validate_dataset(d) == d


def test_canonical_order_and_subset():
    d = validate_dataset([[1], [2], [3]], [1, 0, 1], [1.0, 2.0, 3.0], ids=[30, 10, 20])
    assert list(d.canonical_order()) == [1, 2, 0]
    s = d.subset(np.array([2, 1]), renumber=True)
    assert list(s.ids) == [0, 1] and list(s.Y) == [3.0, 2.0]


def test_nuisance_clamp_counts():
    nu = NuisanceEstimates.build([0.001, 0.5, 0.999], [0, 0, 0], [0, 0, 0])
    assert nu.e_hat[0] == 0.01 and nu.e_hat[2] == 0.99
    assert nu.n_clamped == 2


def test_nuisance_rejects_out_of_bounds():
    with pytest.raises(ValueError):
        NuisanceEstimates(np.array([0.001]), np.zeros(1), np.zeros(1))


def test_estimate_invariants():
    with pytest.raises(ValueError):
        AteEstimate("aiptw", "glm", 0.0, 1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        AteEstimate("nope", "glm", 0.0, 1.0, -1.0, 1.0)
    est = AteEstimate.point_only("imp", "glm", 2.0)
    assert est.variance_source == "none" and math.isnan(est.width)
