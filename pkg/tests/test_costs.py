import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdro.costs import CovariateShift, TransportCost, UnsupportedSmoothGradientError, parse_cost
from wdro.nets import DimensionMismatchError, Sample

finite_floats = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = st.lists(finite_floats, min_size=1, max_size=6)


@pytest.fixture(params=["sq-l2", "sq-linf", "covshift:sq-l2", "covshift:sq-linf"])
def any_cost(request):
    return parse_cost(request.param)


def test_parse_roundtrip(any_cost):
    assert parse_cost(any_cost.describe()).describe() == any_cost.describe()


def test_parse_unknown_kind():
    with pytest.raises(ValueError):
        parse_cost("l1")


@given(x=vectors)
@settings(max_examples=50)
def test_identity_of_indiscernibles(x):
    z = Sample(np.array(x), 0)
    for name in ("sq-l2", "sq-linf", "covshift:sq-l2", "covshift:sq-linf"):
        assert parse_cost(name).cost(z, z) == 0.0


@given(x=vectors, data=st.data())
@settings(max_examples=50)
def test_nonnegative_and_symmetric(x, data):
    x0 = data.draw(st.lists(finite_floats, min_size=len(x), max_size=len(x)))
    z, z0 = Sample(np.array(x), 1), Sample(np.array(x0), 1)
    for name in ("sq-l2", "sq-linf", "covshift:sq-l2", "covshift:sq-linf"):
        c = parse_cost(name)
        assert c.cost(z, z0) >= 0.0
        assert c.cost(z, z0) == c.cost(z0, z)


def test_sq_l2_value():
    c = TransportCost("sq-l2")
    assert c.cost(Sample(np.array([1.0, 2.0]), 0), Sample(np.zeros(2), 0)) == 5.0


def test_covshift_infinite_on_label_change():
    c = parse_cost("covshift:sq-l2")
    v = c.cost(Sample(np.zeros(2), 0), Sample(np.zeros(2), 1))
    assert v == math.inf and v > 1e308  # true IEEE infinity, not a big float


def test_covshift_transparent_on_equal_labels():
    c = parse_cost("covshift:sq-l2")
    inner = TransportCost("sq-l2")
    z, z0 = Sample(np.array([3.0, 1.0]), 1), Sample(np.array([1.0, 1.0]), 1)
    assert c.cost(z, z0) == inner.cost(z, z0)
    assert np.array_equal(c.grad_first(z, z0), inner.grad_first(z, z0))


def test_gradient_values():
    c = TransportCost("sq-l2")
    z, z0 = Sample(np.array([3.0, 1.0]), 0), Sample(np.array([1.0, 1.0]), 0)
    assert c.grad_first(z, z0) == pytest.approx([4.0, 0.0])
    assert c.grad_first(z0, z0) == pytest.approx([0.0, 0.0])


def test_sup_norm_gradient_unsupported():
    c = TransportCost("sq-linf")
    z = Sample(np.zeros(2), 0)
    with pytest.raises(UnsupportedSmoothGradientError):
        c.grad_first(z, z)


def test_covshift_gradient_rejects_unequal_labels():
    c = parse_cost("covshift:sq-l2")
    with pytest.raises(ValueError):
        c.grad_first(Sample(np.zeros(2), 0), Sample(np.zeros(2), 1))


def test_dimension_mismatch():
    c = TransportCost("sq-l2")
    with pytest.raises(DimensionMismatchError):
        c.cost(Sample(np.zeros(2), 0), Sample(np.zeros(3), 0))


@given(data=st.data())
@settings(max_examples=200)
def test_sq_l2_two_strong_convexity_identity(data):
    # ||z'-z0||^2 = ||z-z0||^2 + <2(z-z0), z'-z> + ||z'-z||^2 exactly:
    # the quadratic is its own second-order expansion (2-strongly convex)
    m = data.draw(st.integers(1, 5))
    vec = st.lists(finite_floats, min_size=m, max_size=m)
    z0 = np.array(data.draw(vec))
    z = np.array(data.draw(vec))
    zp = np.array(data.draw(vec))
    c = TransportCost("sq-l2")
    s0, s, sp = Sample(z0, 0), Sample(z, 0), Sample(zp, 0)
    lhs = c.cost(sp, s0)
    rhs = c.cost(s, s0) + c.grad_first(s, s0) @ (zp - z) + float((zp - z) @ (zp - z))
    assert lhs >= rhs - 1e-6 * max(1.0, abs(rhs))
