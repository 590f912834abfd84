import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from discspec.errors import ModelError
from discspec.expr import Expr
from discspec.logscalar import (
    LogScalar, cumulative_log_sum, log_sum, reverse_cumulative_log_sum,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).filter(lambda v: abs(v) > 1e-6)


def test_expr_evaluates_on_arrays():
    e = Expr("(n+1)^2 / 4 + exp(0) - sqrt(4)", var="n")
    n = np.arange(5.0)
    assert np.allclose(e(n), (n + 1) ** 2 / 4 - 1)


def test_expr_rejects_unknown_names_and_calls():
    with pytest.raises(ModelError):
        Expr("y + 1", var="n")
    with pytest.raises(ModelError):
        Expr("__import__('os')", var="n")
    with pytest.raises(ModelError):
        Expr("n +", var="n")


def test_expr_constants():
    assert float(Expr("pi + e", var="x")(np.array(0.0))) == pytest.approx(math.pi + math.e)


@given(finite)
def test_logscalar_round_trip(v):
    assert float(LogScalar.from_float(v)) == pytest.approx(v, rel=1e-15)


@given(finite, finite)
def test_logscalar_arithmetic_matches_floats(x, y):
    X, Y = LogScalar.from_float(x), LogScalar.from_float(y)
    assert float(X * Y) == pytest.approx(x * y, rel=1e-13)
    assert float(X / Y) == pytest.approx(x / y, rel=1e-13)
    s = x + y
    if abs(s) > 1e-6 * max(abs(x), abs(y)):
        assert float(X + Y) == pytest.approx(s, rel=1e-9)


def test_logscalar_handles_magnitudes_beyond_double():
    big = LogScalar.from_log(5000.0)
    assert (big * big).log_mag == 10000.0
    assert (big + big).log_mag == pytest.approx(5000.0 + math.log(2))
    assert float(big - big) == 0.0


def test_log_sums():
    terms = np.log(np.array([1.0, 2.0, 3.0, 4.0]))
    assert log_sum(terms) == pytest.approx(math.log(10))
    assert np.allclose(np.exp(cumulative_log_sum(terms)), [1, 3, 6, 10])
    assert np.allclose(np.exp(reverse_cumulative_log_sum(terms)), [10, 9, 7, 4])
