import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infrbm.numerics import StreamingLogSumExp, logmeanexp, logsumexp, sigmoid, softplus


def test_softplus_examples():
    assert softplus(0.0) == 0.6931471805599453
    assert abs(softplus(100.0) - 100.0) <= 1e-12
    assert abs(softplus(-100.0) - 3.7200759760208356e-44) <= 1e-55


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_softplus_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        softplus(bad)


@given(st.floats(-700, 700))
def test_softplus_matches_high_precision(x):
    import mpmath

    ref = float(mpmath.log1p(mpmath.exp(mpmath.mpf(x))))
    assert abs(softplus(x) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_softplus_array_matches_scalar():
    x = np.linspace(-50, 50, 1001)
    np.testing.assert_array_equal(softplus(x), [softplus(float(v)) for v in x])


def test_softplus_no_overflow_warnings():
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        softplus(np.array([-1e300, -800.0, 800.0, 1e300]))
        sigmoid(np.array([-1e300, 800.0]))


@given(st.floats(-500, 500))
def test_sigmoid_symmetry_and_range(x):
    s = sigmoid(x)
    assert 0.0 <= s <= 1.0
    assert abs(s + sigmoid(-x) - 1.0) <= 1e-15


def test_sigmoid_is_softplus_derivative():
    x = np.linspace(-20, 20, 401)
    h = 1e-6
    fd = (softplus(x + h) - softplus(x - h)) / (2 * h)
    np.testing.assert_allclose(sigmoid(x), fd, atol=1e-8)


def test_logsumexp_overflow_safe():
    a = np.array([700.0, -700.0, 699.0])
    assert logsumexp(a) == pytest.approx(700 + math.log1p(math.exp(-1)), abs=1e-12)
    assert logsumexp(np.array([-np.inf, -np.inf])) == -np.inf
    assert logsumexp(np.zeros(0)) == -np.inf
    assert logmeanexp(np.full(4, 3.0)) == pytest.approx(3.0, abs=1e-15)


@settings(max_examples=50)
@given(st.lists(st.floats(-700, 700), min_size=1, max_size=40), st.integers(1, 7))
def test_streaming_logsumexp_chunk_invariant(values, chunk):
    acc = StreamingLogSumExp()
    for i in range(0, len(values), chunk):
        acc.add(np.array(values[i:i + chunk]))
    assert acc.value == pytest.approx(logsumexp(np.array(values)), abs=1e-9)
