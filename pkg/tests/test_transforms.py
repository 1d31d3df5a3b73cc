import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpvi.transforms import Transform, transform_deriv, transform_inverse, transform_value

KINDS = [Transform.SOFTPLUS, Transform.EXP]


def test_values_at_known_points():
    assert transform_value("softplus", 0.0) == pytest.approx(math.log(2), rel=1e-15)
    assert transform_value("exp", 0.0) == 1.0
    # log(1 + e^-5), evaluated with mpmath at 30 digits
    assert transform_value("softplus", -5.0) == pytest.approx(0.00671534848911806861, rel=1e-14)


def test_derivs_at_known_points():
    assert transform_deriv("softplus", 0.0) == 0.5
    assert transform_deriv("softplus", 3.0) == pytest.approx(0.95257412682243321912, rel=1e-14)
    s = np.linspace(-10, 10, 41)
    np.testing.assert_array_equal(transform_deriv("exp", s), transform_value("exp", s))


def test_inverse_at_known_points():
    assert transform_inverse("exp", 1.0) == 0.0
    assert transform_inverse("softplus", math.log(2)) == pytest.approx(0.0, abs=1e-15)
    assert transform_inverse("softplus", 0.1) == pytest.approx(-2.25216846104409080892, rel=1e-13)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
@pytest.mark.parametrize("kind", KINDS)
def test_non_finite_input_rejected(kind, bad):
    with pytest.raises(ValueError):
        transform_value(kind, bad)
    with pytest.raises(ValueError):
        transform_deriv(kind, bad)


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_inverse_domain(sigma):
    with pytest.raises(ValueError):
        transform_inverse("softplus", sigma)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown transform"):
        Transform.parse("tanh")


def test_softplus_extremes_are_stable():
    assert transform_value("softplus", 800.0) == 800.0
    assert transform_value("softplus", 31.0) == pytest.approx(31.0 + math.exp(-31.0), rel=1e-15)
    tiny = transform_value("softplus", -700.0)
    assert 0 < tiny == pytest.approx(math.exp(-700.0), rel=1e-12)
    assert transform_deriv("softplus", -800.0) >= 0
    assert transform_deriv("softplus", 800.0) == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_deriv_never_exceeds_value(kind):
    s = np.random.default_rng(0).uniform(-20, 20, 10_000)
    assert np.all(transform_deriv(kind, s) <= transform_value(kind, s) + 1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_deriv_matches_finite_difference(kind):
    s = np.linspace(-8, 8, 97)
    h = 1e-6
    fd = (transform_value(kind, s + h) - transform_value(kind, s - h)) / (2 * h)
    np.testing.assert_allclose(transform_deriv(kind, s), fd, rtol=1e-6)


@pytest.mark.parametrize("kind", KINDS)
@given(log_sigma=st.floats(min_value=math.log(1e-6), max_value=math.log(1e3)))
def test_round_trip(kind, log_sigma):
    sigma = math.exp(log_sigma)
    assert transform_value(kind, transform_inverse(kind, sigma)) == pytest.approx(sigma, rel=1e-10)


def test_arrays_keep_shape():
    s = np.zeros((2, 3))
    assert transform_value("softplus", s).shape == (2, 3)
    assert isinstance(transform_value("softplus", 0.0), float)
