import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prhf.errors import PreconditionError
from prhf.verify.kernels import (YukawaDeriv, sqrt_integral_formula, yukawa_bound, yukawa_bound_check,
                                 yukawa_derivative, yukawa_fd_check, yukawa_table)
from prhf.verify.multiindex import compositions

points = st.tuples(st.floats(0.2, 3.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))


def test_order_zero():
    x = (0.3, -1.2, 0.5)
    r = math.dist(x, (0, 0, 0))
    assert yukawa_derivative((0, 0, 0), 1.7, x) == pytest.approx(math.exp(-1.7 * r) / r, rel=1e-15)


def test_first_derivative_closed_form():
    x = (0.8, 0.1, -0.4)
    s = 0.9
    r = math.dist(x, (0, 0, 0))
    expected = -x[0] * (1 + s * r) * math.exp(-s * r) / r**3
    assert yukawa_derivative((1, 0, 0), s, x) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(points, st.floats(0.0, 4.0))
def test_helmholtz_equation(x, s):
    # (Lap - s^2) e^{-s r}/r = 0 away from the origin
    lap = sum(yukawa_derivative(b, s, x) for b in ((2, 0, 0), (0, 2, 0), (0, 0, 2)))
    y = yukawa_derivative((0, 0, 0), s, x)
    assert lap == pytest.approx(s * s * y, rel=1e-10, abs=1e-12)


def test_table_parity_invariant():
    # every term has a + k odd
    for m in range(6):
        for b in compositions(m):
            assert all((a + k) % 2 == 1 for (a, _, k), _ in yukawa_table(tuple(b)))


@pytest.mark.parametrize("beta", [(1, 0, 0), (1, 1, 0), (2, 1, 0), (1, 1, 1), (0, 0, 3)])
def test_against_mpmath_differentiation(beta):
    exact, fd = yukawa_fd_check(beta, 1.1, (0.7, -0.6, 0.9))
    assert exact == pytest.approx(fd, rel=1e-9)


def test_mixed_partials_commute():
    x, s = (0.5, 0.7, -0.3), 0.4
    # tables are built along the last nonzero axis, so (2,1,0) and (1,1,1) go through different paths
    d = YukawaDeriv.build((2, 1, 1), s)
    with mpmath.workdps(40):
        f = lambda a, b, c: mpmath.exp(-s * mpmath.sqrt(a * a + b * b + c * c)) / mpmath.sqrt(a * a + b * b + c * c)
        ref = mpmath.diff(f, x, (2, 1, 1))
    assert d(x) == pytest.approx(float(ref), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 2)), st.floats(0.0, 5.0),
       st.floats(0.1, 10.0), st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_bound_holds(beta, s, r, phi, theta):
    x = r * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    val, bound = yukawa_bound_check(beta, s, x)
    assert val <= bound


def test_margin_ratio_is_not_monotone_in_s():
    # |d_1 Y| / bound grows in s at x = e_1: (1 + s) e^{-s} against e^{-s/2}
    x = (1.0, 0.0, 0.0)
    q = [yukawa_bound_check((1, 0, 0), s, x) for s in (0.0, 0.5, 1.0)]
    ratios = [v / b for v, b in q]
    assert ratios[1] > ratios[0]
    assert ratios[0] == pytest.approx(1 / (8 * math.sqrt(2)), rel=1e-14)


def test_bound_formula():
    assert yukawa_bound((1, 2, 0), 0.0, (2.0, 0.0, 0.0)) == pytest.approx(math.sqrt(2) * 2 / 2 * 4**3)


def test_guards():
    with pytest.raises(PreconditionError):
        yukawa_bound_check((9, 0, 0), 1.0, (1, 0, 0))
    with pytest.raises(PreconditionError):
        YukawaDeriv.build((1, 0, 0), -1.0)
    with pytest.raises(PreconditionError):
        yukawa_derivative((1, 0, 0), 1.0, (0, 0, 0))


@pytest.mark.parametrize("x", [1e-3, 0.25, 1.0, 7.0, 1e4])
def test_sqrt_integral(x):
    assert sqrt_integral_formula(x) == pytest.approx(1 / math.sqrt(x), rel=1e-10)


def test_sqrt_integral_domain():
    with pytest.raises(PreconditionError):
        sqrt_integral_formula(0.0)
