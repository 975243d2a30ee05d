import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sp_integrate

from anovaqmc.errors import DimensionTooLarge, DomainError, MaxDepthExceeded, NonFiniteSample
from anovaqmc.quadrature import (
    Interval,
    QuadratureSpec,
    RealLine,
    SemiInfinite,
    adaptive_simpson,
    composite_gauss_legendre,
    gauss_hermite,
    gauss_hermite_log_weights,
    gauss_legendre,
    integrate,
    panel_edges,
    rule,
    tensor_integrate,
)


@pytest.mark.parametrize("n", [1, 2, 5, 20, 64])
def test_gauss_legendre_matches_numpy(n):
    x, w = gauss_legendre(n)
    xr, wr = np.polynomial.legendre.leggauss(n)
    np.testing.assert_allclose(x, xr, atol=1e-14)
    np.testing.assert_allclose(w, wr, atol=1e-14)


@pytest.mark.parametrize("n", [1, 3, 10, 40, 100])
def test_gauss_hermite_matches_numpy(n):
    x, w = gauss_hermite(n)
    xr, wr = np.polynomial.hermite.hermgauss(n)
    np.testing.assert_allclose(x, xr, atol=1e-12 * max(1, n ** 0.5))
    np.testing.assert_allclose(w, wr, rtol=1e-10, atol=1e-300)


def test_hermite_log_weights_do_not_underflow():
    x, lw = gauss_hermite_log_weights(400)
    assert np.all(np.isfinite(lw))
    # total mass is sqrt(pi)
    assert math.isclose(np.exp(lw).sum(), math.sqrt(math.pi), rel_tol=1e-12)


@given(st.integers(min_value=0, max_value=39))
def test_hermite_exact_for_polynomials(k):
    # int x^k exp(-x^2) dx = Gamma((k+1)/2) for even k, 0 for odd
    x, w = gauss_hermite(20)
    exact = math.gamma((k + 1) / 2) if k % 2 == 0 else 0.0
    assert abs(np.dot(w, x ** k) - exact) <= 1e-13 * max(1.0, np.dot(w, np.abs(x) ** k))


@given(st.integers(min_value=0, max_value=31), st.floats(-3, 3), st.floats(0.1, 4))
def test_legendre_exact_for_polynomials(k, a, width):
    b = a + width
    x, w = composite_gauss_legendre([a, b], 16)
    exact = (b ** (k + 1) - a ** (k + 1)) / (k + 1)
    assert abs(np.dot(w, x ** k) - exact) <= 1e-11 * max(1.0, abs(exact), abs(a) ** (k + 1), abs(b) ** (k + 1))


def test_panel_edges_insert_breakpoints():
    e = panel_edges(-1.0, 1.0, 0.6, (0.1, 5.0))
    assert e[0] == -1.0 and e[-1] == 1.0
    assert 0.1 in e
    assert np.all(np.diff(e) <= 0.6 + 1e-12)


def test_composite_rejects_bad_edges():
    with pytest.raises(DomainError):
        composite_gauss_legendre([1.0])
    with pytest.raises(DomainError):
        composite_gauss_legendre([0.0, 0.0, 1.0])


def test_adaptive_simpson_kinked():
    # |x| on [-1, 2] has a kink Simpson handles by refinement
    val = adaptive_simpson(lambda x: np.abs(x), -1.0, 2.0, tol=1e-12)
    assert abs(val - 2.5) < 1e-10


def test_adaptive_simpson_depth_limit():
    with pytest.raises(MaxDepthExceeded):
        adaptive_simpson(lambda x: np.sign(x - 1 / 3), 0.0, 1.0, tol=1e-15, max_depth=5)


def test_nonfinite_integrand():
    with pytest.raises(NonFiniteSample):
        integrate(QuadratureSpec(domain=Interval(-1, 1)), lambda x: 1 / x * np.inf)


def test_gaussian_moment_all_kinds():
    g = lambda x: x * x * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    for spec in (
        QuadratureSpec("gauss_hermite", 30, scale=math.sqrt(2)),
        QuadratureSpec("gauss_legendre", 16, RealLine(20.0)),
        QuadratureSpec("adaptive_simpson", domain=RealLine(20.0), tol=1e-12),
    ):
        assert abs(integrate(spec, g) - 1.0) < 1e-9


def test_semi_infinite_matches_scipy():
    g = lambda x: np.exp(-x) * np.cos(x)
    ref, _ = sp_integrate.quad(lambda x: math.exp(-x) * math.cos(x), 1.0, np.inf, epsabs=1e-14)
    val = integrate(QuadratureSpec("gauss_legendre", 16, SemiInfinite(1.0, 1, 50.0)), g)
    assert abs(val - ref) < 1e-12
    left = integrate(QuadratureSpec("gauss_legendre", 16, SemiInfinite(-1.0, -1, 50.0)), lambda x: g(-x))
    assert abs(left - ref) < 1e-12


def test_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec("trapezoid")
    with pytest.raises(DomainError):
        QuadratureSpec("gauss_hermite", domain=Interval(0, 1))
    with pytest.raises(DomainError):
        Interval(1.0, 1.0)
    with pytest.raises(DomainError):
        SemiInfinite(0.0, 0)
    with pytest.raises(DomainError):
        rule(QuadratureSpec("adaptive_simpson"))


def test_tensor_integrate():
    spec = QuadratureSpec("gauss_hermite", 10, scale=math.sqrt(2))
    norm = 1 / math.sqrt(2 * math.pi)
    g = lambda x: np.prod(norm * np.exp(-0.5 * x * x) * (1 + x), axis=-1)
    assert abs(tensor_integrate([spec] * 3, g) - 1.0) < 1e-12
    with pytest.raises(DimensionTooLarge):
        tensor_integrate([spec] * 5, g)
