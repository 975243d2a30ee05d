import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import special

from anovaqmc.errors import ConditionViolated, DimensionMismatch, DimensionTooLarge, DomainError, KinkUndefined
from anovaqmc.kernel import (
    KernelContext,
    WeightParams,
    embed_constant_1d,
    embed_constant_d,
    eta,
    eta_dx,
    kernel_d,
    subsets,
)
from anovaqmc.weights import Constant, ExpDecay, GaussianDecay, GaussianStd, Logistic, WeightPair

STRONG = WeightPair(GaussianStd(), GaussianDecay(4.0))
WEAK_ONLY = WeightPair(GaussianStd(), GaussianDecay(2.0 / 3.0))
LOGISTIC = WeightPair(Logistic(), ExpDecay(2.0))
PAIRS = [STRONG, WEAK_ONLY, LOGISTIC, WeightPair(GaussianStd(), Constant(1.0))]

coord = st.floats(-4.0, 4.0, allow_nan=False)


def _ctx(pair, gammas=(1.0,)):
    return KernelContext.build(pair, list(gammas))


def _eta_direct(pair, x, y):
    """eta(x, y) = int (1{t > x} - Phi) (1{t > y} - Phi) / psi dt by adaptive quadrature."""
    rho, lp = pair.rho, pair.log_psi

    def piece(sign_x, sign_y, log_a, log_b):
        return lambda t: sign_x * sign_y * math.exp(float(log_a(t) + log_b(t) - lp(t)))

    lo, hi = min(x, y), max(x, y)
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
    # t < lo: both factors are -Phi; lo < t < hi: (1 - Phi)(-Phi); t > hi: both 1 - Phi
    a = sp_integrate.quad(piece(1, 1, rho.log_cdf, rho.log_cdf), -np.inf, lo, **opts)[0]
    m = sp_integrate.quad(piece(1, -1, rho.log_sf, rho.log_cdf), lo, hi, **opts)[0] if hi > lo else 0.0
    b = sp_integrate.quad(piece(1, 1, rho.log_sf, rho.log_sf), hi, np.inf, **opts)[0]
    return a + m + b


@pytest.mark.parametrize("pair", PAIRS, ids=lambda p: p.describe())
@pytest.mark.parametrize("x, y", [(-1.0, 0.5), (0.0, 0.0), (2.5, -3.0), (1.2, 1.2)])
def test_eta_matches_direct_quadrature(pair, x, y):
    ref = _eta_direct(pair, x, y)
    assert math.isclose(eta(_ctx(pair), 0, x, y), ref, rel_tol=1e-9, abs_tol=1e-11)


@pytest.mark.parametrize("pair", [STRONG, LOGISTIC], ids=lambda p: p.describe())
@given(x=coord, y=coord)
def test_all_forms_agree(pair, x, y):
    ctx = _ctx(pair)
    ref = eta(ctx, 0, x, y)
    scale = max(1.0, abs(ref))
    for form in ("max", "min", "strong"):
        assert abs(eta(ctx, 0, x, y, form) - ref) <= 1e-10 * scale


@given(x=coord, y=coord)
def test_weak_only_forms_agree(x, y):
    ctx = _ctx(WEAK_ONLY)
    ref = eta(ctx, 0, x, y)
    for form in ("max", "min"):
        assert abs(eta(ctx, 0, x, y, form) - ref) <= 1e-9 * max(1.0, abs(ref))
    with pytest.raises(ConditionViolated):
        eta(ctx, 0, x, y, "strong")


@given(x=coord, y=coord)
def test_symmetry(x, y):
    ctx = _ctx(STRONG)
    assert eta(ctx, 0, x, y) == pytest.approx(eta(ctx, 0, y, x), rel=1e-13, abs=1e-14)


@pytest.mark.parametrize("pair", PAIRS, ids=lambda p: p.describe())
def test_antiderivatives_against_scipy(pair):
    table = _ctx(pair).table(0)
    rho, lp = pair.rho, pair.log_psi
    for x in (-6.0, -1.3, 0.0, 0.7, 5.0):
        a = sp_integrate.quad(lambda t: math.exp(2 * rho.log_cdf(t) - lp(t)), -np.inf, x, epsabs=1e-14, limit=200)[0]
        b = sp_integrate.quad(lambda t: math.exp(2 * rho.log_sf(t) - lp(t)), x, np.inf, epsabs=1e-14, limit=200)[0]
        assert math.isclose(float(table.A(x)), a, rel_tol=1e-10, abs_tol=1e-13)
        assert math.isclose(float(table.B(x)), b, rel_tol=1e-10, abs_tol=1e-13)


def test_far_queries_stay_finite():
    table = _ctx(STRONG).table(0)
    vals = table.eta(np.array([-60.0, 60.0, 45.0]), np.array([0.0, 0.0, 50.0]))
    assert np.all(np.isfinite(vals))


@pytest.mark.parametrize("pair", PAIRS, ids=lambda p: p.describe())
def test_annihilation(pair):
    ctx = _ctx(pair)
    for y in (-2.0, -0.3, 0.0, 1.7):
        x, w = pair.split_rule("rho", y)
        assert abs(np.dot(w, ctx.table(0).eta(x, y))) < 1e-9


@pytest.mark.parametrize("pair", [STRONG, LOGISTIC, WeightPair(Logistic(), Constant(1.0))],
                         ids=lambda p: p.describe())
def test_diagonal_integrates_to_C(pair):
    ctx = _ctx(pair)
    x, w = pair.split_rule("rho", 0.0, width=0.25, order=16)
    assert abs(np.dot(w, ctx.table(0).eta(x, x)) - ctx.c_constants()[0]) < 1e-9


def test_eta_dx():
    ctx = _ctx(STRONG)
    x, y, h = 0.4, -0.2, 1e-6
    fd = (eta(ctx, 0, x + h, y) - eta(ctx, 0, x - h, y)) / (2 * h)
    assert abs(eta_dx(ctx, 0, x, y) - fd) < 1e-7
    # the closed form is (Phi - 1{x > y}) / psi
    assert math.isclose(eta_dx(ctx, 0, x, y), (special.ndtr(x) - 1) / STRONG.psi_value(x), rel_tol=1e-13)
    with pytest.raises(KinkUndefined):
        eta_dx(ctx, 0, 0.3, 0.3)


def test_weak_failure_blocks_kernel():
    ctx = _ctx(WeightPair(GaussianStd(), GaussianDecay(0.4)))
    with pytest.raises(ConditionViolated):
        eta(ctx, 0, 0.0, 1.0)


# -- d-dimensional kernel -----------------------------------------------------


pts3 = st.lists(st.floats(-3, 3), min_size=3, max_size=3)


@given(x=pts3, y=pts3)
def test_product_equals_subsets(x, y):
    ctx = KernelContext.build([STRONG, LOGISTIC, STRONG], [0.5, 2.0, 1.0])
    a = kernel_d(ctx, np.array(x), np.array(y))
    b = kernel_d(ctx, np.array(x), np.array(y), method="subsets")
    assert abs(a - b) <= 1e-13 * max(1.0, abs(a))


def test_explicit_weights_kernel():
    w = WeightParams.from_explicit(2, {0: 1.0, 1: 0.3, 2: 0.5, 3: 0.05})
    ctx = KernelContext((STRONG, STRONG), w)
    x, y = np.array([0.2, -1.0]), np.array([1.0, 0.4])
    e1, e2 = eta(ctx, 0, x[0], y[0]), eta(ctx, 1, x[1], y[1])
    assert math.isclose(kernel_d(ctx, x, y), 1 + 0.3 * e1 + 0.5 * e2 + 0.05 * e1 * e2, rel_tol=1e-14)
    with pytest.raises(DomainError):
        kernel_d(ctx, x, y, method="product")


@given(st.lists(pts3, min_size=2, max_size=6, unique_by=tuple))
def test_kernel_gram_is_psd(points):
    ctx = KernelContext.build(STRONG, [1.0, 0.5, 0.25])
    p = np.array(points)
    gram = kernel_d(ctx, p[:, None, :], p[None, :, :])
    assert np.allclose(gram, gram.T, atol=1e-12)
    assert np.linalg.eigvalsh(gram).min() >= -1e-9 * np.abs(gram).max()


def test_dimension_checks():
    ctx = KernelContext.build(STRONG, [1.0, 1.0])
    with pytest.raises(DimensionMismatch):
        kernel_d(ctx, np.zeros(3), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        KernelContext((STRONG,), WeightParams.from_product([1.0, 1.0]))


# -- weights and equivalence constants -------------------------------------


def test_subsets_enumeration():
    assert sorted(subsets(0b101)) == [0, 1, 4, 5]
    assert list(subsets(0)) == [0]


def test_weight_validation():
    with pytest.raises(DomainError):
        WeightParams.from_product([1.0, 0.0])
    with pytest.raises(DomainError):
        WeightParams.from_explicit(2, {4: 1.0})
    with pytest.raises(DimensionTooLarge):
        WeightParams.from_explicit(21, {0: 1.0})
    with pytest.raises(DomainError):
        WeightParams.from_explicit(2, {0: 1.0}).gamma(3)
    w = WeightParams.from_product([0.5, 2.0]).to_explicit()
    assert w.gamma(3) == 1.0 and w.gamma(1) == 0.5


def test_embed_1d():
    assert embed_constant_1d(0.5, 2.0) == 2.0
    with pytest.raises(DomainError):
        embed_constant_1d(-1.0, 1.0)


@given(st.lists(st.tuples(st.floats(0.01, 10), st.floats(0.01, 10)), min_size=1, max_size=6))
def test_embed_product_formula(gc):
    gam, c = zip(*gc)
    w = WeightParams.from_product(list(gam))
    expected = math.prod(1 + g * cj for g, cj in gc)
    assert abs(embed_constant_d(w, list(c)) - expected) <= 1e-12 * expected
    # the general max-over-subsets definition reduces to the product
    assert abs(embed_constant_d(w, list(c), method="subsets") - expected) <= 1e-12 * expected
    if len(gc) <= 4:
        assert abs(embed_constant_d(w, list(c), method="brute") - expected) <= 1e-12 * expected


@given(st.integers(1, 4), st.data())
def test_embed_subsets_matches_brute(d, data):
    table = {m: data.draw(st.floats(0.01, 10)) for m in range(1 << d)}
    c = data.draw(st.lists(st.floats(0.01, 5), min_size=d, max_size=d))
    w = WeightParams.from_explicit(d, table)
    fast, slow = embed_constant_d(w, c), embed_constant_d(w, c, method="brute")
    assert abs(fast - slow) <= 1e-12 * slow


def test_embed_explicit_small_weights_limit():
    # gamma_empty = 1, every other gamma_u = eps: the v = {1, 2} term tends to 1 + C_1 + C_2
    c = [0.7, 1.3]
    for eps in (1e-4, 1e-8):
        w = WeightParams.from_explicit(2, {0: 1.0, 1: eps, 2: eps, 3: eps})
        assert abs(embed_constant_d(w, c) - (1 + c[0] + c[1])) < 10 * eps


def test_embed_needs_strong_condition():
    with pytest.raises(ConditionViolated):
        embed_constant_d(WeightParams.from_product([1.0]), [None])
    with pytest.raises(ConditionViolated):
        embed_constant_d(WeightParams.from_product([1.0]), [math.inf])
    with pytest.raises(DimensionTooLarge):
        embed_constant_d(WeightParams.from_explicit(1, {0: 1.0, 1: 1.0}).__class__(
            d=21, product=tuple([1.0] * 21)), [1.0] * 21, method="subsets")
