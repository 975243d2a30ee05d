import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anovaqmc.errors import ClassificationInconclusive, DomainError, ParseError
from anovaqmc.weights import (
    ConditionReport,
    Constant,
    ExpDecay,
    GaussianDecay,
    GaussianStd,
    Logistic,
    WeightPair,
    analytic_classification,
    cdf,
    check_conditions,
    classify_numerically,
    compute_C,
    inv_cdf,
    parse_psi,
    parse_rho,
)

mp.mp.dps = 30


def _mp_C_gaussian(log_psi) -> float:
    # symmetric integrand 2 Phi(x) Phi(-x) / psi(x) on [0, inf)
    f = lambda x: 2 * mp.ncdf(x) * mp.ncdf(-x) * mp.exp(-log_psi(x))
    return float(mp.quad(f, mp.linspace(0, 60, 61) + [mp.inf]))


def _series_C_logistic_exp(alpha: float) -> float:
    # 2 int_0^inf e^{-beta x} / (1 + e^{-x})^2 dx = 2 sum_k (-1)^k (k + 1) / (k + beta), beta = 1 - 1/alpha
    beta = 1 - 1 / mp.mpf(alpha)
    return float(2 * mp.nsum(lambda k: (-1) ** k * (k + 1) / (k + beta), [0, mp.inf]))


# -- densities --------------------------------------------------------------


@given(st.floats(-30, 30))
def test_gaussian_logs_match_scipy(x):
    from scipy import stats

    g = GaussianStd()
    assert math.isclose(g.logpdf(x), stats.norm.logpdf(x), rel_tol=1e-13, abs_tol=1e-13)
    assert math.isclose(g.log_cdf(x), stats.norm.logcdf(x), rel_tol=1e-12, abs_tol=1e-300)
    assert math.isclose(g.log_sf(x), stats.norm.logsf(x), rel_tol=1e-12, abs_tol=1e-300)


@given(st.floats(-50, 50))
def test_logistic_logs_are_stable(x):
    lg = Logistic()
    ref_cdf = mp.log(1 / (1 + mp.exp(-mp.mpf(x))))
    ref_sf = mp.log(1 / (1 + mp.exp(mp.mpf(x))))
    assert math.isclose(lg.log_cdf(x), float(ref_cdf), rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(lg.log_sf(x), float(ref_sf), rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(lg.pdf(x), float(mp.exp(ref_cdf + ref_sf)), rel_tol=1e-12, abs_tol=1e-300)


@pytest.mark.parametrize("rho", [GaussianStd(), Logistic()])
@given(p=st.floats(1e-12, 1 - 1e-12))
def test_inverse_cdf_roundtrip(rho, p):
    pair = WeightPair(rho, Constant())
    x = inv_cdf(pair, p)
    assert math.isclose(cdf(pair, x), p, rel_tol=1e-9, abs_tol=1e-15)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_inverse_cdf_domain(p):
    with pytest.raises(DomainError):
        inv_cdf(WeightPair(), p)


def test_inverse_cdf_is_scalar_for_scalar():
    assert isinstance(inv_cdf(WeightPair(), 0.3), float)
    assert inv_cdf(WeightPair(), [0.3, 0.7]).shape == (2,)


@pytest.mark.parametrize("bad", [lambda: GaussianDecay(0.0), lambda: ExpDecay(-1.0), lambda: Constant(0.0)])
def test_psi_parameters_must_be_positive(bad):
    with pytest.raises(DomainError):
        bad()


def test_psi_values():
    assert math.isclose(GaussianDecay(2.0)(2.0), math.exp(-1.0))
    assert math.isclose(ExpDecay(2.0)(-4.0), math.exp(-2.0))
    assert Constant(3.0)(np.zeros(4)).tolist() == [3.0] * 4
    assert math.isclose(GaussianDecay(4.0).total_mass(), math.sqrt(8 * math.pi))


def test_rules_integrate_moments():
    pair = WeightPair(GaussianStd(), GaussianDecay(4.0))
    x, w = pair.rho_rule()
    assert math.isclose(w.sum(), 1.0, rel_tol=1e-13)
    assert math.isclose(np.dot(w, x * x), 1.0, rel_tol=1e-12)
    x, w = pair.psi_rule()
    assert math.isclose(w.sum(), math.sqrt(8 * math.pi), rel_tol=1e-13)
    lg = WeightPair(Logistic(), ExpDecay(1.0))
    x, w = lg.rho_rule()
    assert math.isclose(np.dot(w, x * x), math.pi ** 2 / 3, rel_tol=1e-10)
    x, w = lg.psi_rule()
    assert math.isclose(w.sum(), 2.0, rel_tol=1e-10)


# -- classification ---------------------------------------------------------


@pytest.mark.parametrize("alpha, weak, strong", [
    (0.4, False, False), (0.5, True, False), (0.9, True, False),
    (1.0, True, False), (1.1, True, True), (4.0, True, True),
])
def test_gaussian_decay_thresholds(alpha, weak, strong):
    rep = check_conditions(WeightPair(GaussianStd(), GaussianDecay(alpha)))
    assert (rep.weak_holds, rep.strong_holds) == (weak, strong)
    assert (rep.c_constant is not None) == strong


@pytest.mark.parametrize("alpha", [0.4, 0.5, 0.9, 1.1, 4.0])
def test_numeric_agrees_with_analytic(alpha):
    pair = WeightPair(GaussianStd(), GaussianDecay(alpha))
    num = classify_numerically(pair)
    assert (num.weak_holds, num.strong_holds) == analytic_classification(pair)
    assert num.method == "numeric"


def test_boundary_is_inconclusive_not_strong():
    pair = WeightPair(GaussianStd(), GaussianDecay(1.0))
    with pytest.raises(ClassificationInconclusive) as info:
        classify_numerically(pair)
    rep = info.value.report
    assert not rep.strong_holds
    assert "strong" in rep.undecided


@pytest.mark.parametrize("rho, psi, weak, strong", [
    (Logistic(), ExpDecay(0.5), False, False),
    (Logistic(), ExpDecay(0.75), True, False),
    (Logistic(), ExpDecay(2.0), True, True),
    (Logistic(), GaussianDecay(10.0), False, False),
    (Logistic(), Constant(2.0), True, True),
    (GaussianStd(), ExpDecay(0.3), True, True),
    (GaussianStd(), Constant(1.0), True, True),
])
def test_other_families(rho, psi, weak, strong):
    pair = WeightPair(rho, psi)
    rep = check_conditions(pair)
    assert (rep.weak_holds, rep.strong_holds) == (weak, strong)
    num = check_conditions(pair, method="numeric")
    assert (num.weak_holds, num.strong_holds) == (weak, strong)


@given(st.floats(0.05, 20.0))
def test_strong_implies_weak(alpha):
    for pair in (WeightPair(GaussianStd(), GaussianDecay(alpha)), WeightPair(Logistic(), ExpDecay(alpha))):
        weak, strong = analytic_classification(pair)
        assert weak or not strong


def test_report_invariants():
    with pytest.raises(ValueError):
        ConditionReport(weak_holds=False, strong_holds=True, c_constant=1.0)
    with pytest.raises(ValueError):
        ConditionReport(weak_holds=True, strong_holds=True, c_constant=None)
    with pytest.raises(ValueError):
        ConditionReport(weak_holds=True, strong_holds=False, c_constant=1.0)


def test_diagnostics_profiles():
    rep = check_conditions(WeightPair(GaussianStd(), GaussianDecay(0.9)))
    prof = rep.diagnostics["strong_right"]
    radii = [r for r, _ in prof]
    assert radii == sorted(radii)


def test_unknown_method():
    with pytest.raises(DomainError):
        check_conditions(WeightPair(), method="guess")


# -- the constant C ----------------------------------------------------------


def test_logistic_constant_is_one():
    assert abs(compute_C(WeightPair(Logistic(), Constant(1.0))) - 1.0) < 1e-12


def test_gaussian_constant_gini():
    # int Phi (1 - Phi) = E|X - Y| / 2 for iid standard normals = 1/sqrt(pi)
    assert abs(compute_C(WeightPair(GaussianStd(), Constant(1.0))) - 1 / math.sqrt(math.pi)) < 1e-12


@pytest.mark.parametrize("c", [0.5, 2.0, 7.0])
def test_constant_scales_inversely(c):
    base = compute_C(WeightPair(GaussianStd(), Constant(1.0)))
    assert math.isclose(compute_C(WeightPair(GaussianStd(), Constant(c))), base / c, rel_tol=1e-12)


@pytest.mark.parametrize("psi", [GaussianDecay(4.0), GaussianDecay(1.1), ExpDecay(1.0)])
def test_gaussian_constant_against_mpmath(psi):
    if isinstance(psi, GaussianDecay):
        log_psi = lambda x: -x * x / (2 * psi.alpha)
    else:
        log_psi = lambda x: -abs(x) / psi.alpha
    val = compute_C(WeightPair(GaussianStd(), psi))
    assert math.isclose(val, _mp_C_gaussian(log_psi), rel_tol=1e-10)


@pytest.mark.parametrize("alpha", [1.2, 2.0, 5.0])
def test_logistic_constant_against_series(alpha):
    val = compute_C(WeightPair(Logistic(), ExpDecay(alpha)))
    assert math.isclose(val, _series_C_logistic_exp(alpha), rel_tol=1e-10)


# -- parsing -----------------------------------------------------------------


def test_parse_roundtrip():
    assert parse_psi("gaussian_decay:alpha=4.0") == GaussianDecay(4.0)
    assert parse_psi("exp_decay:alpha=2") == ExpDecay(2.0)
    assert parse_psi("constant:c=3") == Constant(3.0)
    assert parse_psi("constant") == Constant(1.0)
    assert isinstance(parse_rho("logistic"), Logistic)
    for psi in (GaussianDecay(0.75), ExpDecay(3.0), Constant(2.5)):
        assert parse_psi(psi.describe()) == psi


@pytest.mark.parametrize("text", ["gauss", "gaussian_decay", "gaussian_decay:alpha=x", "exp_decay:alpha=-1",
                                  "gaussian_decay:alpha"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_psi(text)


def test_parse_rho_error():
    with pytest.raises(ParseError):
        parse_rho("cauchy")
