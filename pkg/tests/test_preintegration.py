import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from anovaqmc.errors import DomainError, MonotonicityViolated, NonFiniteSample
from anovaqmc.lattice import qmc_estimate, search_korobov
from anovaqmc.preintegration import (
    KinkIntegrand,
    KinkKind,
    PreintegratedFunction,
    find_kink,
    find_kinks,
    preintegrate_eval,
    preintegrated_integrand,
)


def _linear(coefs, shift=0.0, certificate="probed"):
    c = np.asarray(coefs, dtype=float)
    return KinkIntegrand(lambda x: x @ c + shift, lambda x: np.full(x.shape[:-1], c[0]), len(c), certificate)


def _closed_form(c, shift, x_rest):
    # E_{x_1} max(c_1 x_1 + b, 0) = c_1 pdf(b / c_1) + b Phi(b / c_1)
    b = np.asarray(x_rest) @ np.asarray(c[1:]) + shift
    s = c[0]
    return s * np.exp(-0.5 * (b / s) ** 2) / math.sqrt(2 * math.pi) + b * special.ndtr(b / s)


@given(st.floats(-6, 6))
def test_sum_of_two_normals(x2):
    pf = PreintegratedFunction(_linear([1.0, 1.0]))
    ref = math.exp(-0.5 * x2 * x2) / math.sqrt(2 * math.pi) + x2 * special.ndtr(x2)
    assert abs(preintegrate_eval(pf, [x2]) - ref) < 1e-10


@given(st.floats(0.2, 3.0), st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.floats(-2, 2))
def test_linear_closed_form(c1, rest, shift):
    c = [c1, 0.7, -0.4]
    pf = PreintegratedFunction(_linear(c, shift))
    assert abs(preintegrate_eval(pf, rest) - _closed_form(c, shift, rest)) < 1e-10 * max(1.0, abs(shift))


def test_batch_matches_pointwise():
    pf = PreintegratedFunction(_linear([1.0, 0.5, 0.25]))
    pts = np.random.default_rng(0).normal(size=(9, 2))
    batch = preintegrate_eval(pf, pts)
    assert batch.shape == (9,)
    for p, v in zip(pts, batch):
        assert preintegrate_eval(pf, p) == pytest.approx(v, abs=1e-15)
    g = preintegrated_integrand(pf)
    assert g(pts.reshape(3, 3, 2)).shape == (3, 3)


def test_kink_location():
    ki = KinkIntegrand(lambda x: np.exp(x[..., 0]) - 5.0, lambda x: np.exp(x[..., 0]), 1)
    loc = find_kink(ki, [])
    assert loc.kind is KinkKind.ROOT
    assert abs(loc.root - math.log(5.0)) < 1e-12


@given(st.floats(-30, 30))
def test_root_property(target):
    ki = KinkIntegrand(lambda x: x[..., 0] ** 3 + x[..., 0] - target,
                       lambda x: 3 * x[..., 0] ** 2 + 1, 1, "asserted")
    loc = find_kink(ki, [])
    assert abs(loc.root ** 3 + loc.root - target) <= 1e-12 * max(1.0, abs(target)) + 1e-12


def test_no_root_cases():
    pos = KinkIntegrand(lambda x: np.exp(x[..., 0]) + 1.0, lambda x: np.exp(x[..., 0]), 1)
    assert find_kink(pos, []).kind is KinkKind.ALL_POSITIVE
    neg = KinkIntegrand(lambda x: -np.exp(-x[..., 0]), lambda x: np.exp(-x[..., 0]), 1)
    assert find_kink(neg, []).kind is KinkKind.ALL_NEGATIVE
    # all-positive: the full expectation of phi; all-negative: zero
    assert abs(preintegrate_eval(PreintegratedFunction(pos), []) - (math.exp(0.5) + 1.0)) < 1e-10
    assert preintegrate_eval(PreintegratedFunction(neg), []) == 0.0


def test_far_root_widens_bracket():
    kind, root = find_kinks(_linear([1.0, 1.0]), np.array([[-25.0], [30.0]]))
    assert kind.tolist() == [0, 0]
    np.testing.assert_allclose(root, [25.0, -30.0], atol=1e-12)


def test_one_dimensional_value():
    pf = PreintegratedFunction(_linear([1.0]))
    assert abs(preintegrate_eval(pf, []) - 1 / math.sqrt(2 * math.pi)) < 1e-13


def test_monotonicity_probe():
    bad = KinkIntegrand(lambda x: -x[..., 0], lambda x: -np.ones(x.shape[:-1]), 2)
    with pytest.raises(MonotonicityViolated):
        preintegrate_eval(PreintegratedFunction(bad), [[0.0]])
    # without probing the bracket check still catches a decreasing phi
    asserted = KinkIntegrand(lambda x: -x[..., 0], lambda x: -np.ones(x.shape[:-1]), 2, "asserted")
    with pytest.raises(MonotonicityViolated):
        preintegrate_eval(PreintegratedFunction(asserted), [[0.0]])


def test_nonfinite_phi():
    ki = KinkIntegrand(lambda x: np.where(x[..., 0] > 3, np.nan, x[..., 0]), lambda x: np.ones(x.shape[:-1]), 1)
    with pytest.raises(NonFiniteSample):
        preintegrate_eval(PreintegratedFunction(ki), [])


def test_parameter_validation():
    with pytest.raises(DomainError):
        KinkIntegrand(lambda x: x, lambda x: x, 0)
    with pytest.raises(DomainError):
        KinkIntegrand(lambda x: x, lambda x: x, 1, "trusted")
    with pytest.raises(DomainError):
        PreintegratedFunction(_linear([1.0]), inner_order=1)
    with pytest.raises(DomainError):
        PreintegratedFunction(_linear([1.0]), root_tol=0.0)


def test_qmc_on_preintegrated():
    pf = PreintegratedFunction(_linear([1.0, 1.0]))
    run = qmc_estimate(preintegrated_integrand(pf), search_korobov(1024, 1), m=16, seed=4)
    assert abs(run.mean - 1 / math.sqrt(math.pi)) < 3 * run.rms_error + 1e-12
