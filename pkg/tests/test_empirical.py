import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from sklearn.base import clone

from ilrd import empirical as emp
from ilrd._validation import DomainError
from ilrd.density import PiecewiseDensity
from ilrd.empirical import EmpiricalProcessStatistic, NormalizationRule
from ilrd.maps import Orbit

U = emp.uniform_reference(0.75)


def orbit(values, gamma=0.75):
    return Orbit(gamma, np.asarray(values, dtype=float))


@pytest.mark.parametrize("x", [0.0, 0.3, 0.5, 1.0])
def test_single_point_closed_forms(x):
    # G(t) = 1{t >= x} - t
    ep = emp.empirical_process(orbit([x]), U)
    l2_sq, _ = integrate.quad(lambda t: ((t >= x) - t) ** 2, 0, 1, points=[x])
    w1, _ = integrate.quad(lambda t: abs((t >= x) - t), 0, 1, points=[x])
    assert emp.l2_norm(ep) == pytest.approx(math.sqrt(l2_sq), abs=1e-10)
    assert emp.wasserstein1(ep) == pytest.approx(w1, abs=1e-10)


def test_endpoint_closed_forms():
    for x in (0.0, 1.0):
        ep = emp.empirical_process(orbit([x]), U)
        assert emp.wasserstein1(ep) == pytest.approx(0.5, abs=1e-12)
    ep = emp.empirical_process(orbit([0.0]), U)
    assert emp.l2_norm(ep) == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-12)
    ep = emp.empirical_process(orbit([0.5]), U)
    assert emp.l2_norm(ep) == pytest.approx(1.0 / math.sqrt(12.0), abs=1e-12)
    assert emp.wasserstein1(ep) == pytest.approx(0.25, abs=1e-12)
    assert emp.cvm_statistic(orbit([0.5]), U) == pytest.approx(1.0 / 12.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 7, 100, 1000])
def test_stratified_points_are_close(n):
    x = (np.arange(n) + 0.5) / n
    ep = emp.empirical_process(orbit(x), U)
    assert ep.sup_norm() <= 1.0 / (2 * n) + 1e-12
    assert emp.wasserstein1(ep) <= 1.0 / (2 * n) + 1e-12
    assert emp.cvm_statistic(orbit(x), U) <= (1.0 / (2 * n)) ** 2 + 1e-12


def test_process_vanishes_at_one(d75):
    o = orbit(np.random.default_rng(0).random(50))
    assert emp.empirical_process(o, d75)(1.0) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
def test_norm_ordering(values):
    ep = emp.empirical_process(orbit(values), U)
    w1, l2, sup = emp.wasserstein1(ep), emp.l2_norm(ep), ep.sup_norm()
    assert w1 <= l2 + 1e-12
    assert l2 <= sup + 1e-12
    assert sup <= 1.0 + 1e-12


def test_exact_matches_quadrature(d75):
    o = orbit(np.random.default_rng(3).random(40))
    exact, quad = emp.l2_norm(emp.empirical_process(o, d75), with_quadrature=True)
    assert abs(exact - quad) <= 1e-3
    # a fine independent rule
    ep = emp.empirical_process(o, d75)
    t = (np.arange(2**20) + 0.5) / 2**20
    assert exact == pytest.approx(math.sqrt(np.mean(ep(t) ** 2)), abs=1e-5)
    assert emp.wasserstein1(ep) == pytest.approx(np.mean(np.abs(ep(t))), abs=1e-5)


def test_streaming_and_piecewise_paths_agree(d75):
    values = np.random.default_rng(4).random(500)
    l2, w1, cvm, sup = emp.raw_statistics(values, d75)
    ep = emp.empirical_process(orbit(values), d75)
    assert l2 == pytest.approx(emp.l2_norm(ep), rel=1e-10)
    assert w1 == pytest.approx(emp.wasserstein1(ep), rel=1e-10)
    assert sup == pytest.approx(ep.sup_norm(), rel=1e-10)
    assert cvm == pytest.approx(emp.cvm_statistic(orbit(values), d75), rel=1e-10)


def test_cvm_paths_agree(d75):
    o = orbit(np.random.default_rng(5).random(300))
    assert emp.cvm_statistic(o, d75) == pytest.approx(emp.cvm_direct(o, d75), rel=1e-9)


def test_cvm_rejects_flat_null_under_data():
    flat = PiecewiseDensity(0.75, np.array([0.0, 0.5, 1.0]), np.array([2.0, 0.0]), 0.0, 0.25)
    with pytest.raises(DomainError):
        emp.cvm_statistic(orbit([0.2, 0.7]), flat)
    assert emp.cvm_statistic(orbit([0.2, 0.3]), flat) >= 0


def test_gamma_mismatch_rejected(d75):
    with pytest.raises(DomainError):
        emp.empirical_process(orbit([0.1], gamma=0.6), d75)


def test_fourier_tail_edges_and_bound():
    assert emp.fourier_tail_norm_sq(0.0, 8, 1000) == 0.0
    assert emp.fourier_tail_norm_sq(1.0, 8, 1000) == pytest.approx(0.0, abs=1e-25)
    x = np.linspace(0, 1, 101)
    for m in (4, 16, 64):
        assert np.all(emp.fourier_tail_norm_sq(x, m, 4 * m) <= 2.0 / (math.pi**2 * m) + 1e-15)
    with pytest.raises(DomainError):
        emp.fourier_tail_norm_sq(0.5, 8, 8)


def _odd_tail(lo):
    """sum over odd k > lo of 2 / (pi k)^2, via the Hurwitz zeta function."""
    # odd k = 2j + 1 > lo  <=>  j >= (lo + 1) // 2 for even lo
    j0 = mpmath.mpf((lo + 1) // 2)
    return 2 / mpmath.pi**2 * mpmath.zeta(2, j0 + mpmath.mpf(1) / 2) / 4


def test_fourier_tail_at_half_matches_zeta():
    # at x = 1/2 only odd k contribute, each 2 / (pi k)^2
    mpmath.mp.dps = 30
    want = _odd_tail(8) - _odd_tail(10**5)
    assert emp.fourier_tail_norm_sq(0.5, 8, 10**5) == pytest.approx(float(want), abs=1e-13)


def test_fourier_tail_against_residual_quadrature():
    mpmath.mp.dps = 30
    m, k_max = 8, 10**5
    # the partial sum stops at k_max, quadrature sees the whole tail
    # residual of the projection of 1{t >= 1/2} onto frequencies <= 8
    k = np.arange(1, m + 1)
    a0 = 0.5

    def proj(t):
        s = np.sin(2 * np.pi * np.outer(k, 0.5)).ravel()
        c = np.cos(2 * np.pi * np.outer(k, 0.5)).ravel()
        ak = -s / (np.pi * k)
        bk = (c - 1.0) / (np.pi * k)
        return a0 + np.sum(ak * np.cos(2 * np.pi * k * t) + bk * np.sin(2 * np.pi * k * t))

    pts = np.linspace(0, 1, 17)
    resid = sum(integrate.quad(lambda t: ((t >= 0.5) - proj(t)) ** 2, a, b, limit=200)[0]
                for a, b in zip(pts[:-1], pts[1:]))
    beyond = float(_odd_tail(k_max))
    assert emp.fourier_tail_norm_sq(0.5, m, k_max) + beyond == pytest.approx(resid, abs=1e-6)
    assert emp.fourier_full_tail(0.5, m) == pytest.approx(resid, abs=1e-8)


def test_normalisation_rule():
    assert NormalizationRule(0.75).rate(10**4) == pytest.approx(10.0, rel=1e-12)
    n = round(math.exp(4))
    assert NormalizationRule(0.5).rate(n) == pytest.approx(math.sqrt(n / math.log(n)), rel=1e-12)
    assert NormalizationRule(0.5).descriptor() == "sqrt(n/log n)"
    with pytest.raises(DomainError):
        NormalizationRule(0.4)


def test_normalised_statistics(d75):
    o = orbit(np.random.default_rng(6).random(10**4))
    r = NormalizationRule(0.75).rate(10**4)
    assert emp.normalized_statistic(o, d75, "w1") == pytest.approx(r * emp.statistic(o, d75, "w1"))
    assert emp.normalized_statistic(o, d75, "cvm") == pytest.approx(r * r * emp.statistic(o, d75, "cvm"))
    with pytest.raises(DomainError):
        emp.normalized_statistic(orbit([0.1], gamma=0.3), emp.uniform_reference(0.3), "w1")
    with pytest.raises(DomainError):
        emp.statistic(o, d75, "ks")


def test_estimator(d75):
    X = np.random.default_rng(8).random((3, 200))
    est = EmpiricalProcessStatistic(density=d75, stat="l2")
    assert est.get_params()["stat"] == "l2"
    out = clone(est).fit().transform(X)
    assert out.shape == (3, 1)
    want = [emp.normalized_statistic(orbit(row), d75, "l2") for row in X]
    assert np.allclose(out[:, 0], want, rtol=1e-10)
    raw = EmpiricalProcessStatistic(density=d75, stat="w1", normalize=False).fit().transform(X)
    assert raw[0, 0] == pytest.approx(emp.statistic(orbit(X[0]), d75, "w1"), rel=1e-10)
    with pytest.raises(DomainError):
        EmpiricalProcessStatistic(density=None).fit()
