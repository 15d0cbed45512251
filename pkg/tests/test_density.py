import numpy as np
import pytest
from sklearn.base import clone

from ilrd import density as dens, maps
from ilrd._validation import ConvergenceError, DomainError
from ilrd.density import PiecewiseDensity, UlamDensityEstimator


@pytest.fixture(scope="module")
def ulam10():
    return dens.build_ulam_matrix(0.75, 2**10)


def test_rows_are_stochastic(ulam10):
    P = ulam10.P
    assert ulam10.row_error <= 1e-12
    assert P.data.min() >= 0
    # every bin is reached from somewhere
    assert np.all(np.asarray((P > 0).sum(axis=0)).ravel() > 0)


def test_lebesgue_rows_are_stochastic():
    assert dens.build_ulam_matrix(0.5, 256, weight=dens.LEBESGUE).row_error <= 1e-12


def test_bin_count_validation():
    with pytest.raises(DomainError):
        dens.build_ulam_matrix(0.5, 8)
    with pytest.raises(DomainError):
        dens.build_ulam_matrix(0.5, 100)
    with pytest.raises(DomainError):
        dens.build_ulam_matrix(0.5, 64, weight="counting")


def test_density_is_normalised(d75):
    mass = np.sum(d75.h_values * np.diff(d75.bin_edges))
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert d75.cdf(0.0) == 0.0 and d75.cdf(1.0) == 1.0


def test_stationarity_residual_is_small():
    ulam = dens.build_ulam_matrix(0.6, 2**12)
    d = dens.stationary_density(ulam, tol=1e-12)
    assert dens.stationarity_residual(ulam, d) <= 1e-11


def test_solvers_agree():
    ulam = dens.build_ulam_matrix(0.5, 256)
    gs = dens.stationary_density(ulam, tol=1e-13)
    pw = dens.stationary_density(ulam, tol=1e-13, method="power")
    # compare masses: pointwise values near 0 follow x^-gamma and are huge
    assert np.abs(dens.bin_masses(gs, 256) - dens.bin_masses(pw, 256)).sum() < 1e-10


def test_iteration_cap_is_reported():
    ulam = dens.build_ulam_matrix(0.9, 2**10)
    with pytest.raises(ConvergenceError):
        dens.stationary_density(ulam, method="power", max_iter=3)
    with pytest.raises(DomainError):
        dens.stationary_density(ulam, method="lu")


@pytest.mark.parametrize("gamma", [0.5, 0.6, 0.75, 0.9])
def test_shape(gamma):
    d = dens.ulam_density(gamma, 2**16)
    rep = dens.shape_report(d)
    assert rep["non_increasing"]
    assert rep["last_positive"]
    assert rep["xgamma_bounded"]


def test_half_value_stable_under_refinement():
    a = dens.ulam_density(0.75, 2**16).h_half
    b = dens.ulam_density(0.75, 2**17).h_half
    assert abs(a - b) / b < 0.02


@pytest.mark.parametrize("gamma", [0.5, 0.6, 0.75, 0.9])
def test_mean_matches_long_orbit(gamma):
    d = dens.ulam_density(gamma, 2**16)
    orbit = maps.generate_orbit(gamma, 10**7, seed=7)
    hist = dens.histogram_density(orbit, 2**16)
    assert abs(d.mean_x - hist.mean_x) / hist.mean_x <= 0.01


def test_cdf_and_quantile(d75):
    assert d75.quantile(0.0) == 0.0
    assert d75.quantile(1.0) == 1.0
    t = np.linspace(0, 1, 1001)
    assert np.all(np.diff(d75.cdf(t)) >= 0)
    # beyond the first bin the CDF is strictly increasing, so the round trip is exact
    p = np.linspace(d75.cdf(2.0**-14), 1.0, 2000)
    assert np.max(np.abs(d75.cdf(d75.quantile(p)) - p)) <= 1e-10
    with pytest.raises(DomainError):
        d75.cdf(1.2)


def test_pdf_follows_the_singularity(d75):
    x = np.array([1e-6, 1e-5, 1e-4])
    ratio = d75.pdf(x) * x**0.75
    assert np.max(ratio) / np.min(ratio) < 1.1
    assert d75.pdf(0.7) == pytest.approx(np.interp(0.7, d75.midpoints, d75.h_values), rel=0.02)


def test_observable_identity(d75):
    assert dens.holder_observable_cdf(d75, maps.ObservableG()) is d75


def test_observable_own_cdf_gives_uniform(d75):
    g = maps.ObservableG("cdf-of-nu", density=d75)
    push = dens.holder_observable_cdf(d75, g)
    t = np.linspace(0, 1, 513)
    assert np.max(np.abs(push.cdf(t) - t)) <= 1e-8


def test_observable_square(d75):
    g = maps.ObservableG.from_function(lambda x: x**2)
    push = dens.holder_observable_cdf(d75, g)
    assert push.cdf(0.25) == pytest.approx(d75.cdf(0.5), abs=1e-6)


def test_observable_decreasing(d75):
    g = maps.ObservableG.from_function(lambda x: 1.0 - x)
    push = dens.holder_observable_cdf(d75, g)
    assert push.cdf(0.3) == pytest.approx(1.0 - d75.cdf(0.7), abs=1e-6)


def test_density_validation():
    with pytest.raises(DomainError):
        PiecewiseDensity(0.5, np.array([0.0, 0.5, 1.0]), np.array([1.0, 2.0]), 1.0, 0.5)
    with pytest.raises(DomainError):
        PiecewiseDensity(0.5, np.array([0.0, 1.0]), np.array([-1.0]), 1.0, 0.5)
    with pytest.raises(DomainError):
        PiecewiseDensity(0.5, np.array([0.1, 1.0]), np.array([1.0]), 1.0, 0.5)


def test_json_round_trip(tmp_path, d75):
    path = tmp_path / "d.json"
    d75.to_json(path)
    back = PiecewiseDensity.from_json(path)
    assert np.array_equal(back.h_values, d75.h_values)
    assert np.array_equal(back.bin_edges, d75.bin_edges)
    assert (back.h_half, back.mean_x, back.source) == (d75.h_half, d75.mean_x, d75.source)


def test_csv_layout(d50):
    lines = d50.to_csv().splitlines()
    assert lines[0] == "midpoint,h"
    assert len(lines) == d50.m_bins + 1


def test_histogram_needs_orbit():
    with pytest.raises(DomainError):
        dens.histogram_density(np.array([0.1, 0.2]), 16)


def test_estimator_api():
    est = UlamDensityEstimator(gamma=0.6, n_bins=2**10)
    assert est.get_params()["n_bins"] == 2**10
    est.set_params(gamma=0.5)
    fitted = clone(est).fit()
    p = np.array([0.1, 0.5, 0.9])
    u = fitted.transform(fitted.inverse_transform(p))
    assert np.allclose(u, p, atol=1e-10)
    assert fitted.h_half_ == fitted.density_.h_half


def test_estimator_from_orbit():
    orbit = maps.generate_orbit(0.5, 10**5, seed=1)
    est = UlamDensityEstimator(gamma=0.5, n_bins=64).fit(orbit.values)
    assert est.density_.source == dens.HISTOGRAM
    assert est.mean_x_ == pytest.approx(np.mean(orbit.values), abs=1.0 / 64)


def test_observable_flat_piece_rejected(d75):
    g = maps.ObservableG("user-piecewise-monotone", [0.0, 0.2, 0.4, 1.0], [0.0, 0.3, 0.3, 1.0])
    with pytest.raises(DomainError):
        dens.holder_observable_cdf(d75, g)
