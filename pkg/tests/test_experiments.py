import numpy as np
import pytest

from ilrd import experiments as ex, maps
from ilrd._validation import DomainError, InsufficientSignalError


def test_ks_two_sample_examples():
    assert ex.ks_two_sample([1, 2, 3], [1, 2, 3]) == 0.0
    assert ex.ks_two_sample([1, 2, 3], [4, 5]) == 1.0
    assert ex.ks_two_sample([1, 2, 3], [1.5, 2.5]) == pytest.approx(1.0 / 3.0)
    with pytest.raises(DomainError):
        ex.ks_two_sample([], [1.0])


def test_monte_carlo_is_deterministic(d75):
    a = ex.monte_carlo_limit(0.75, 1000, 100, "w1", 3, density=d75)
    b = ex.monte_carlo_limit(0.75, 1000, 100, "w1", 3, density=d75, threads=4)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.R == 100 and a.normalization == "n^0.25"
    rows = list(a.rows())
    assert rows[5][0] == 5 and rows[5][4] == "w1"


def test_monte_carlo_validation(d75):
    with pytest.raises(DomainError):
        ex.monte_carlo_limit(0.75, 1000, 99, "w1", 3, density=d75)
    with pytest.raises(DomainError):
        ex.monte_carlo_limit(0.4, 1000, 100, "w1", 3, density=d75)


def test_all_statistics_share_orbits(d75):
    out = ex.monte_carlo_limits(0.75, 500, 100, 1, density=d75)
    r = out["l2"].values / out["l2"].raw
    assert np.all(out["w1"].raw <= out["l2"].raw * (1 + 1e-9))
    assert np.allclose(out["cvm"].values, r**2 * out["cvm"].raw)


def test_median_is_scale_stable(d75):
    small = ex.monte_carlo_limit(0.75, 1000, 200, "w1", 5, density=d75)
    large = ex.monte_carlo_limit(0.75, 16000, 200, "w1", 5, density=d75)
    ratio = np.median(large.values) / np.median(small.values)
    assert 0.5 <= ratio <= 2.0


def test_covariance_at_lag_zero_is_variance():
    lags = np.array([0, 10, 20, 40, 80, 160, 320])
    fit = ex.covariance_decay(0.75, lags=lags, N=10**7, seed=2)
    orbit = maps.generate_orbit(0.75, 10**7, seed=2)
    assert fit.rho[0] == pytest.approx(np.var(orbit.values), rel=1e-9)
    assert fit.slope < 0


def test_covariance_needs_signal():
    with pytest.raises(InsufficientSignalError):
        ex.covariance_decay(0.05, lags=np.arange(200, 1000, 100), N=10**7, seed=1)


def test_covariance_validation():
    with pytest.raises(DomainError):
        ex.covariance_decay(0.75, N=10**6)
    with pytest.raises(DomainError):
        ex.covariance_decay(0.75, lags=[-1, 2], N=10**7)


def test_beta_profile_small():
    prof = ex.beta_profile(0.75, m_bins=512, k_max=64)
    b = prof.beta_values
    assert 0.5 < b[0] < 1.0
    assert prof.is_non_increasing()
    assert b[-1] < b[0]
    assert prof.expected_slope == pytest.approx(-1.0 / 3.0)


def test_maximal_rhs():
    beta = np.array([1.0, 0.5, 0.25, 0.125])
    assert ex.maximal_rhs(3, 3, 4.0, beta) == pytest.approx(2 * 3 / 16 * 1.75)
    assert ex.maximal_rhs(10, 2, 4.0, beta) == pytest.approx(10 * 0.25 / 4 + 20 / 16 * 1.5)


def test_partial_sum_path_matches_direct(d75):
    values = np.random.default_rng(1).random(30)
    path = ex.partial_sum_norm_path(values, d75)
    t = (np.arange(2**16) + 0.5) / 2**16
    F = d75.cdf(t)
    for k in (1, 10, 30):
        s = np.sum((values[:k, None] <= t[None, :]) - F[None, :], axis=0)
        assert path[k - 1] == pytest.approx(np.sqrt(np.mean(s * s)), rel=1e-3)


def test_maximal_audit(d75):
    prof = ex.beta_profile(0.75, m_bins=512, k_max=8)
    audit = ex.maximal_inequality_audit(0.75, 1000, 8, [8, 16, 32], 300, 1, density=d75,
                                        profile=prof)
    assert np.all(np.diff(audit.lhs) <= 0)
    assert audit.holds
    with pytest.raises(DomainError):
        ex.maximal_inequality_audit(0.75, 1000, 8, [4], 300, 1, density=d75, profile=prof)
    with pytest.raises(DomainError):
        ex.maximal_inequality_audit(0.75, 1000, 8, [8], 100, 1, density=d75, profile=prof)


def test_trend(d75):
    out = ex.almost_sure_trend(0.75, 1.0, (10**3, 10**4, 10**5), seed=1, density=d75)
    assert out.shape == (3, 2)
    assert np.all(np.isfinite(out[:, 1])) and np.all(out[:, 1] > 0)
    with pytest.raises(DomainError):
        ex.almost_sure_trend(0.75, 0.75, density=d75)


def test_backward_maxima_reproduce_across_seeds(d75):
    # replicates are independent, so two seeds give samples of one law
    a = ex.backward_max_norms(0.75, 500, 300, 1, d75, threads=2)
    b = ex.backward_max_norms(0.75, 500, 300, 2, d75, threads=2)
    assert ex.ks_two_sample(a, b) <= 1.36 * np.sqrt(2 / 300)


def test_reversal_report(d75):
    rep = ex.reversal_check(0.75, 5000, 50, 1, path_length=500, density=d75)
    assert rep.forward_corr.shape == (4,)
    assert np.all(rep.domination_margin > 0)
    assert 0 <= rep.marginal_ks <= 1 and rep.corr_gap >= 0
