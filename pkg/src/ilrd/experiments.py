"""Monte Carlo harness: limit laws, mixing rates, maximal inequality, reversal.

Every function here is a deterministic function of its arguments and seed.
Replicate ``r`` always draws from stream ``(seed, r)`` and per-replicate
results are stored by replicate index, so thread count never changes output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats as sps

from . import _kernels, density as dens, empirical, maps, rng, stable
from ._validation import (
    DomainError,
    InsufficientSignalError,
    check_count,
    check_gamma,
    check_seed,
)

MIN_REPLICATES = 100
MIN_AUDIT_REPLICATES = 300
MIN_COVARIANCE_LENGTH = 10**7
SIGNAL_RATIO = 3.0
MIN_USABLE_LAGS = 5
N_BLOCKS = 20
BETA_BINS = 4096
DEFAULT_LAGS = np.unique(np.round(np.geomspace(10, 1000, 41)).astype(np.int64))
DEFAULT_CHECKPOINTS = (10**3, 10**4, 10**5, 10**6, 10**7)
REVERSAL_LAGS = (1, 2, 5, 10)


def _map_replicates(func, R, threads):
    """``[func(r) for r in range(R)]``, optionally on a thread pool, in index order."""
    if threads is None or threads <= 1:
        return [func(r) for r in range(R)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(R)))


# ---------------------------------------------------------------- limit laws


@dataclass(frozen=True)
class McSample:
    """Normalised statistic values from ``R`` independent orbits."""

    gamma: float
    n: int
    stat: str
    values: np.ndarray
    raw: np.ndarray
    seeds: np.ndarray
    normalization: str

    def __post_init__(self):
        if self.values.shape != (self.R,) or not np.all(np.isfinite(self.values)):
            raise DomainError("McSample values must be R finite reals")
        if np.any(self.values < 0):
            raise DomainError("statistics are non-negative")

    @property
    def R(self):
        return self.seeds.shape[0]

    def rows(self):
        """CSV rows ``(replicate, seed, n, gamma, stat_name, raw, normalized)``."""
        for r in range(self.R):
            yield r, int(self.seeds[r]), self.n, self.gamma, self.stat, self.raw[r], self.values[r]


def replicate_statistics(gamma, n, R, seed, d, *, burn_in=maps.DEFAULT_BURN_IN, threads=1):
    """Raw ``(l2, w1, cvm, sup)`` for ``R`` forward orbits, shape ``(R, 4)``."""

    def one(r):
        orbit = maps.generate_orbit(gamma, n, burn_in, seed, replicate=r)
        return empirical.raw_statistics(orbit.values, d)

    return np.array(_map_replicates(one, R, threads), dtype=np.float64)


def monte_carlo_limits(gamma, n, R, seed, *, stats=empirical.STATS, density=None,
                       burn_in=maps.DEFAULT_BURN_IN, threads=1):
    """One :class:`McSample` per statistic, all from the same ``R`` orbits."""
    gamma = check_gamma(gamma, long_range=True)
    n = check_count(n, "n", minimum=3)
    R = check_count(R, "R", minimum=MIN_REPLICATES)
    seed = check_seed(seed)
    for s in stats:
        empirical.check_stat(s)
    d = dens.ulam_density(gamma) if density is None else density
    raw = replicate_statistics(gamma, n, R, seed, d, burn_in=burn_in, threads=threads)
    # W1 <= ||G_n||_H by Cauchy-Schwarz; a violation means an integration bug
    if np.any(raw[:, 1] > raw[:, 0] * (1.0 + 1e-9) + 1e-15):
        raise AssertionError("W1 exceeded the L2 norm on some replicate")
    rule = empirical.NormalizationRule(gamma)
    rate = rule.rate(n)
    seeds = np.full(R, seed, dtype=np.uint64)
    out = {}
    for s in stats:
        col = raw[:, empirical.STATS.index(s)]
        scale = rate * rate if s == "cvm" else rate
        out[s] = McSample(gamma, n, s, scale * col, col, seeds, rule.descriptor())
    return out


def monte_carlo_limit(gamma, n, R, stat, seed, *, density=None, burn_in=maps.DEFAULT_BURN_IN,
                      threads=1):
    """Sampled law of ``normalized_statistic`` over ``R`` orbits on streams ``(seed, r)``."""
    empirical.check_stat(stat)
    return monte_carlo_limits(gamma, n, R, seed, stats=(stat,), density=density,
                              burn_in=burn_in, threads=threads)[stat]


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov distance ``sup |F_a - F_b|``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise DomainError("both samples must be non-empty")
    return float(sps.ks_2samp(a, b, method="asymp").statistic)


# ------------------------------------------------------- covariance decay


@dataclass(frozen=True)
class CovarianceFit:
    gamma: float
    lags: np.ndarray
    rho: np.ndarray
    stderr: np.ndarray
    used: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float

    @property
    def expected_slope(self):
        return (self.gamma - 1.0) / self.gamma


def _cov_from_sums(sxy, sx, sy, cnt):
    return sxy / cnt - (sx / cnt) * (sy / cnt)


def covariance_decay(gamma, observable=None, lags=DEFAULT_LAGS, N=10**8, seed=0, *,
                     burn_in=maps.DEFAULT_BURN_IN, n_blocks=N_BLOCKS):
    """Fit ``log |rho(k)|`` against ``log k`` along one long orbit.

    ``rho(k)`` is the empirical lag-``k`` covariance of ``g(T^i x)``. Its
    standard error is the leave-one-block-out jackknife over ``n_blocks``
    contiguous blocks. Only lags with ``|rho| > 3 se`` enter the fit.

    Raises
    ------
    InsufficientSignalError
        If fewer than five lags carry signal.
    """
    gamma = check_gamma(gamma)
    N = check_count(N, "N", minimum=MIN_COVARIANCE_LENGTH)
    seed = check_seed(seed)
    lags = np.asarray(lags, dtype=np.int64)
    if lags.ndim != 1 or lags.size == 0 or lags.min() < 0 or lags.max() >= N // 10:
        raise DomainError("lags must be non-negative and much shorter than the orbit")
    observable = maps.ObservableG() if observable is None else observable
    if observable.kind == "identity":
        bp = vals = np.empty(0)
    elif observable.kind == "cdf-of-nu":
        bp, vals = observable.density.bin_edges, observable.density.cdf_values
    else:
        bp, vals = observable.breakpoints, observable.values
    x0 = rng.open_uniform(rng.stream(seed, 0, rng.ORBIT))
    sxy, sx, sy, cnt, status = _kernels.lagged_moments(
        x0, gamma, burn_in, N, lags, n_blocks, _kernels.UNDERFLOW_FLOOR,
        np.ascontiguousarray(bp, dtype=np.float64), np.ascontiguousarray(vals, dtype=np.float64),
    )
    if status != -1:
        maps._raise_underflow(status, gamma, seed)
    rho = _cov_from_sums(sxy.sum(0), sx.sum(0), sy.sum(0), cnt.sum(0))
    leave = _cov_from_sums(sxy.sum(0) - sxy, sx.sum(0) - sx, sy.sum(0) - sy, cnt.sum(0) - cnt)
    B = n_blocks
    se = np.sqrt((B - 1) / B * np.sum((leave - leave.mean(0)) ** 2, axis=0))
    used = (np.abs(rho) > SIGNAL_RATIO * se) & (lags >= 1)
    if used.sum() < MIN_USABLE_LAGS:
        raise InsufficientSignalError(
            f"only {int(used.sum())} lags have |rho| > {SIGNAL_RATIO} se; need {MIN_USABLE_LAGS}"
        )
    fit = sps.linregress(np.log(lags[used]), np.log(np.abs(rho[used])))
    return CovarianceFit(gamma, lags, rho, se, used, float(fit.slope), float(fit.stderr),
                         float(fit.intercept))


# ------------------------------------------------------------ beta mixing


@dataclass(frozen=True)
class MixingProfile:
    """``beta(k)`` of the reversed chain for ``k = 0..k_max``.

    theta(k) <= beta(k), so these values also bound the weak dependence
    coefficients used in the maximal inequality.
    """

    gamma: float
    m_bins: int
    beta_values: np.ndarray

    @property
    def lags(self):
        return np.arange(self.beta_values.size)

    def slope(self, k_lo=8, k_hi=256):
        k = self.lags
        sel = (k >= k_lo) & (k <= k_hi)
        fit = sps.linregress(np.log(k[sel] + 1.0), np.log(self.beta_values[sel]))
        return float(fit.slope), float(fit.stderr)

    @property
    def expected_slope(self):
        return -(1.0 - self.gamma) / self.gamma

    def is_non_increasing(self, slack=0.01):
        b = self.beta_values
        return bool(np.all(b[1:] <= b[:-1] * (1.0 + slack)))


def reversed_kernel(ulam, pi):
    """``Q[i, j] = pi_j P[j, i] / pi_i``: the Ulam chain run backwards in time."""
    if np.any(pi <= 0):
        raise DomainError("stationary vector must be positive to reverse the chain")
    return (sp.diags(1.0 / pi) @ ulam.P.T @ sp.diags(pi)).tocsr()


def beta_profile(gamma, m_bins=BETA_BINS, k_max=256):
    """``beta(k) = E sup_t |F_{X_k | X_0}(t) - F(t)|`` on the Ulam discretisation.

    The conditional law of ``X_k`` given ``X_0`` in bin ``i`` is row ``i`` of
    ``Q^k``; its CDF, propagated directly as ``Q^k U`` with ``U`` the
    upper-triangular ones matrix, is compared to ``F`` at the bin edges and the sup is
    averaged over ``i`` with the stationary weights.
    """
    gamma = check_gamma(gamma)
    m_bins = check_count(m_bins, "m_bins", minimum=2)
    k_max = check_count(k_max, "k_max", minimum=0)
    ulam = dens.build_ulam_matrix(gamma, m_bins)
    d = dens.stationary_density(ulam)
    pi = dens.bin_masses(d, m_bins)
    pi = pi / pi.sum()
    Q = reversed_kernel(ulam, pi)
    F = np.cumsum(pi)
    F[-1] = 1.0
    # column j of W = Q^k U holds P(X_k <= e_{j+1} | X_0 in bin i)
    W = np.triu(np.ones((m_bins, m_bins)))
    out = np.empty(k_max + 1)
    for k in range(k_max + 1):
        # both CDFs vanish at 0 and are linear inside bins: sup sits at an edge
        out[k] = _kernels.weighted_row_sup(W, F, pi)
        if k < k_max:
            W = Q @ W
    return MixingProfile(gamma, m_bins, out)


# ---------------------------------------------------- maximal inequality


def partial_sum_norm_path(values, d):
    """``max``-ready path ``||sum_{i<=k} (1{x_i <= t} - F(t))||_H`` for each ``k``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    ranks = np.empty(values.size, dtype=np.int64)
    ranks[np.argsort(values, kind="stable")] = np.arange(values.size)
    a_vals = np.asarray(d.integral_of_cdf_above(values), dtype=np.float64)
    return _kernels.partial_sum_norms(values, ranks, a_vals, d.cdf_squared_integral)


def maximal_rhs(n, q, x, beta):
    """``n beta(q) / x 1{q < n} + (2 n / x^2) sum_{k<q} beta(k)`` with ``M = 1``."""
    x = np.asarray(x, dtype=np.float64)
    first = n * beta[q] / x if q < n else 0.0
    return first + 2.0 * n / (x * x) * float(np.sum(beta[:q]))


@dataclass(frozen=True)
class MaximalAudit:
    gamma: float
    n: int
    q: int
    x: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    maxima: np.ndarray

    @property
    def holds(self):
        return bool(np.all(self.lhs <= self.rhs))


def backward_max_norms(gamma, n, R, seed, d, *, threads=1):
    """``max_{k<=n} ||S_k||_H`` for ``R`` backward-chain replicates."""

    def one(r):
        chain = maps.generate_backward_chain(gamma, n, seed, d, replicate=r)
        return partial_sum_norm_path(chain.values, d).max()

    return np.array(_map_replicates(one, R, threads))


def forward_max_norms(gamma, n, R, seed, d, *, burn_in=maps.DEFAULT_BURN_IN, threads=1):
    """``max_{k<=n} ||Sigma_k||_H`` for ``R`` forward orbits."""

    def one(r):
        orbit = maps.generate_orbit(gamma, n, burn_in, seed, replicate=r)
        return partial_sum_norm_path(orbit.values, d).max()

    return np.array(_map_replicates(one, R, threads))


def maximal_inequality_audit(gamma, n, q, x, R, seed, *, density=None, profile=None,
                             threads=1):
    """Compare ``P(max_k ||S_k||_H >= 4x)`` with the beta-based bound at each ``x``."""
    gamma = check_gamma(gamma)
    n = check_count(n)
    q = check_count(q, "q")
    R = check_count(R, "R", minimum=MIN_AUDIT_REPLICATES)
    if q > n:
        raise DomainError("q must lie in {1, ..., n}")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < q):
        raise DomainError(f"every x must satisfy x >= q M = {q}")
    d = dens.ulam_density(gamma) if density is None else density
    profile = beta_profile(gamma, BETA_BINS, q) if profile is None else profile
    if profile.beta_values.size <= q:
        raise DomainError("mixing profile is shorter than q")
    maxima = backward_max_norms(gamma, n, R, seed, d, threads=threads)
    lhs = np.array([np.mean(maxima >= 4.0 * xi) for xi in x])
    rhs = maximal_rhs(n, q, x, profile.beta_values)
    return MaximalAudit(gamma, n, q, x, lhs, np.atleast_1d(rhs), maxima)


# ------------------------------------------------------ almost-sure trend


def almost_sure_trend(gamma, delta, checkpoints=DEFAULT_CHECKPOINTS, seed=0, *, replicate=0,
                      density=None, burn_in=maps.DEFAULT_BURN_IN):
    """``(n, rate(n) ||G_n||_H / log(n + 1)^delta)`` at each checkpoint of one orbit."""
    gamma = check_gamma(gamma, long_range=True)
    if not delta > gamma:
        raise DomainError("delta must exceed gamma")
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or cps.size == 0 or cps[0] < 3 or np.any(np.diff(cps) <= 0):
        raise DomainError("checkpoints must be increasing integers >= 3")
    d = dens.ulam_density(gamma) if density is None else density
    orbit = maps.generate_orbit(gamma, int(cps[-1]), burn_in, seed, replicate=replicate)
    rule = empirical.NormalizationRule(gamma)
    out = np.empty((cps.size, 2))
    for i, n in enumerate(cps):
        l2 = empirical.raw_statistics(orbit.values[:n], d)[0]
        out[i] = n, rule.as_rate(float(n), delta) * l2
    return out


# ----------------------------------------------------------- time reversal


def _quantile_stderr(sample, p):
    """Order-statistic standard error of the ``p`` quantile (binomial interval)."""
    s = np.sort(sample)
    R = s.size
    half = math.sqrt(R * p * (1.0 - p))
    lo = s[max(int(math.floor(R * p - half)), 0)]
    hi = s[min(int(math.ceil(R * p + half)), R - 1)]
    return 0.5 * (hi - lo)


def lag_correlations(values, lags=REVERSAL_LAGS):
    v = np.asarray(values, dtype=np.float64)
    return np.array([np.corrcoef(v[:-k], v[k:])[0, 1] for k in lags])


@dataclass(frozen=True)
class ReversalReport:
    gamma: float
    n: int
    path_length: int
    R: int
    marginal_ks: float
    forward_corr: np.ndarray
    backward_corr: np.ndarray
    probs: tuple
    forward_quantiles: np.ndarray
    backward_quantiles: np.ndarray
    quantile_stderr: np.ndarray
    forward_maxima: np.ndarray = field(repr=False)
    backward_maxima: np.ndarray = field(repr=False)

    @property
    def corr_gap(self):
        return float(np.max(np.abs(self.forward_corr - self.backward_corr)))

    @property
    def domination_margin(self):
        """``2 q_p(S) + 3 se - q_p(Sigma)``; non-negative where domination holds."""
        return 2.0 * self.backward_quantiles + 3.0 * self.quantile_stderr - self.forward_quantiles


def reversal_check(gamma, n, R, seed, *, path_length=10**4, probs=(0.5, 0.9), density=None,
                   threads=1):
    """Forward iterates against the backward chain.

    Compares one-orbit marginals at length ``n`` (two-sample KS and lag
    correlations), then the laws of ``max_k ||Sigma_k||`` (forward) and
    ``2 max_k ||S_k||`` (backward) over ``R`` paths of ``path_length``.
    """
    gamma = check_gamma(gamma)
    n = check_count(n)
    R = check_count(R, "R", minimum=2)
    seed = check_seed(seed)
    d = dens.ulam_density(gamma) if density is None else density
    fwd = maps.generate_orbit(gamma, n, seed=seed)
    bwd = maps.generate_backward_chain(gamma, n, seed, d)
    ks = ks_two_sample(fwd.values, bwd.values)
    fc, bc = lag_correlations(fwd.values), lag_correlations(bwd.values)
    fmax = forward_max_norms(gamma, path_length, R, seed, d, threads=threads)
    bmax = backward_max_norms(gamma, path_length, R, seed, d, threads=threads)
    fq = np.quantile(fmax, probs)
    bq = np.quantile(bmax, probs)
    se = np.array([math.hypot(_quantile_stderr(fmax, p), 2.0 * _quantile_stderr(bmax, p))
                   for p in probs])
    return ReversalReport(gamma, n, path_length, R, ks, fc, bc, tuple(probs), fq, bq, se,
                          fmax, bmax)


def limit_ks(sample, reference):
    """KS distance between an :class:`McSample` and a reference draw."""
    return ks_two_sample(sample.values, reference)


def reference_for(sample, d, seed, count):
    return stable.reference_sample(sample.gamma, d, sample.stat, seed, count)
