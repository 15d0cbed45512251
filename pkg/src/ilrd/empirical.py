"""Empirical process of an orbit as an exact piecewise-linear function.

With ``F`` piecewise linear on the density's bin edges, ``G_n = F_n - F`` is
linear between consecutive points of the merged set {orbit values} U {bin
edges}, so its L2 norm, L1 norm (the Wasserstein distance to ``F``) and the
Cramer-von Mises functional integrate in closed form piece by piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _kernels
from ._validation import DomainError, check_count, check_gamma, check_orbits, check_unit_interval
from .density import PiecewiseDensity
from .maps import Orbit

STATS = ("l2", "w1", "cvm")
TIE_TOL = 1e-15
QUADRATURE_POINTS = 4096


def uniform_reference(gamma):
    """The identity CDF on [0, 1] as a one-bin density."""
    return PiecewiseDensity(gamma, np.array([0.0, 1.0]), np.array([1.0]), 1.0, 0.5, "uniform")


@dataclass(frozen=True)
class EmpiricalProcessFn:
    """``G_n(t) = F_n(t) - F(t)`` stored as ``intercept + slope * t`` per piece."""

    n: int
    gamma: float
    breakpoints: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    def __call__(self, t):
        t = check_unit_interval(t, "t")
        k = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, self.slopes.size - 1)
        out = self.intercepts[k] + self.slopes[k] * t
        return float(out) if out.ndim == 0 else out

    def _ends(self):
        a, b = self.breakpoints[:-1], self.breakpoints[1:]
        return b - a, self.intercepts + self.slopes * a, self.intercepts + self.slopes * b

    def sup_norm(self):
        _, g0, g1 = self._ends()
        return float(max(np.abs(g0).max(), np.abs(g1).max()))


def empirical_process(orbit, d):
    """Exact piecewise representation of ``F_n - F`` for ``orbit`` against ``d``."""
    if abs(orbit.gamma - d.gamma) > 1e-15:
        raise DomainError("orbit and density were built for different gamma")
    x = np.sort(orbit.values)
    n = x.size
    bp = np.union1d(x, d.bin_edges)
    bp = bp[np.concatenate([[True], np.diff(bp) > TIE_TOL])]
    bp[-1] = 1.0
    a, b = bp[:-1], bp[1:]
    mid = 0.5 * (a + b)
    fn = np.searchsorted(x, mid, side="right") / n
    Fa, Fb = np.interp(a, d.bin_edges, d.cdf_values), np.interp(b, d.bin_edges, d.cdf_values)
    slope_F = (Fb - Fa) / (b - a)
    slopes = -slope_F
    intercepts = fn - Fa + slope_F * a
    return EmpiricalProcessFn(n, orbit.gamma, bp, slopes, intercepts)


def l2_norm(ep, with_quadrature=False):
    """``||G_n||_H`` in L2([0, 1], dt); optionally also a midpoint-rule value."""
    L, g0, g1 = ep._ends()
    exact = math.sqrt(max(float(np.sum(L * (g0 * g0 + g0 * g1 + g1 * g1) / 3.0)), 0.0))
    if not with_quadrature:
        return exact
    t = (np.arange(QUADRATURE_POINTS) + 0.5) / QUADRATURE_POINTS
    quad = math.sqrt(float(np.mean(ep(t) ** 2)))
    return exact, quad


def wasserstein1(ep):
    """``W_1(mu_n, nu) = int_0^1 |G_n(t)| dt``, splitting pieces at sign changes."""
    L, g0, g1 = ep._ends()
    a0, a1 = np.abs(g0), np.abs(g1)
    same = g0 * g1 >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = np.where(same, 0.0, (g0 * g0 + g1 * g1) / (a0 + a1))
    return float(np.sum(np.where(same, 0.5 * L * (a0 + a1), 0.5 * L * cross)))


def _transform_for_cvm(values, hypothesized):
    flat = hypothesized.h_values == 0
    if np.any(flat):
        j = np.clip(np.searchsorted(hypothesized.bin_edges, values, side="right") - 1,
                    0, hypothesized.m_bins - 1)
        inner = (values > hypothesized.bin_edges[j]) & (values < hypothesized.bin_edges[j + 1])
        if np.any(flat[j] & inner):
            raise DomainError("hypothesized CDF is flat where the orbit has values")
    return np.clip(hypothesized.cdf(values), 0.0, 1.0)


def cvm_statistic(orbit, d, hypothesized=None):
    """Cramer-von Mises ``int (F_n - G)^2 dG`` computed as ``int_0^1 (U_n(t) - t)^2 dt``.

    ``U_n`` is the empirical CDF of ``G(orbit)``; ``hypothesized`` defaults to ``d``.
    """
    if abs(orbit.gamma - d.gamma) > 1e-15:
        raise DomainError("orbit and density were built for different gamma")
    hypothesized = d if hypothesized is None else hypothesized
    u = _transform_for_cvm(orbit.values, hypothesized)
    ep = empirical_process(Orbit(orbit.gamma, u), uniform_reference(orbit.gamma))
    return l2_norm(ep) ** 2


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)


def cvm_direct(orbit, hypothesized):
    """``int (F_n - G)^2 dG`` integrated in the original variable.

    Pieces are the merged orbit values and bin edges, where ``F_n`` is
    constant and ``G`` linear, so 3-point Gauss-Legendre is exact per piece.
    Serves as the independent path against :func:`cvm_statistic`.
    """
    x = np.sort(orbit.values)
    e = hypothesized.bin_edges
    bp = np.union1d(x, e)
    a, b = bp[:-1], bp[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    fn = np.searchsorted(x, a, side="right") / x.size
    j = np.clip(np.searchsorted(e, 0.5 * (a + b), side="right") - 1, 0, hypothesized.m_bins - 1)
    h = hypothesized.h_values[j]
    half = 0.5 * (b - a)
    t = 0.5 * (a + b)[:, None] + half[:, None] * _GL_NODES[None, :]
    G = np.interp(t, e, hypothesized.cdf_values)
    return float(np.sum(half * h * ((fn[:, None] - G) ** 2 @ _GL_WEIGHTS)))


def fourier_tail_norm_sq(x, m, k_max, chunk=4096):
    """``sum_{k=m+1}^{k_max} a_k(x)^2 + b_k(x)^2`` for the indicator ``1{t >= x}``.

    ``a_k^2 + b_k^2 = |1 - exp(2 pi i k x)|^2 / (2 pi^2 k^2) = 2 sin^2(pi k x) / (pi k)^2``.
    """
    m = check_count(m, "m")
    k_max = check_count(k_max, "k_max")
    if k_max <= m:
        raise DomainError("k_max must exceed m")
    x = check_unit_interval(x)
    flat = x.reshape(-1, 1)
    total = np.zeros(flat.shape[0])
    # largest k first so the small terms are not swamped
    for hi in range(k_max, m, -chunk):
        k = np.arange(max(hi - chunk, m) + 1, hi + 1, dtype=np.float64)
        s = np.sin(np.pi * np.outer(flat.ravel(), k))
        total += np.sum(2.0 * s * s / (np.pi * k) ** 2, axis=1)
    return float(total[0]) if x.ndim == 0 else total.reshape(x.shape)


def fourier_full_tail(x, m):
    """``sum_{k > m} a_k(x)^2 + b_k(x)^2``, using ``sum_{k >= 1} = x (1 - x)``."""
    m = check_count(m, "m")
    x = check_unit_interval(x)
    k = np.arange(1, m + 1, dtype=np.float64)
    s = np.sin(np.pi * np.multiply.outer(x, k))
    head = np.sum(2.0 * s * s / (np.pi * k) ** 2, axis=-1)
    out = np.clip(x * (1.0 - x) - head, 0.0, None)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NormalizationRule:
    """Scaling that makes ``G_n`` converge in law.

    ``sqrt(n / log n)`` when gamma = 1/2, ``n^(1 - gamma)`` for gamma in (1/2, 1).
    """

    gamma: float

    def __post_init__(self):
        check_gamma(self.gamma, long_range=True)

    def rate(self, n):
        n = np.asarray(n, dtype=np.float64)
        if self.gamma == 0.5:
            out = np.sqrt(n / np.log(n))
        else:
            out = n ** (1.0 - self.gamma)
        return float(out) if out.ndim == 0 else out

    def as_rate(self, n, delta):
        """Rate divided by ``log(n + 1)^delta`` for almost-sure statements."""
        n = np.asarray(n, dtype=np.float64)
        out = np.asarray(self.rate(n)) / np.log(n + 1.0) ** delta
        return float(out) if out.ndim == 0 else out

    def descriptor(self):
        return "sqrt(n/log n)" if self.gamma == 0.5 else f"n^{1.0 - self.gamma:.6g}"


def check_stat(stat):
    if stat not in STATS:
        raise DomainError(f"stat must be one of {STATS}, got {stat!r}")
    return stat


def raw_statistics(values, d):
    """Unnormalised ``(||G_n||_H, W_1, Psi_n, sup|G_n|)`` for one orbit's values.

    Uses the streaming exact integrator; the cvm term uses ``d`` as the null.
    """
    xs = np.sort(np.asarray(values, dtype=np.float64))
    sq, ab, sup = _kernels.piecewise_integrals(xs, d.bin_edges, d.cdf_values)
    u = np.sort(np.clip(np.interp(xs, d.bin_edges, d.cdf_values), 0.0, 1.0))
    csq, _, _ = _kernels.piecewise_integrals(u, _UNIT_EDGES, _UNIT_EDGES)
    return math.sqrt(max(sq, 0.0)), ab, csq, sup


_UNIT_EDGES = np.array([0.0, 1.0])
_UNIT_EDGES.setflags(write=False)


def statistic(orbit, d, stat):
    check_stat(stat)
    if stat == "cvm":
        return cvm_statistic(orbit, d)
    ep = empirical_process(orbit, d)
    return l2_norm(ep) if stat == "l2" else wasserstein1(ep)


def normalized_statistic(orbit, d, stat):
    """Statistic times the rate (l2, w1) or the squared rate (cvm)."""
    check_stat(stat)
    gamma = check_gamma(orbit.gamma)
    if gamma < 0.5:
        raise DomainError("normalisation is defined only for gamma in [1/2, 1)")
    rule = NormalizationRule(gamma)
    r = rule.rate(len(orbit))
    scale = r * r if stat == "cvm" else r
    return scale * statistic(orbit, d, stat)


class EmpiricalProcessStatistic(TransformerMixin, BaseEstimator):
    """Map a batch of orbits (one per row) to one goodness-of-fit statistic each.

    Parameters
    ----------
    density : PiecewiseDensity
        Reference invariant density; also the Cramer-von Mises null.
    stat : {"l2", "w1", "cvm"}, default="w1"
    normalize : bool, default=True
        Multiply by the limit-theorem rate (squared for ``cvm``).
    """

    def __init__(self, density=None, stat="w1", normalize=True):
        self.density = density
        self.stat = stat
        self.normalize = normalize

    def fit(self, X=None, y=None):
        if not isinstance(self.density, PiecewiseDensity):
            raise DomainError("density must be a PiecewiseDensity")
        check_stat(self.stat)
        self.density_ = self.density
        if self.normalize:
            self.rule_ = NormalizationRule(self.density.gamma)
        return self

    def transform(self, X):
        check_is_fitted(self, "density_")
        X = check_orbits(X)
        idx = STATS.index(self.stat)
        out = np.empty((X.shape[0], 1))
        for r, row in enumerate(X):
            out[r, 0] = raw_statistics(row, self.density_)[idx]
        if self.normalize:
            rate = self.rule_.rate(X.shape[1])
            out *= rate * rate if self.stat == "cvm" else rate
        return out
