"""Invariant density estimation by Ulam discretisation of the transfer operator.

The density ``h`` of the absolutely continuous invariant probability has no
closed form. It is estimated as the stationary vector of the Ulam matrix
over uniform bins, then stored as a bin-averaged :class:`PiecewiseDensity`
whose CDF is piecewise linear.
"""

from __future__ import annotations

import csv
import functools
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _kernels, maps
from ._validation import (
    ConvergenceError,
    DomainError,
    check_count,
    check_gamma,
    check_unit_interval,
)

DEFAULT_BINS = 2**16
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000

SINGULAR = "singular"
LEBESGUE = "lebesgue"
# geometric sub-edges below REFINE_TOP / m resolve the x^-gamma spike in the CDF
REFINE_TOP = 32
REFINE_PER_OCTAVE = 8
REFINE_FLOOR_EXP = -1000

ULAM = "ulam"
HISTOGRAM = "long-orbit-histogram"
PUSHFORWARD = "pushforward"
FLAT_X_WIDTH = 1e-9


@dataclass(frozen=True)
class UlamMatrix:
    """Row-stochastic matrix ``P[i, j] = w(B_i & T^-1 B_j) / w(B_i)`` over uniform bins.

    ``weight`` is ``"singular"`` (``w = x^-gamma dx``) or ``"lebesgue"`` (``w = dx``).
    """

    gamma: float
    m_bins: int
    P: sp.csr_matrix
    weight: str = SINGULAR

    @property
    def row_error(self):
        return float(np.max(np.abs(np.asarray(self.P.sum(axis=1)).ravel() - 1.0)))


def _weight_mass(u, v, gamma, weight):
    if weight == SINGULAR:
        return (v ** (1.0 - gamma) - u ** (1.0 - gamma)) / (1.0 - gamma)
    return v - u


def _branch_entries(lo, hi, edges, preimages, m, gamma, weight):
    """Split [lo, hi] at bin edges and at the preimages of bin edges."""
    inside = edges[(edges >= lo) & (edges <= hi)]
    pts = np.union1d(inside, preimages)
    pts = pts[(pts >= lo) & (pts <= hi)]
    u, v = pts[:-1], pts[1:]
    keep = v > u
    u, v = u[keep], v[keep]
    mid = 0.5 * (u + v)
    rows = np.minimum((mid * m).astype(np.int64), m - 1)
    cols = np.searchsorted(preimages, mid, side="right") - 1
    cols = np.clip(cols, 0, m - 1)
    return rows, cols, _weight_mass(u, v, gamma, weight)


def build_ulam_matrix(gamma, m_bins=DEFAULT_BINS, weight=SINGULAR):
    """Ulam matrix of the map over ``m_bins`` uniform bins.

    Each entry is computed exactly from the preimages of the bin edges. With
    ``weight="singular"`` the mass inside a bin is spread like ``x^-gamma``,
    the shape of the invariant density near the neutral fixed point; the
    plain Lebesgue weighting is biased there by O(m^(gamma - 1)).
    """
    gamma = check_gamma(gamma)
    m = check_count(m_bins, "m_bins", minimum=16)
    if m & (m - 1):
        raise DomainError("m_bins must be a power of two")
    if weight not in (SINGULAR, LEBESGUE):
        raise DomainError(f"unknown weight {weight!r}")
    edges = np.linspace(0.0, 1.0, m + 1)
    left, right = maps.inverse_branches(edges, gamma)
    r1, c1, w1 = _branch_entries(0.0, 0.5, edges, left, m, gamma, weight)
    r2, c2, w2 = _branch_entries(0.5, 1.0, edges, right, m, gamma, weight)
    P = sp.csr_matrix(
        (np.concatenate([w1, w2]), (np.concatenate([r1, r2]), np.concatenate([c1, c2]))),
        shape=(m, m),
    )
    P.sum_duplicates()
    rowsum = np.asarray(P.sum(axis=1)).ravel()
    P = sp.diags(1.0 / rowsum) @ P
    return UlamMatrix(gamma, m, P.tocsr(), weight)


def _h_half(edges, h):
    k = int(np.searchsorted(edges, 0.5, side="right")) - 1
    k = min(max(k, 0), len(h) - 1)
    left = k - 1 if edges[k] == 0.5 and k > 0 else k
    return 0.5 * (h[left] + h[k])


@dataclass(frozen=True)
class PiecewiseDensity:
    """Bin-averaged density on [0, 1] with a piecewise-linear CDF."""

    gamma: float
    bin_edges: np.ndarray
    h_values: np.ndarray
    h_half: float
    mean_x: float
    source: str = ULAM

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        h = np.asarray(self.h_values, dtype=np.float64)
        if edges.ndim != 1 or h.shape != (edges.size - 1,):
            raise DomainError("need m+1 bin edges for m density values")
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) < 0):
            raise DomainError("bin edges must run non-decreasingly from 0 to 1")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise DomainError("density values must be finite and non-negative")
        mass = np.concatenate([[0.0], np.cumsum(h * np.diff(edges))])
        if not abs(mass[-1] - 1.0) < 1e-6:
            raise DomainError(f"density integrates to {mass[-1]}, not 1")
        cdf = mass / mass[-1]
        for name, arr in (("bin_edges", edges), ("h_values", h), ("cdf_values", cdf)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_masses(cls, gamma, edges, masses, source):
        masses = np.asarray(masses, dtype=np.float64)
        masses = masses / masses.sum()
        h = masses / np.diff(edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        return cls(gamma, edges, h, float(_h_half(edges, h)), float(np.sum(masses * mids)), source)

    @property
    def m_bins(self):
        return self.h_values.size

    @property
    def midpoints(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def cdf(self, t):
        t = check_unit_interval(t, "t")
        out = np.interp(t, self.bin_edges, self.cdf_values)
        return float(out) if out.ndim == 0 else out

    def quantile(self, p):
        """Exact inverse of the piecewise-linear CDF (left-continuous at flat pieces)."""
        p = check_unit_interval(p, "p")
        C, e, h = self.cdf_values, self.bin_edges, self.h_values
        j = np.clip(np.searchsorted(C, p, side="left") - 1, 0, h.size - 1)
        hj = h[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(hj > 0, e[j] + (p - C[j]) / hj, e[j + 1])
        t = np.clip(t, e[j], e[j + 1])
        t = np.where(p <= 0.0, 0.0, t)
        return float(t) if t.ndim == 0 else t

    def integral_of_cdf_above(self, x):
        """``A(x) = int_x^1 F(t) dt``, exact for the piecewise-linear CDF."""
        e, C = self.bin_edges, self.cdf_values
        cum = self._cdf_integral_at_edges
        x = np.asarray(x, dtype=np.float64)
        j = np.clip(np.searchsorted(e, x, side="right") - 1, 0, e.size - 2)
        Fx = np.interp(x, e, C)
        below = cum[j] + (x - e[j]) * (C[j] + Fx) / 2.0
        return cum[-1] - below

    @functools.cached_property
    def _cdf_integral_at_edges(self):
        e, C = self.bin_edges, self.cdf_values
        return np.concatenate([[0.0], np.cumsum(np.diff(e) * (C[:-1] + C[1:]) / 2.0)])

    @functools.cached_property
    def cdf_squared_integral(self):
        """``int_0^1 F(t)^2 dt``."""
        e, C = self.bin_edges, self.cdf_values
        a, b = C[:-1], C[1:]
        return float(np.sum(np.diff(e) * (a * a + a * b + b * b) / 3.0))

    @functools.cached_property
    def survival_l2_norm(self):
        """``(int_0^1 (1 - F(t))^2 dt)^(1/2)``."""
        e, C = self.bin_edges, self.cdf_values
        a, b = 1.0 - C[:-1], 1.0 - C[1:]
        return float(np.sqrt(np.sum(np.diff(e) * (a * a + a * b + b * b) / 3.0)))

    def singular_profile(self):
        """Midpoints and ``phi = h / avg(x^-gamma)`` per bin, for pointwise evaluation.

        The pointwise density is ``x^-gamma * phi(x)`` with ``phi`` linear
        between midpoints, which keeps the spike at the origin integrable.
        """
        return self._profile

    @functools.cached_property
    def _profile(self):
        g = self.gamma
        a, b = self.bin_edges[:-1], self.bin_edges[1:]
        avg = (b ** (1.0 - g) - a ** (1.0 - g)) / ((1.0 - g) * (b - a))
        mids = np.ascontiguousarray(0.5 * (a + b))
        phi = np.ascontiguousarray(self.h_values / avg)
        mids.setflags(write=False)
        phi.setflags(write=False)
        return mids, phi

    def pdf(self, x):
        mids, phi = self.singular_profile()
        x = check_unit_interval(x)
        vals = np.array([_kernels.density_at(v, self.gamma, mids, phi) for v in np.ravel(x)])
        return float(vals[0]) if x.ndim == 0 else vals.reshape(x.shape)

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "m_bins": self.m_bins,
            "bin_edges": self.bin_edges.tolist(),
            "h_values": self.h_values.tolist(),
            "h_half": self.h_half,
            "mean_x": self.mean_x,
            "source": self.source,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text):
        if isinstance(text, Path) or (isinstance(text, str) and not text.lstrip().startswith("{")):
            text = Path(text).read_text()
        d = json.loads(text)
        if len(d["h_values"]) != d["m_bins"]:
            raise DomainError("m_bins disagrees with h_values")
        return cls(d["gamma"], np.array(d["bin_edges"]), np.array(d["h_values"]),
                   d["h_half"], d["mean_x"], d["source"])

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["midpoint", "h"])
        for x, h in zip(self.midpoints, self.h_values):
            w.writerow([f"{x:.17g}", f"{h:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _refined_edges(m):
    top = REFINE_TOP / m
    k = np.arange(1, REFINE_PER_OCTAVE * (int(np.log2(top)) - REFINE_FLOOR_EXP) + 1)
    fine = top * 2.0 ** (-k / REFINE_PER_OCTAVE)
    return np.union1d(np.linspace(0.0, 1.0, m + 1), np.concatenate([[0.0], fine]))


def density_from_bin_masses(gamma, masses, weight=SINGULAR, source=ULAM):
    """PiecewiseDensity from masses of uniform bins.

    Under the singular weighting each bin's mass is distributed like
    ``x^-gamma`` across geometric sub-edges near the origin.
    """
    masses = np.asarray(masses, dtype=np.float64)
    m = masses.size
    if weight == LEBESGUE:
        return PiecewiseDensity.from_masses(gamma, np.linspace(0.0, 1.0, m + 1), masses, source)
    edges = _refined_edges(m)
    a, b = edges[:-1], edges[1:]
    owner = np.minimum((0.5 * (a + b) * m).astype(np.int64), m - 1)
    A = owner / m
    B = (owner + 1) / m
    g1 = 1.0 - gamma
    share = (b**g1 - a**g1) / (B**g1 - A**g1)
    return PiecewiseDensity.from_masses(gamma, edges, masses[owner] * share, source)


def stationary_density(ulam, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, method="gauss-seidel"):
    """Stationary probability vector of ``ulam.P`` as a density.

    ``method="gauss-seidel"`` sweeps the balance equations in ascending bin
    order. The left branch only moves mass upward, so each sweep resolves
    the slow laminar escape exactly and a few dozen sweeps suffice.
    ``method="power"`` is plain power iteration from the uniform vector; it
    needs O(m^gamma) steps or more. Either way the result must pass a final
    power step with L1 change below ``tol``.
    """
    PT = ulam.P.T.tocsr()
    PT.sort_indices()
    m = ulam.m_bins
    pi = np.full(m, 1.0 / m)
    if method == "gauss-seidel":
        pi, sweeps, diff = _kernels.gauss_seidel_stationary(
            PT.indptr, PT.indices, PT.data, pi, 0.1 * tol, max_iter
        )
        if sweeps < 0:
            raise ConvergenceError(
                f"Gauss-Seidel did not reach tol={tol} in {max_iter} sweeps (last {diff:.3g})"
            )
        steps = 1
    elif method == "power":
        steps = max_iter
    else:
        raise DomainError(f"unknown method {method!r}")
    diff = np.inf
    for _ in range(steps):
        nxt = PT @ pi
        nxt /= nxt.sum()
        diff = np.abs(nxt - pi).sum()
        pi = nxt
        if diff < tol:
            break
    if not diff < tol:
        raise ConvergenceError(
            f"stationary vector not reached to tol={tol} ({method}, last step {diff:.3g})"
        )
    return density_from_bin_masses(ulam.gamma, pi, ulam.weight, ULAM)


def bin_masses(density, m_bins):
    """Masses of the ``m_bins`` uniform bins under ``density``."""
    return np.diff(density.cdf(np.linspace(0.0, 1.0, m_bins + 1)))


def stationarity_residual(ulam, density):
    pi = bin_masses(density, ulam.m_bins)
    return float(np.abs(ulam.P.T @ pi - pi).sum())


@functools.lru_cache(maxsize=16)
def ulam_density(gamma, m_bins=DEFAULT_BINS, weight=SINGULAR):
    """Cached ``stationary_density(build_ulam_matrix(gamma, m_bins, weight))``."""
    return stationary_density(build_ulam_matrix(gamma, m_bins, weight))


def histogram_density(orbit, m_bins=DEFAULT_BINS):
    """Bin-averaged density from the values of a long orbit."""
    values = orbit.values if isinstance(orbit, maps.Orbit) else check_unit_interval(orbit)
    gamma = orbit.gamma if isinstance(orbit, maps.Orbit) else None
    edges = np.linspace(0.0, 1.0, m_bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    if gamma is None:
        raise DomainError("histogram_density needs an Orbit to know gamma")
    return PiecewiseDensity.from_masses(gamma, edges, counts.astype(np.float64), HISTOGRAM)


def cdf(d, t):
    return d.cdf(t)


def quantile(d, p):
    return d.quantile(p)


def holder_observable_cdf(d, g):
    """CDF of ``g(X)`` for ``X ~ d`` and monotone ``g`` mapping [0, 1] into [0, 1]."""
    if g.kind == "identity":
        return d
    if g.kind == "cdf-of-nu":
        knots = d.bin_edges
        edges, Fvals = np.asarray(g(knots)), d.cdf_values
    else:
        knots = np.union1d(d.bin_edges, g.breakpoints)
        gvals = g(knots)
        if gvals.min() < 0.0 or gvals.max() > 1.0:
            raise DomainError("observable must map [0, 1] into [0, 1]")
        Fvals = np.interp(knots, d.bin_edges, d.cdf_values)
        if g.increasing:
            edges = gvals
        else:
            edges, Fvals, knots = gvals[::-1], 1.0 - Fvals[::-1], knots[::-1]
    edges = np.concatenate([[0.0], edges, [1.0]])
    Fvals = np.concatenate([[0.0], Fvals, [1.0]])
    knots = np.concatenate([[knots[0]], knots, [knots[-1]]])
    if np.any(np.diff(edges) < 0):
        raise DomainError("observable is not monotone")
    widths = np.diff(edges)
    masses = np.diff(Fvals)
    keep = widths > 0
    # g constant on an x-interval makes an atom; a collapse from rounding does not
    flat = ~keep & (masses > 1e-12) & (np.abs(np.diff(knots)) > FLAT_X_WIDTH)
    if np.any(flat):
        raise DomainError("observable has a flat piece carrying probability mass")
    kept = np.flatnonzero(keep)
    owner = np.minimum(np.searchsorted(kept, np.arange(masses.size)), kept.size - 1)
    folded = np.bincount(owner, weights=masses, minlength=kept.size)
    edges = np.concatenate([[0.0], edges[1:][keep]])
    edges[-1] = 1.0
    return PiecewiseDensity.from_masses(d.gamma, edges, folded, PUSHFORWARD)


def shape_report(d, slack=0.02, ratio_limit=10.0):
    """Qualitative checks every invariant density estimate must pass."""
    h = d.h_values
    mids = d.midpoints
    mono = bool(np.all(h[1:] <= h[:-1] * (1.0 + slack)))
    xg = mids[1:] ** d.gamma * h[1:]
    ratio = float(xg.max() / xg.min()) if xg.min() > 0 else float("inf")
    mass = float(np.sum(h * np.diff(d.bin_edges)))
    return {
        "non_increasing": mono,
        "max_relative_increase": float(np.max(h[1:] / h[:-1] - 1.0)),
        "last_positive": bool(h[-1] > 0),
        "h_last": float(h[-1]),
        "xgamma_ratio": ratio,
        "xgamma_bounded": ratio <= ratio_limit,
        "mass": mass,
    }


class UlamDensityEstimator(TransformerMixin, BaseEstimator):
    """Invariant density of the intermittent map.

    ``fit()`` with no data builds the Ulam estimate; ``fit(orbit_values)``
    uses the histogram of a long orbit instead. ``transform`` applies the
    estimated CDF and ``inverse_transform`` its quantile function.

    Parameters
    ----------
    gamma : float, default=0.75
        Intermittency exponent in (0, 1).
    n_bins : int, default=65536
        Number of uniform bins; a power of two for the Ulam route.
    tol : float, default=1e-12
        L1 stopping tolerance of the stationary solve.
    max_iter : int, default=10000
        Sweep (or step) cap of the stationary solve.
    weight : {"singular", "lebesgue"}, default="singular"
        Reference measure spreading mass inside a bin.
    method : {"gauss-seidel", "power"}, default="gauss-seidel"
        How the stationary vector is found.
    """

    def __init__(self, gamma=0.75, n_bins=DEFAULT_BINS, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 weight=SINGULAR, method="gauss-seidel"):
        self.gamma = gamma
        self.n_bins = n_bins
        self.tol = tol
        self.max_iter = max_iter
        self.weight = weight
        self.method = method

    def fit(self, X=None, y=None):
        gamma = check_gamma(self.gamma)
        if X is None:
            self.ulam_matrix_ = build_ulam_matrix(gamma, self.n_bins, self.weight)
            self.density_ = stationary_density(self.ulam_matrix_, self.tol, self.max_iter, self.method)
        else:
            values = check_unit_interval(np.ravel(X))
            self.density_ = histogram_density(maps.Orbit(gamma, values), self.n_bins)
        self.h_half_ = self.density_.h_half
        self.mean_x_ = self.density_.mean_x
        return self

    def transform(self, X):
        check_is_fitted(self, "density_")
        X = check_unit_interval(X, "X")
        return self.density_.cdf(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "density_")
        return self.density_.quantile(check_unit_interval(X, "X"))
