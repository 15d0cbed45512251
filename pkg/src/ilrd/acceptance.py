"""Acceptance gates: thresholds, the runs that feed them, and their evaluation.

Each criterion is split into parts (one per gamma or statistic). A part is a
:class:`Gate` holding named checks. The CLI attaches gates to its JSON
output when a run matches an acceptance configuration, and ``report``
collates them in criterion order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import density as dens, empirical, experiments as ex, maps, rng, stable

SEED = 7

TITLES = {
    1: "density shape",
    2: "doubling-map limit",
    3: "covariance decay",
    4: "beta(k) rate",
    5: "stable-regime limit laws",
    6: "Gaussian-regime limit laws",
    7: "Fourier tail bound",
    8: "maximal inequality audit",
    9: "time reversal",
    10: "almost-sure trend",
    11: "internal consistency",
}

# criterion 1 / 2
SHAPE_GAMMAS = (0.5, 0.6, 0.75, 0.9)
SHAPE_BINS = 2**16
ROW_ERROR_MAX = 1e-12
MONOTONE_SLACK = 0.02
XGAMMA_RATIO_MAX = 10.0
ECDF_N = 10**7
ECDF_SUP_MAX = 0.01
SHAPE_SECONDS = 120.0
DOUBLING_GAMMA = 0.01
DOUBLING_DEV_MAX = 0.05
# criterion 3
COV_N = 10**8
COV_TARGETS = {0.75: (-1.0 / 3.0, 0.15), 0.6: (-2.0 / 3.0, 0.2)}
# criterion 4
BETA_GAMMAS = (0.6, 0.75)
BETA_K_MAX = 256
BETA_WINDOW = (8, 256)
BETA_SLOPE_TOL = 0.2
BETA0_RANGE = (0.70, 0.80)
# criteria 5 / 6
LIMIT_REF_COUNT = 10**5
STABLE_GAMMA = 0.75
STABLE_N = (10**3, 10**5)
STABLE_R = 1000
STABLE_KS_MAX = 0.08
GAUSS_GAMMA = 0.5
GAUSS_N = (10**4, 10**6)
GAUSS_R = 500
GAUSS_KS_MAX = 0.15
GAUSS_STATS = ("w1", "cvm")
# criterion 7
FOURIER_POINTS = 10**4
FOURIER_M = (8, 64, 512)
FOURIER_K_MAX = 4096
FOURIER_SPOT = (0.1, 0.25, 0.5, 1.0 / 3.0, 0.9)
FOURIER_SPOT_K_MAX = 10**7
FOURIER_QUAD_TOL = 1e-6
# criterion 8
AUDIT_GAMMA = 0.75
AUDIT_N = 10**4
AUDIT_Q = 32
AUDIT_X = (32.0, 64.0, 128.0, 256.0)
AUDIT_R = 500
# criterion 9
REVERSAL_GAMMA = 0.75
REVERSAL_N = 10**6
REVERSAL_R = 500
REVERSAL_KS_MAX = 0.01
REVERSAL_CORR_MAX = 0.01
# criterion 10
TREND_GAMMA = 0.75
TREND_DELTA = 1.0
TREND_SEEDS = 20
TREND_MIN_DECREASING = 16
TREND_MEDIAN_MAX = 0.5
# criterion 11
CONSISTENCY_TOL = 1e-4
CLOSED_FORM_TOL = 1e-10
C_GAMMA_TOL = 1e-6
# 40-digit evaluations of the closed form, frozen
C_GAMMA_ORACLE = {2.0 / 3.0: 1.0984439156711424473, 0.75: 0.80205574909328169751}


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: str
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": self.value, "limit": self.limit, "passed": self.passed}


def at_most(name, value, limit):
    return Check(name, float(value), f"<= {limit:g}", bool(value <= limit))


def below(name, value, limit):
    return Check(name, float(value), f"< {limit:g}", bool(value < limit))


def at_least(name, value, limit):
    return Check(name, float(value), f">= {limit:g}", bool(value >= limit))


def within(name, value, lo, hi):
    return Check(name, float(value), f"in [{lo:g}, {hi:g}]", bool(lo <= value <= hi))


def holds(name, flag):
    return Check(name, float(bool(flag)), "true", bool(flag))


@dataclass(frozen=True)
class Gate:
    criterion: int
    part: str
    checks: tuple
    metrics: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failing(self):
        return [c.name for c in self.checks if not c.passed]

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        detail = ", ".join(f"{c.name}={c.value:.6g} ({c.limit})" for c in self.checks)
        head = f"criterion {self.criterion:2d} {TITLES[self.criterion]}" if self.criterion else "check"
        return f"{head} [{self.part}]: {status}  {detail}"

    def to_dict(self):
        return {
            "criterion": self.criterion,
            "part": self.part,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, data):
        checks = tuple(Check(c["name"], c["value"], c["limit"], c["passed"]) for c in data["checks"])
        return cls(data["criterion"], data["part"], checks, data.get("metrics", {}))


def combine(criterion, gates):
    """Overall verdict of a criterion from its parts."""
    return all(g.passed for g in gates if g.criterion == criterion) and any(
        g.criterion == criterion for g in gates
    )


# ------------------------------------------------------------ criteria 1, 2


def density_gate(gamma, ulam, d, ecdf_sup, seconds):
    r = dens.shape_report(d, slack=MONOTONE_SLACK, ratio_limit=XGAMMA_RATIO_MAX)
    checks = (
        at_most("row_error", ulam.row_error, ROW_ERROR_MAX),
        holds("non_increasing", r["non_increasing"]),
        holds("h_at_1_positive", r["last_positive"]),
        at_most("xgamma_ratio", r["xgamma_ratio"], XGAMMA_RATIO_MAX),
        at_most("ecdf_sup", ecdf_sup, ECDF_SUP_MAX),
        at_most("seconds", seconds, SHAPE_SECONDS),
    )
    return Gate(1, f"gamma={gamma:g}", checks,
                {"h_half": d.h_half, "mean_x": d.mean_x, "h_last": r["h_last"]})


def doubling_deviation(d, m_bins):
    """``max |h - 1|`` over the uniform bins, first bin excluded."""
    h = dens.bin_masses(d, m_bins) * m_bins
    return float(np.max(np.abs(h[1:] - 1.0)))


def doubling_gate(d, m_bins):
    return Gate(2, f"gamma={d.gamma:g}",
                (at_most("max_dev_from_1", doubling_deviation(d, m_bins), DOUBLING_DEV_MAX),))


def density_run(gamma, bins=SHAPE_BINS, n=ECDF_N, seed=SEED):
    """Ulam estimate plus the single-orbit ECDF comparison; returns (ulam, d, sup, seconds)."""
    t0 = time.perf_counter()
    ulam = dens.build_ulam_matrix(gamma, bins)
    d = dens.stationary_density(ulam)
    orbit = maps.generate_orbit(gamma, n, seed=seed)
    sup = empirical.raw_statistics(orbit.values, d)[3]
    return ulam, d, sup, time.perf_counter() - t0


def criterion_1(seed=SEED):
    out = []
    for g in SHAPE_GAMMAS:
        ulam, d, sup, secs = density_run(g, seed=seed)
        out.append(density_gate(g, ulam, d, sup, secs))
    return out


def criterion_2():
    d = dens.stationary_density(dens.build_ulam_matrix(DOUBLING_GAMMA, SHAPE_BINS))
    return [doubling_gate(d, SHAPE_BINS)]


# -------------------------------------------------------------- criterion 3


def covariance_gate(fit):
    target, tol = COV_TARGETS.get(fit.gamma, (fit.expected_slope, 0.15))
    return Gate(3, f"gamma={fit.gamma:g}",
                (within("slope", fit.slope, target - tol, target + tol),),
                {"slope_stderr": fit.slope_stderr, "usable_lags": int(fit.used.sum())})


def criterion_3(seed=SEED):
    return [covariance_gate(ex.covariance_decay(g, N=COV_N, seed=seed)) for g in COV_TARGETS]


# -------------------------------------------------------------- criterion 4


def beta_gate(profile):
    slope, se = profile.slope(*BETA_WINDOW)
    target = profile.expected_slope
    return Gate(4, f"gamma={profile.gamma:g}", (
        within("slope", slope, target - BETA_SLOPE_TOL, target + BETA_SLOPE_TOL),
        within("beta0", profile.beta_values[0], *BETA0_RANGE),
    ), {"slope_stderr": se, "non_increasing": profile.is_non_increasing()})


def criterion_4():
    return [beta_gate(ex.beta_profile(g, ex.BETA_BINS, BETA_K_MAX)) for g in BETA_GAMMAS]


# ---------------------------------------------------------- criteria 5, 6


def limit_gate(criterion, stat, ks_small, ks_large, n_small, n_large, ks_max):
    return Gate(criterion, stat, (
        at_most(f"ks_n{n_large}", ks_large, ks_max),
        below(f"ks_n{n_large}_minus_ks_n{n_small}", ks_large - ks_small, 0.0),
    ), {f"ks_n{n_small}": ks_small})


def limit_ks_table(gamma, n_values, R, stats, seed, d, ref_count=LIMIT_REF_COUNT, threads=1):
    """``{stat: [KS at each n]}`` against one reference draw per statistic."""
    refs = {s: stable.reference_sample(gamma, d, s, seed, ref_count) for s in stats}
    table = {s: [] for s in stats}
    samples = {}
    for n in n_values:
        mc = ex.monte_carlo_limits(gamma, n, R, seed, stats=stats, density=d, threads=threads)
        samples[n] = mc
        for s in stats:
            table[s].append(ex.ks_two_sample(mc[s].values, refs[s]))
    return table, samples, refs


def criterion_5(seed=SEED):
    d = dens.ulam_density(STABLE_GAMMA)
    table, _, _ = limit_ks_table(STABLE_GAMMA, STABLE_N, STABLE_R, empirical.STATS, seed, d)
    return [limit_gate(5, s, *table[s], *STABLE_N, STABLE_KS_MAX) for s in empirical.STATS]


def criterion_6(seed=SEED):
    d = dens.ulam_density(GAUSS_GAMMA)
    table, _, _ = limit_ks_table(GAUSS_GAMMA, GAUSS_N, GAUSS_R, GAUSS_STATS, seed, d)
    return [limit_gate(6, s, *table[s], *GAUSS_N, GAUSS_KS_MAX) for s in GAUSS_STATS]


# -------------------------------------------------------------- criterion 7


def projection_residual_quadrature(x, m):
    """``||1{t >= x} - P_m 1{t >= x}||^2`` by adaptive quadrature (independent oracle)."""
    k = np.arange(1, m + 1)
    a = -np.sqrt(2.0) * np.sin(2.0 * np.pi * k * x) / (2.0 * np.pi * k)
    b = np.sqrt(2.0) * (np.cos(2.0 * np.pi * k * x) - 1.0) / (2.0 * np.pi * k)

    def resid(t):
        proj = (1.0 - x) + np.sqrt(2.0) * np.sum(
            a * np.cos(2.0 * np.pi * k * t) + b * np.sin(2.0 * np.pi * k * t)
        )
        return ((1.0 if t >= x else 0.0) - proj) ** 2

    opts = {"limit": 20 * m, "epsabs": 1e-13, "epsrel": 1e-12}
    left = integrate.quad(resid, 0.0, x, **opts)[0] if x > 0 else 0.0
    right = integrate.quad(resid, x, 1.0, **opts)[0] if x < 1 else 0.0
    return left + right


def criterion_7(seed=SEED):
    x = rng.stream(seed, 0, rng.ORBIT).random(FOURIER_POINTS)
    bound_checks = []
    for m in FOURIER_M:
        bound = 2.0 / (math.pi**2 * m)
        partial = empirical.fourier_tail_norm_sq(x, m, FOURIER_K_MAX)
        full = empirical.fourier_full_tail(x, m)
        bound_checks.append(at_most(f"max_tail_over_bound_m{m}",
                                    max(partial.max(), full.max()) / bound, 1.0))
    gap = 0.0
    for xs in FOURIER_SPOT:
        exact = empirical.fourier_tail_norm_sq(xs, 8, FOURIER_SPOT_K_MAX)
        gap = max(gap, abs(exact - projection_residual_quadrature(xs, 8)))
    return [Gate(7, "fourier", tuple(bound_checks) + (at_most("quadrature_gap", gap, FOURIER_QUAD_TOL),))]


# -------------------------------------------------------------- criterion 8


def audit_gate(audit):
    return Gate(8, f"gamma={audit.gamma:g}", tuple(
        at_most(f"lhs_over_rhs_x{xi:g}", l / r, 1.0) for xi, l, r in zip(audit.x, audit.lhs, audit.rhs)
    ), {"lhs": audit.lhs, "rhs": audit.rhs})


def criterion_8(seed=SEED):
    return [audit_gate(ex.maximal_inequality_audit(AUDIT_GAMMA, AUDIT_N, AUDIT_Q, AUDIT_X,
                                                   AUDIT_R, seed))]


# -------------------------------------------------------------- criterion 9


def reversal_gate(rep):
    checks = [
        at_most("marginal_ks", rep.marginal_ks, REVERSAL_KS_MAX),
        at_most("corr_gap", rep.corr_gap, REVERSAL_CORR_MAX),
    ]
    for p, margin in zip(rep.probs, rep.domination_margin):
        checks.append(at_least(f"domination_margin_p{p:g}", margin, 0.0))
    return Gate(9, f"gamma={rep.gamma:g}", tuple(checks), {
        "forward_corr": rep.forward_corr, "backward_corr": rep.backward_corr,
        "forward_quantiles": rep.forward_quantiles, "backward_quantiles": rep.backward_quantiles,
        "quantile_stderr": rep.quantile_stderr,
    })


def criterion_9(seed=SEED):
    return [reversal_gate(ex.reversal_check(REVERSAL_GAMMA, REVERSAL_N, REVERSAL_R, seed))]


# ------------------------------------------------------------- criterion 10


def trend_ratios(gamma, delta, replicates, seed, checkpoints=ex.DEFAULT_CHECKPOINTS):
    d = dens.ulam_density(gamma)
    paths = [ex.almost_sure_trend(gamma, delta, checkpoints, seed, replicate=r, density=d)
             for r in range(replicates)]
    return np.array([p[-1, 1] / p[0, 1] for p in paths]), paths


def trend_gate(ratios):
    return Gate(10, f"gamma={TREND_GAMMA:g}", (
        at_least("replicates_decreasing", int(np.sum(ratios < 1.0)), TREND_MIN_DECREASING),
        below("median_ratio", float(np.median(ratios)), TREND_MEDIAN_MAX),
    ), {"ratios": ratios})


def criterion_10(seed=SEED):
    return [trend_gate(trend_ratios(TREND_GAMMA, TREND_DELTA, TREND_SEEDS, seed)[0])]


# ------------------------------------------------------------- criterion 11


def criterion_11(seed=SEED):
    d = dens.ulam_density(0.75)
    worst_l2 = worst_w1 = worst_cvm = 0.0
    t = (np.arange(empirical.QUADRATURE_POINTS) + 0.5) / empirical.QUADRATURE_POINTS
    for r in range(5):
        orbit = maps.generate_orbit(0.75, 1000, seed=seed, replicate=r)
        ep = empirical.empirical_process(orbit, d)
        exact, quad = empirical.l2_norm(ep, with_quadrature=True)
        worst_l2 = max(worst_l2, abs(exact - quad))
        worst_w1 = max(worst_w1, abs(empirical.wasserstein1(ep) - np.mean(np.abs(ep(t)))))
        worst_cvm = max(worst_cvm, abs(empirical.cvm_statistic(orbit, d) - empirical.cvm_direct(orbit, d)))
    uni = empirical.uniform_reference(0.75)
    half = maps.Orbit(0.75, [0.5])
    ep = empirical.empirical_process(half, uni)
    closed = max(
        abs(empirical.wasserstein1(ep) - 0.25),
        abs(empirical.cvm_statistic(half, uni) - 1.0 / 12.0),
        abs(empirical.l2_norm(ep) - 1.0 / math.sqrt(12.0)),
    )
    cg = max(abs(stable.c_gamma(g) - v) for g, v in C_GAMMA_ORACLE.items())
    return [Gate(11, "consistency", (
        at_most("l2_exact_vs_quadrature", worst_l2, CONSISTENCY_TOL),
        at_most("w1_exact_vs_quadrature", worst_w1, CONSISTENCY_TOL),
        at_most("cvm_direct_vs_transformed", worst_cvm, CONSISTENCY_TOL),
        at_most("closed_form_error", closed, CLOSED_FORM_TOL),
        at_most("c_gamma_error", cg, C_GAMMA_TOL),
    ))]


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11,
}

# CLI invocations whose outputs the report collates; 7 and 11 are computed inline
RUNS = {
    1: [["density", "--gamma", str(g), "--bins", str(SHAPE_BINS), "--n", str(ECDF_N),
         "--seed", str(SEED)] for g in SHAPE_GAMMAS],
    2: [["density", "--gamma", str(DOUBLING_GAMMA), "--bins", str(SHAPE_BINS), "--n", str(ECDF_N),
         "--seed", str(SEED)]],
    3: [["covdecay", "--gamma", str(g), "--n", str(COV_N), "--seed", str(SEED)] for g in COV_TARGETS],
    4: [["beta", "--gamma", str(g), "--bins", str(ex.BETA_BINS), "--n", str(BETA_K_MAX),
         "--seed", str(SEED)] for g in BETA_GAMMAS],
    5: [["limit", "--gamma", str(STABLE_GAMMA), "--n", str(STABLE_N[1]), "--replicates",
         str(STABLE_R), "--stat", s, "--seed", str(SEED)] for s in empirical.STATS],
    6: [["limit", "--gamma", str(GAUSS_GAMMA), "--n", str(GAUSS_N[1]), "--replicates",
         str(GAUSS_R), "--stat", s, "--seed", str(SEED)] for s in GAUSS_STATS],
    8: [["maxineq", "--gamma", str(AUDIT_GAMMA), "--n", str(AUDIT_N), "--replicates",
         str(AUDIT_R), "--seed", str(SEED)]],
    9: [["reversal", "--gamma", str(REVERSAL_GAMMA), "--n", str(REVERSAL_N), "--replicates",
         str(REVERSAL_R), "--seed", str(SEED)]],
    10: [["trend", "--gamma", str(TREND_GAMMA), "--delta", str(TREND_DELTA), "--n", "10000000",
          "--replicates", str(TREND_SEEDS), "--seed", str(SEED)]],
}
INLINE = (7, 11)
