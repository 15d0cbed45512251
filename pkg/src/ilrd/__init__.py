"""Empirical processes of intermittent maps: Ulam densities, goodness-of-fit
statistics, stable limit laws, and the Monte Carlo checks built on them."""

from ._validation import (
    ConvergenceError,
    DomainError,
    InsufficientSignalError,
    LaminarUnderflowError,
)
from .density import PiecewiseDensity, UlamDensityEstimator, stationary_density, ulam_density
from .empirical import (
    EmpiricalProcessStatistic,
    NormalizationRule,
    cvm_statistic,
    empirical_process,
    l2_norm,
    normalized_statistic,
    wasserstein1,
)
from .maps import ObservableG, Orbit, apply_map, generate_backward_chain, generate_orbit
from .stable import c_gamma, reference_sample, sample_stable, stable_cf

__all__ = [
    "ConvergenceError",
    "DomainError",
    "EmpiricalProcessStatistic",
    "InsufficientSignalError",
    "LaminarUnderflowError",
    "NormalizationRule",
    "ObservableG",
    "Orbit",
    "PiecewiseDensity",
    "UlamDensityEstimator",
    "apply_map",
    "c_gamma",
    "cvm_statistic",
    "empirical_process",
    "generate_backward_chain",
    "generate_orbit",
    "l2_norm",
    "normalized_statistic",
    "reference_sample",
    "sample_stable",
    "stable_cf",
    "stationary_density",
    "ulam_density",
    "wasserstein1",
]
