"""Totally right-skewed stable limit laws and the reference samples built on them.

For gamma in (1/2, 1) the normalised empirical process converges to
``C_gamma h(1/2)^gamma (1 - F(t)) Z`` with ``Z ~ S_alpha(1, 1, 0)`` and
``alpha = 1/gamma``; at gamma = 1/2 it converges to ``sqrt(h(1/2)) (1 - F(t)) Z``
with ``Z`` standard normal. The limit is rank one, so every norm of it is a
fixed constant times ``|Z|`` (or ``Z^2`` for the quadratic statistic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from ._validation import DomainError, check_count, check_gamma, check_seed
from .empirical import check_stat


def _gamma_fn(z):
    """Gamma function, using reflection for negative non-integer ``z``."""
    if z > 0:
        return math.gamma(z)
    if z == int(z):
        raise DomainError(f"Gamma has a pole at {z}")
    return math.pi / (math.sin(math.pi * z) * math.gamma(1.0 - z))


def c_gamma(gamma):
    """``(Gamma(1 - 1/g) cos(pi / (2g)))^g / (4^g g)`` for g in (1/2, 1)."""
    gamma = check_gamma(gamma, strict_long_range=True)
    # both factors are negative on (1/2, 1); their product is positive
    base = _gamma_fn(1.0 - 1.0 / gamma) * math.cos(math.pi / (2.0 * gamma))
    return base**gamma / (4.0**gamma * gamma)


@dataclass(frozen=True)
class StableSpec:
    gamma: float

    def __post_init__(self):
        check_gamma(self.gamma, long_range=True)

    @property
    def alpha(self):
        return 1.0 / self.gamma

    skew = 1.0
    scale = 1.0
    shift = 0.0

    @property
    def gaussian(self):
        return self.gamma == 0.5

    @property
    def c_gamma(self):
        return None if self.gaussian else c_gamma(self.gamma)


def stable_cf(t, gamma):
    """``E exp(itZ) = exp(-|t|^a (1 - i sign(t) tan(pi a / 2)))`` with ``a = 1/gamma``."""
    gamma = check_gamma(gamma, strict_long_range=True)
    a = 1.0 / gamma
    t = np.asarray(t, dtype=np.float64)
    out = np.exp(-np.abs(t) ** a * (1.0 - 1j * np.sign(t) * math.tan(math.pi * a / 2.0)))
    return complex(out) if out.ndim == 0 else out


def _cms(gen, alpha, count):
    """Chambers-Mallows-Stuck draws from ``S_alpha(1, 1, 0)``, alpha != 1."""
    v = gen.uniform(-math.pi / 2.0, math.pi / 2.0, count)
    w = gen.standard_exponential(count)
    t = math.tan(math.pi * alpha / 2.0)
    b = math.atan(t) / alpha
    s = (1.0 + t * t) ** (1.0 / (2.0 * alpha))
    arg = alpha * (v + b)
    return (
        s
        * np.sin(arg)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - arg) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_stable(gamma, seed, count, *, replicate=0):
    """``count`` draws of ``Z ~ S_{1/gamma}(1, 1, 0)``; deterministic in ``seed``."""
    gamma = check_gamma(gamma, strict_long_range=True)
    gen = rng.stream(check_seed(seed), replicate, rng.STABLE)
    return _cms(gen, 1.0 / gamma, check_count(count, "count"))


def limit_scale(gamma, d):
    """``sqrt(h(1/2))`` at gamma = 1/2, ``C_gamma h(1/2)^gamma`` above."""
    gamma = check_gamma(gamma, long_range=True)
    if gamma == 0.5:
        return math.sqrt(d.h_half)
    return c_gamma(gamma) * d.h_half**gamma


def limit_constant(gamma, d, stat):
    """Constant ``c`` with limit law ``c |Z|`` (l2, w1) or ``c Z^2`` (cvm)."""
    check_stat(stat)
    scale = limit_scale(gamma, d)
    if stat == "l2":
        return scale * d.survival_l2_norm
    if stat == "w1":
        # int_0^1 (1 - F) dt = int_0^1 x h(x) dx
        return scale * d.mean_x
    # after t -> F^-1(t) the shape is (1 - t), whose squared norm is 1/3
    return scale * scale / 3.0


def reference_sample(gamma, d, stat, seed, count, *, replicate=0):
    """Draws from the limit law of the normalised statistic ``stat``."""
    gamma = check_gamma(gamma, long_range=True)
    count = check_count(count, "count")
    if gamma == 0.5:
        z = rng.stream(check_seed(seed), replicate, rng.STABLE).standard_normal(count)
    else:
        z = sample_stable(gamma, seed, count, replicate=replicate)
    c = limit_constant(gamma, d, stat)
    return c * z * z if stat == "cvm" else c * np.abs(z)
