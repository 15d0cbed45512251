"""The intermittent map, its inverse branches, and orbit generation.

The map on [0, 1] is ``x + x (2x)^gamma`` below 1/2 and ``2x - 1`` on
[1/2, 1]. It has a neutral fixed point at 0, so forward orbits spend long
laminar stretches near the origin before being ejected.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, rng
from ._validation import (
    ConvergenceError,
    DomainError,
    LaminarUnderflowError,
    check_count,
    check_gamma,
    check_seed,
    check_unit_interval,
)

INVERSE_TOL = 1e-14
INVERSE_MAX_ITER = 200
DEFAULT_BURN_IN = 1000
MAX_RENORM_DEVIATION = 0.05

FORWARD = "forward-map"
BACKWARD = "backward-chain"
_DIRECTION_CODES = {FORWARD: 0, BACKWARD: 1}

_MAGIC = b"ILRD"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHB9x")
_META = struct.Struct("<dQQQ")


def apply_map(x, gamma):
    """Evaluate the map at ``x`` (scalar or array)."""
    gamma = check_gamma(gamma)
    arr = check_unit_interval(x)
    if arr.ndim == 0:
        return _kernels.tmap(float(arr), gamma)
    return _kernels.tmap_many(np.ascontiguousarray(arr.ravel()), gamma).reshape(arr.shape)


def map_derivative(x, gamma):
    gamma = check_gamma(gamma)
    arr = check_unit_interval(x)
    return np.where(arr < 0.5, 1.0 + (1.0 + gamma) * (2.0 * arr) ** gamma, 2.0)


def inverse_branches(y, gamma, tol=INVERSE_TOL):
    """Both preimages of ``y``: one in [0, 1/2] and one in [1/2, 1].

    The right preimage is exact. The left one is found by bracketed Newton
    iteration with a bisection fallback.

    Raises
    ------
    ConvergenceError
        If the solver exceeds its iteration cap.
    """
    gamma = check_gamma(gamma)
    if not tol > 0:
        raise DomainError("tol must be positive")
    arr = check_unit_interval(y, "y")
    flat = np.ascontiguousarray(arr.ravel())
    left, bad = _kernels.left_inverse_many(flat, gamma, float(tol), INVERSE_MAX_ITER)
    if bad >= 0:
        raise ConvergenceError(
            f"left inverse did not converge for y={flat[bad]!r} within {INVERSE_MAX_ITER} steps"
        )
    right = 0.5 * (flat + 1.0)
    if arr.ndim == 0:
        return float(left[0]), float(right[0])
    return left.reshape(arr.shape), right.reshape(arr.shape)


@dataclass(frozen=True)
class Orbit:
    """A finite trajectory of the map or of its time-reversed Markov chain."""

    gamma: float
    values: np.ndarray
    seed: int = 0
    burn_in: int = 0
    direction: str = FORWARD

    def __post_init__(self):
        check_gamma(self.gamma)
        if self.direction not in _DIRECTION_CODES:
            raise DomainError(f"unknown orbit direction {self.direction!r}")
        values = check_unit_interval(self.values, "orbit values")
        values = np.ascontiguousarray(values, dtype=np.float64).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def to_bytes(self):
        header = _HEADER.pack(_MAGIC, _FORMAT_VERSION, _DIRECTION_CODES[self.direction])
        meta = _META.pack(self.gamma, self.seed, self.burn_in, len(self))
        return header + meta + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size + _META.size:
            raise ValueError("truncated orbit file")
        magic, version, code = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported orbit format version {version}")
        gamma, seed, burn_in, n = _META.unpack_from(data, _HEADER.size)
        start = _HEADER.size + _META.size
        if len(data) != start + 8 * n:
            raise ValueError("orbit payload length does not match header")
        values = np.frombuffer(data, dtype="<f8", count=n, offset=start).astype(np.float64)
        direction = {v: k for k, v in _DIRECTION_CODES.items()}[code]
        return cls(gamma, values, seed=seed, burn_in=burn_in, direction=direction)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x"])
        for v in self.values:
            writer.writerow([f"{v:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _raise_underflow(status, gamma, seed):
    where = f"burn-in step {-2 - status}" if status < -1 else f"step {status}"
    raise LaminarUnderflowError(
        f"iterate fell below 2^-60 at {where} (gamma={gamma}, seed={seed})"
    )


def generate_orbit(gamma, n, burn_in=DEFAULT_BURN_IN, seed=0, *, replicate=0, x0=None):
    """Forward orbit of length ``n`` from a uniform start after ``burn_in`` steps.

    ``x0`` overrides the random initial point. Exact zero is the fixed point
    and is allowed; positive iterates below 2^-60 raise
    :class:`LaminarUnderflowError`.
    """
    gamma = check_gamma(gamma)
    n = check_count(n)
    burn_in = check_count(burn_in, "burn_in", minimum=0)
    seed = check_seed(seed)
    if x0 is None:
        x0 = rng.open_uniform(rng.stream(seed, replicate, rng.ORBIT))
    else:
        x0 = float(check_unit_interval(x0, "x0"))
    values, status = _kernels.forward_orbit(x0, gamma, burn_in, n, _kernels.UNDERFLOW_FLOOR)
    if status != -1:
        _raise_underflow(status, gamma, seed)
    return Orbit(gamma, values, seed=seed, burn_in=burn_in, direction=FORWARD)


def generate_backward_chain(gamma, n, seed, density, *, replicate=0, return_probabilities=False):
    """Stationary time-reversed chain: ``(X_1, ..., X_n)`` has the law of ``(T^n, ..., T)``.

    The start is drawn from ``density`` by inverse transform; each step moves
    to the left or right preimage with probability proportional to
    ``h(y) / |T'(y)|``.
    """
    gamma = check_gamma(gamma)
    n = check_count(n)
    seed = check_seed(seed)
    if abs(density.gamma - gamma) > 1e-15:
        raise DomainError("density was estimated for a different gamma")
    gen = rng.stream(seed, replicate, rng.BACKWARD)
    u = gen.random(n)
    x0 = float(density.quantile(rng.open_uniform(gen)))
    mids, phi = density.singular_profile()
    values, pleft, status = _kernels.backward_chain(
        x0, u, gamma, mids, phi, INVERSE_TOL, INVERSE_MAX_ITER, MAX_RENORM_DEVIATION
    )
    if status <= -2:
        raise ConvergenceError(f"left inverse failed at chain step {-2 - status}")
    if status >= 0:
        raise DomainError(
            f"branch weights at x={values[status - 1]!r} sum to a factor more than "
            f"{MAX_RENORM_DEVIATION} away from 1; the density estimate is unreliable there"
        )
    orbit = Orbit(gamma, values, seed=seed, burn_in=0, direction=BACKWARD)
    if return_probabilities:
        return orbit, pleft
    return orbit


@dataclass(frozen=True)
class ObservableG:
    """A monotone observable applied to the iterates before forming the empirical CDF.

    ``kind`` is ``"identity"``, ``"cdf-of-nu"`` (requires ``density``) or
    ``"user-piecewise-monotone"`` (linear interpolation through
    ``breakpoints``/``values``).
    """

    kind: str = "identity"
    breakpoints: np.ndarray | None = None
    values: np.ndarray | None = None
    holder_exponent: float = 1.0
    density: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("identity", "cdf-of-nu", "user-piecewise-monotone"):
            raise DomainError(f"unknown observable kind {self.kind!r}")
        if not 0.0 < self.holder_exponent <= 1.0:
            raise DomainError("holder_exponent must lie in (0, 1]")
        if self.kind == "cdf-of-nu" and self.density is None:
            raise DomainError("cdf-of-nu observable needs a density")
        if self.kind == "user-piecewise-monotone":
            bp = np.asarray(self.breakpoints, dtype=np.float64)
            vals = np.asarray(self.values, dtype=np.float64)
            if bp.ndim != 1 or bp.shape != vals.shape or bp.size < 2:
                raise DomainError("breakpoints and values must be 1-D arrays of equal length >= 2")
            if np.any(np.diff(bp) <= 0) or bp[0] != 0.0 or bp[-1] != 1.0:
                raise DomainError("breakpoints must increase strictly from 0 to 1")
            d = np.diff(vals)
            if not (np.all(d >= 0) or np.all(d <= 0)):
                raise DomainError("observable is not monotone")
            object.__setattr__(self, "breakpoints", bp)
            object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, func, n_points=4097, holder_exponent=1.0):
        bp = np.linspace(0.0, 1.0, n_points)
        return cls("user-piecewise-monotone", bp, np.asarray(func(bp), dtype=np.float64),
                   holder_exponent)

    @property
    def increasing(self):
        if self.kind != "user-piecewise-monotone":
            return True
        return bool(self.values[-1] >= self.values[0])

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return x
        if self.kind == "cdf-of-nu":
            return self.density.cdf(x)
        return np.interp(x, self.breakpoints, self.values)
