"""Generalized Pareto distribution kernel.

All functions take a :class:`GpdParams` and accept scalars or array-likes,
returning a Python float for scalar input and an ``ndarray`` otherwise.
The exponential limit ``gamma -> 0`` is evaluated explicitly so that every
quantity is continuous in the shape parameter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

# below this |gamma| (or |gamma * x / sigma|) the exponential formulas are used
ZERO_GAMMA = 1e-12


@dataclass(frozen=True)
class GpdParams:
    """Shape ``gamma`` and scale ``sigma`` of ``H_gamma(x / sigma)``."""

    gamma: float
    sigma: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.sigma)):
            raise InvalidInput(f"non-finite GPD parameters ({self.gamma}, {self.sigma})")
        if self.sigma <= 0:
            raise InvalidInput(f"sigma must be positive, got {self.sigma}")


def _out(values, scalar):
    return float(values) if scalar else values


def _as_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} must be finite")
    return arr, arr.ndim == 0


def _log_survival(gamma, z):
    """``log(1 - H_gamma(z))`` on the open support, ``z >= 0``."""
    w = gamma * z
    if abs(gamma) < ZERO_GAMMA:
        return -z
    small = np.abs(w) < ZERO_GAMMA
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log1p(w) / gamma
    return np.where(small, -z, out)


def support_upper(p: GpdParams) -> float:
    """Upper endpoint of the support: ``inf`` for ``gamma >= 0``, else ``sigma/|gamma|``."""
    if p.gamma >= 0:
        return math.inf
    return p.sigma / -p.gamma


def cdf(p: GpdParams, x):
    """Distribution function ``H_gamma(x / sigma)``.

    Returns 0 for ``x <= 0`` and 1 at or beyond a finite upper endpoint.
    """
    x, scalar = _as_array(x)
    z = x / p.sigma
    upper = support_upper(p)
    inside = (x > 0) & (x < upper)
    zi = np.where(inside, z, 0.0)
    res = -np.expm1(_log_survival(p.gamma, zi))
    res = np.where(inside, res, np.where(x <= 0, 0.0, 1.0))
    return _out(res, scalar)


def log_pdf(p: GpdParams, x):
    """Log density; ``-inf`` outside the support and at a finite upper endpoint."""
    x, scalar = _as_array(x)
    z = x / p.sigma
    inside = (x >= 0) & (x < support_upper(p))
    zi = np.where(inside, z, 0.0)
    g = p.gamma
    if abs(g) < ZERO_GAMMA:
        body = -zi
    else:
        w = g * zi
        body = np.where(np.abs(w) < ZERO_GAMMA, -zi, -(1.0 / g + 1.0) * np.log1p(w))
    res = np.where(inside, body - math.log(p.sigma), -np.inf)
    return _out(res, scalar)


def pdf(p: GpdParams, x):
    """Density ``(1/sigma) (1 + gamma x/sigma)^(-1/gamma - 1)``."""
    lp = log_pdf(p, x)
    return _out(np.exp(lp), np.ndim(lp) == 0)


def quantile(p: GpdParams, u):
    """Inverse of :func:`cdf` on ``[0, 1)``."""
    u, scalar = _as_array(u, "u")
    if np.any((u < 0) | (u >= 1)):
        raise InvalidInput("quantile level must lie in [0, 1)")
    log_tail = np.log1p(-u)
    g = p.gamma
    if abs(g) < ZERO_GAMMA:
        res = -p.sigma * log_tail
    else:
        res = p.sigma * np.expm1(-g * log_tail) / g
    return _out(res, scalar)


def make_rng(seed=None) -> np.random.Generator:
    """Generator from an int, a ``SeedSequence`` or an existing ``Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def sample(p: GpdParams, count: int, seed=None) -> np.ndarray:
    """``count`` inverse-transform draws; identical seeds give identical draws."""
    if count < 0:
        raise InvalidInput("count must be non-negative")
    rng = make_rng(seed)
    u = rng.random(count)
    return np.asarray(quantile(p, u), dtype=float).reshape(count)
