"""Second-order bias function, limit law of the GPD MLE, and plug-in intervals.

With ``k`` top order statistics, ``sqrt(k) (gamma_hat - gamma0,
sigma_hat / a(k/n) - 1)`` is asymptotically bivariate normal with mean
``lambda * mu(gamma0, rho)`` and covariance ``Sigma(gamma0)``.  ``mu`` is
available in closed form (:func:`bias_mu`) and as quadrature of the
defining bias integrals (:func:`bias_mu_numeric`), the latter serving as an
independent check of the former.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .errors import InvalidInput, QuadratureFailure

# |value| below this counts as zero when selecting a regime
CASE_EPS = 1e-14
QUAD_ABS_TOL = 1e-10


def _is_zero(v):
    return abs(v) < CASE_EPS


@dataclass(frozen=True)
class SecondOrderSpec:
    gamma0: float
    rho: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > -0.5:
            raise InvalidInput(f"gamma0 must exceed -1/2, got {self.gamma0}")
        if not self.rho <= 0:
            raise InvalidInput(f"rho must be <= 0, got {self.rho}")
        if not math.isfinite(self.lam):
            raise InvalidInput("lambda must be finite")


@dataclass(frozen=True)
class AsymptoticLaw:
    mu: np.ndarray
    Sigma: np.ndarray
    lam: float
    gamma0: float

    @property
    def mean(self) -> np.ndarray:
        return self.lam * self.mu

    @property
    def det(self) -> float:
        s = self.Sigma
        return float(s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0])

    @property
    def stderr(self) -> np.ndarray:
        """Limit standard deviations of the two standardized coordinates."""
        return np.sqrt(np.diag(self.Sigma))

    def to_dict(self) -> dict:
        return {
            "gamma0": self.gamma0,
            "lambda": self.lam,
            "mu": self.mu.tolist(),
            "lambda_mu": self.mean.tolist(),
            "Sigma": self.Sigma.tolist(),
            "det_Sigma": self.det,
        }


def psi(x, gamma0: float, rho: float):
    """Limit function of the second-order condition.

    ``(x^-(gamma0+rho) - 1)/(gamma0+rho)`` for ``rho < 0`` (``-log x`` when
    ``gamma0 + rho = 0``), ``-x^-gamma0 log(x)/gamma0`` for ``gamma0 != rho = 0``
    and ``log(x)^2`` for ``gamma0 = rho = 0``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise InvalidInput("psi is defined for x > 0 only")
    if rho > 0:
        raise InvalidInput(f"rho must be <= 0, got {rho}")
    lx = np.log(arr)
    if rho < 0 and not _is_zero(rho):
        s = gamma0 + rho
        out = -lx if _is_zero(s) else np.expm1(-s * lx) / s
    elif not _is_zero(gamma0):
        out = -np.exp(-gamma0 * lx) * lx / gamma0
    else:
        out = lx * lx
    return float(out) if arr.ndim == 0 else out


def bias_mu(gamma0: float, rho: float) -> np.ndarray:
    """Closed-form bias direction ``mu``; regimes are matched exactly, never blended."""
    if not gamma0 > -0.5:
        raise InvalidInput(f"gamma0 must exceed -1/2, got {gamma0}")
    if rho > 0:
        raise InvalidInput(f"rho must be <= 0, got {rho}")
    if rho < 0 and not _is_zero(rho):
        d = (1.0 - rho) * (gamma0 - rho + 1.0)
        return np.array([rho * (gamma0 + 1.0) / d,
                         (1.0 - 2.0 * rho + gamma0 - rho * gamma0) / d])
    if not _is_zero(gamma0):
        return np.array([1.0, 1.0 / gamma0])
    return np.array([2.0, 0.0])


def _quad(f):
    val, err = integrate.quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=500)
    if not err <= QUAD_ABS_TOL:
        raise QuadratureFailure(f"quadrature error estimate {err:.3g} exceeds {QUAD_ABS_TOL}")
    return val


def bias_mu_numeric(gamma0: float, rho: float) -> np.ndarray:
    """Bias direction by adaptive quadrature of the defining integrals over (0, 1].

    For ``gamma0 != 0``::

        mu1 = (g+1)^2/g * int (t^g - (2g+1) t^(2g)) Psi(t) dt
        mu2 = (g+1)/g   * int ((g+1)(2g+1) t^(2g) - t^g) Psi(t) dt

    and at ``gamma0 = 0`` the limits ``-int (2 + log t) Psi`` and
    ``int (3 + log t) Psi``.
    """
    if not gamma0 > -0.5:
        raise InvalidInput(f"gamma0 must exceed -1/2, got {gamma0}")
    p = lambda t: psi(t, gamma0, rho)
    g = gamma0
    if _is_zero(g):
        mu1 = -_quad(lambda t: (2.0 + math.log(t)) * p(t))
        mu2 = _quad(lambda t: (3.0 + math.log(t)) * p(t))
    else:
        mu1 = (g + 1) ** 2 / g * _quad(lambda t: (t ** g - (2 * g + 1) * t ** (2 * g)) * p(t))
        mu2 = (g + 1) / g * _quad(lambda t: ((g + 1) * (2 * g + 1) * t ** (2 * g) - t ** g) * p(t))
    return np.array([mu1, mu2])


def covariance_sigma(gamma0: float) -> np.ndarray:
    if not gamma0 > -0.5:
        raise InvalidInput(f"gamma0 must exceed -1/2, got {gamma0}")
    g1 = 1.0 + gamma0
    return np.array([[g1 * g1, -g1], [-g1, 2.0 + 2.0 * gamma0 + gamma0 * gamma0]])


def asymptotic_law(spec: SecondOrderSpec) -> AsymptoticLaw:
    return AsymptoticLaw(
        mu=bias_mu(spec.gamma0, spec.rho),
        Sigma=covariance_sigma(spec.gamma0),
        lam=float(spec.lam),
        gamma0=float(spec.gamma0),
    )


def normal_quantile_for_level(level: float) -> float:
    if not 0 <= level < 1:
        raise InvalidInput(f"confidence level must lie in [0, 1), got {level}")
    return float(norm.ppf(0.5 + 0.5 * level))


def confidence_interval(fit, level: float = 0.95, rho=None, lam=None):
    """Plug-in normal intervals for ``gamma`` and ``sigma``.

    Uses ``Sigma(gamma_hat)`` with no bias term.  Passing both ``rho`` and
    ``lam`` recentres the intervals by the asymptotic bias ``lam * mu / sqrt(k)``.

    Returns
    -------
    ((gamma_lo, gamma_hi), (sigma_lo, sigma_hi))
    """
    if not fit.converged:
        raise InvalidInput("cannot build intervals from an unconverged fit")
    g = fit.gamma_hat
    if not g > -0.5:
        raise InvalidInput(f"gamma_hat={g} is outside (-1/2, inf)")
    z = normal_quantile_for_level(level)
    rk = math.sqrt(fit.k)
    centre_g, centre_s = g, fit.sigma_hat
    if rho is not None and lam is not None:
        mu = bias_mu(g, rho)
        centre_g = g - lam * mu[0] / rk
        centre_s = fit.sigma_hat / (1.0 + lam * mu[1] / rk)
    half_g = z * (1.0 + g) / rk
    half_s = z * math.sqrt(2.0 + 2.0 * g + g * g) / rk
    gamma_ci = (max(centre_g - half_g, -0.5), centre_g + half_g)
    sigma_ci = (max(centre_s * (1.0 - half_s), 0.0), centre_s * (1.0 + half_s))
    return gamma_ci, sigma_ci
