"""Estimators of the extreme value index from the top ``k`` order statistics.

Three families are provided:

* the generalized Pareto maximum likelihood estimator, solved through the
  profile parameter ``theta = gamma / sigma`` (:func:`solve_mle`);
* explicit moment-type estimators that are asymptotically equivalent to the
  MLE when the true index is 0 (:func:`explicit_zero_estimator`);
* the moment estimator built on log-spacings of the top order statistics
  (:func:`moment_estimator`).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import gpd
from .errors import (
    ConvergenceFailure,
    DegenerateSample,
    DomainViolation,
    InvalidInput,
    InvalidK,
    NoInteriorSolution,
    RequiresPositiveThreshold,
    SupportViolation,
)

METHODS = ("mle", "explicit_zero", "moment")

GAMMA_FLOOR = -0.5
# roots with gamma <= GAMMA_FLOOR + BOUNDARY_MARGIN are rejected
BOUNDARY_MARGIN = 1e-10
RESIDUAL_TOL = 1e-8
# |w| below which the gamma-score uses its Taylor series in w = gamma*y/sigma
_SERIES_W = 1e-3
_SERIES_COEF = np.array([(-1) ** j * (j - 1) / j for j in range(2, 11)])
# cap on grid-points x excesses evaluated at once
_BLOCK_CELLS = 2_000_000


@dataclass(frozen=True, eq=False)
class ExcessSet:
    """Excesses ``Y_i = X_{n-i+1,n} - X_{n-k,n}``, ``i = 1..k``, stored descending."""

    threshold: float
    excesses: np.ndarray
    k: int
    n: int

    def __post_init__(self):
        y = np.asarray(self.excesses, dtype=float)
        if y.ndim != 1 or y.size != self.k:
            raise InvalidInput("excesses must be a 1-d sequence of length k")
        if self.k < 2 or self.n <= self.k:
            raise InvalidK(f"need 2 <= k < n, got k={self.k}, n={self.n}")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise InvalidInput("excesses must be finite and non-negative")
        if np.any(np.diff(y) > 0):
            y = np.sort(y)[::-1]
        y.setflags(write=False)
        object.__setattr__(self, "excesses", y)

    @classmethod
    def from_excesses(cls, excesses, n=None, threshold=0.0):
        """Wrap raw excesses (any order); ``n`` defaults to ``k + 1``."""
        y = np.sort(np.asarray(excesses, dtype=float))[::-1]
        return cls(float(threshold), y, y.size, y.size + 1 if n is None else int(n))

    @property
    def mean(self) -> float:
        return float(np.mean(self.excesses))


@dataclass
class FitResult:
    gamma_hat: float
    sigma_hat: float
    theta_hat: float
    loglik: float
    residuals: tuple
    k: int
    n: int
    converged: bool
    method: str
    threshold: float = math.nan
    n_roots: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residuals"] = list(self.residuals)
        return d


def _check_sample(sample, k):
    x = np.asarray(sample, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise InvalidInput("sample contains non-finite values")
    n = x.size
    if not isinstance(k, (int, np.integer)) or k < 2 or k >= n:
        raise InvalidK(f"k must be an integer with 2 <= k < n = {n}, got {k}")
    return x, n


def extract_excesses(sample, k: int) -> ExcessSet:
    """Excesses of the top ``k`` observations over ``X_{n-k,n}``.

    >>> extract_excesses([1, 5, 3, 2, 4], 2).excesses
    array([2., 1.])
    """
    x, n = _check_sample(sample, k)
    top = np.partition(x, n - k - 1)[n - k - 1:]
    top.sort()
    threshold = top[0]
    return ExcessSet(float(threshold), top[:0:-1] - threshold, int(k), n)


def log_likelihood(e: ExcessSet, gamma: float, sigma: float) -> float:
    """GPD log-likelihood of the excesses; ``-inf`` outside the support."""
    if not (math.isfinite(gamma) and math.isfinite(sigma)) or sigma <= 0:
        return -math.inf
    return float(np.sum(gpd.log_pdf(gpd.GpdParams(gamma, sigma), e.excesses)))


def _scaled(e, gamma, sigma):
    if not sigma > 0:
        raise SupportViolation(f"sigma must be positive, got {sigma}")
    z = e.excesses / sigma
    w = gamma * z
    if np.any(1.0 + w <= 0):
        raise SupportViolation(f"excesses outside the support of GPD({gamma}, {sigma})")
    return z, w


def score(e: ExcessSet, gamma: float, sigma: float) -> tuple[float, float]:
    """Partial derivatives of the log-likelihood in ``gamma`` and ``sigma``."""
    z, w = _scaled(e, gamma, sigma)
    if abs(gamma) < gpd.ZERO_GAMMA:
        d_gamma = 0.5 * z * z - z
    else:
        # log1p(w)/gamma^2 - (1/gamma + 1) z/(1+w), regrouped so the O(1/gamma)
        # parts cancel analytically
        small = np.abs(w) < _SERIES_W
        ws = np.where(small, w, 0.0)
        series = z * z * np.polynomial.polynomial.polyval(ws, _SERIES_COEF)
        wb = np.where(small, 1.0, w)
        direct = (np.log1p(wb) - wb / (1.0 + wb)) / (gamma * gamma)
        d_gamma = np.where(small, series, direct) - z / (1.0 + w)
    d_sigma = (-1.0 + (1.0 + gamma) * z / (1.0 + w)) / sigma
    return float(np.sum(d_gamma)), float(np.sum(d_sigma))


def likelihood_equation_residuals(e: ExcessSet, gamma: float, sigma: float) -> tuple[float, float]:
    """Both likelihood equations in their original summed form, divided by ``k``.

    The second equation is ``sum (1/gamma + 1) w/(1+w) = k``, which equals
    ``sigma`` times the sigma-score; both are returned as left minus right.
    """
    dg, ds = score(e, gamma, sigma)
    return dg / e.k, sigma * ds / e.k


def simplified_residuals(e: ExcessSet, gamma: float, sigma: float) -> tuple[float, float]:
    """Residuals of the reduced system valid for ``gamma != 0``.

    ``mean log(1 + theta y) - gamma`` and ``mean 1/(1 + theta y) - 1/(1 + gamma)``
    with ``theta = gamma / sigma``.  At ``gamma == 0`` the reduced system is
    vacuous and the exponential-limit equations are returned instead.
    """
    if gamma == 0.0:
        return likelihood_equation_residuals(e, 0.0, sigma)
    _, w = _scaled(e, gamma, sigma)
    r1 = float(np.mean(np.log1p(w))) - gamma
    r2 = gamma / (1.0 + gamma) - float(np.mean(w / (1.0 + w)))
    return r1, r2


def profile_gamma(theta: float, e: ExcessSet) -> float:
    """``gamma(theta) = mean log(1 + theta * y_i)``."""
    ymax = e.excesses[0]
    if theta * ymax <= -1.0:
        raise DomainViolation(f"theta={theta} is at or below -1/max(excess)")
    if theta == 0.0:
        return 0.0
    return float(np.mean(np.log1p(theta * e.excesses)))


def _profile_equation(thetas, y):
    """Profile equation ``g(theta)`` and ``gamma(theta)`` on a grid of thetas.

    ``g = gamma/(1+gamma) - mean(w/(1+w))`` with ``w = theta*y``; this is
    ``mean 1/(1+w) - 1/(1+gamma)`` rearranged so both terms are O(theta).
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    g = np.empty_like(thetas)
    gam = np.empty_like(thetas)
    step = max(1, _BLOCK_CELLS // max(1, y.size))
    for start in range(0, thetas.size, step):
        w = np.multiply.outer(thetas[start:start + step], y)
        gb = np.log1p(w).mean(axis=1)
        gam[start:start + step] = gb
        g[start:start + step] = gb / (1.0 + gb) - (w / (1.0 + w)).mean(axis=1)
    return g, gam


def check_zero_gamma(e: ExcessSet, tol: float = 1e-12):
    """Scale at which ``gamma = 0`` solves the likelihood equations, or ``None``.

    The exponential limit solves them iff half the mean squared excess equals
    the squared mean excess; the scale is then the mean excess.
    """
    y = e.excesses
    m1 = float(np.mean(y))
    if m1 <= 0:
        return None
    half_m2 = 0.5 * float(np.mean(y * y))
    if abs(half_m2 - m1 * m1) <= tol * m1 * m1:
        return m1
    return None


def _negative_bound(y, floor):
    """Most negative theta worth searching: where gamma(theta) hits ``floor``."""
    ymax = y[0]
    edge = -(1.0 - 1e-10) / ymax
    f = lambda th: float(np.mean(np.log1p(th * y))) - floor
    if f(edge) >= 0:
        return edge
    return brentq(f, edge, 0.0, xtol=1e-300, rtol=4 * np.finfo(float).eps)


def _theta_grid(y, points_per_decade):
    m1 = float(np.mean(y))
    lo = _negative_bound(y, GAMMA_FLOOR + BOUNDARY_MARGIN)
    ppd = points_per_decade
    neg = np.concatenate([
        lo * np.logspace(-10, math.log10(0.5), int(9.7 * ppd) + 1),
        lo * (1.0 - np.logspace(math.log10(0.5), -10, int(9.7 * ppd) + 1)[1:]),
    ])
    neg = np.unique(np.append(neg, lo))
    # heavy tails inflate the mean, so the upper end is tied to the smallest
    # positive excess: beyond it every positive theta*y exceeds 1e6
    y_small = float(np.min(y[y > 0]))
    decades = 16 + max(0.0, math.log10(m1 / y_small))
    pos = np.logspace(-10, -10 + decades, int(math.ceil(decades * ppd)) + 1) / m1
    return neg, pos


def _roots_on(thetas, y):
    """Roots of g on one side of zero, refined from grid sign changes."""
    g, _ = _profile_equation(thetas, y)
    fun = lambda th: float(_profile_equation(th, y)[0][0])
    roots = [float(t) for t, v in zip(thetas, g) if v == 0.0]
    sign = np.sign(g)
    for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        roots.append(brentq(fun, thetas[i], thetas[i + 1], xtol=1e-300,
                            rtol=4 * np.finfo(float).eps, maxiter=200))
    return roots


def _result(e, gamma, sigma, method, n_roots=0, diagnostics=None):
    theta = gamma / sigma
    loglik = math.nan
    res = (math.nan, math.nan)
    # the moment scale lives on the log scale: no likelihood diagnostics
    if method != "moment":
        loglik = log_likelihood(e, gamma, sigma)
        try:
            res = simplified_residuals(e, gamma, sigma)
        except SupportViolation:
            pass
    converged = bool(np.all(np.abs(res) <= RESIDUAL_TOL)) if method == "mle" else True
    return FitResult(
        gamma_hat=float(gamma), sigma_hat=float(sigma), theta_hat=float(theta),
        loglik=loglik, residuals=tuple(float(r) for r in res),
        k=e.k, n=e.n, converged=converged, method=method, threshold=e.threshold,
        n_roots=n_roots, diagnostics=dict(diagnostics or {}),
    )


def solve_mle(e: ExcessSet, zero_tol: float = 1e-12, points_per_decade: int = 10) -> FitResult:
    """Maximum likelihood fit of a GPD to the excesses.

    Searches the profile parameter ``theta = gamma/sigma`` for roots of
    ``mean 1/(1 + theta y) = 1/(1 + gamma(theta))`` on a logarithmic grid on
    each side of zero and refines every sign change with Brent's method.
    Roots implying ``gamma <= -1/2`` are discarded; among the remaining ones
    the likelihood maximizer is returned.

    Parameters
    ----------
    e : ExcessSet
    zero_tol : float
        Relative tolerance of the ``gamma = 0`` check done before the search.
    points_per_decade : int
        Density of the bracketing grid.

    Raises
    ------
    NoInteriorSolution
        All excesses equal (including all zero).
    ConvergenceFailure
        No admissible root was found.
    """
    y = e.excesses
    if y[0] == y[-1]:
        raise NoInteriorSolution("constant excesses: the likelihood equations have no interior solution")

    sigma0 = check_zero_gamma(e, zero_tol)
    if sigma0 is not None:
        return _result(e, 0.0, sigma0, "mle", n_roots=1, diagnostics={"branch": "zero_gamma"})

    neg, pos = _theta_grid(y, points_per_decade)
    candidates = []
    rejected = 0
    for theta in _roots_on(neg, y) + _roots_on(pos, y):
        if theta == 0.0:
            continue
        gamma = profile_gamma(theta, e)
        if gamma <= GAMMA_FLOOR + BOUNDARY_MARGIN:
            rejected += 1
            continue
        sigma = gamma / theta
        if not (sigma > 0 and math.isfinite(sigma)):
            rejected += 1
            continue
        candidates.append((log_likelihood(e, gamma, sigma), gamma, sigma))

    if not candidates:
        raise ConvergenceFailure(
            "no admissible root of the profile likelihood equation",
            {"rejected_roots": rejected, "theta_range": (float(neg[0]), float(pos[-1]))},
        )
    candidates.sort(key=lambda c: c[0], reverse=True)
    _, gamma, sigma = candidates[0]
    return _result(e, gamma, sigma, "mle", n_roots=len(candidates),
                   diagnostics={"rejected_roots": rejected})


def explicit_zero_estimator(e: ExcessSet) -> tuple[float, float]:
    """Explicit estimators ``(gamma_*, a_*)`` from the first two excess moments.

    ``gamma_* = 1 - 1/2 (1 - m1^2/m2)^-1`` and ``a_* = 2 m1^3 / m2``.
    """
    y = e.excesses
    m1 = float(np.mean(y))
    m2 = float(np.mean(y * y))
    if not m2 > 0:
        raise DegenerateSample("second excess moment is zero")
    ratio = m1 * m1 / m2
    if ratio == 1.0:
        raise DegenerateSample("m1^2/m2 == 1: excesses are constant")
    return 1.0 - 0.5 / (1.0 - ratio), 2.0 * m1 ** 3 / m2


def moment_estimator(sample, k: int) -> tuple[float, float]:
    """Moment estimator ``(gamma_MOM, a_**)`` from the top ``k`` log-spacings.

    Uses ``M_j = 1/k sum_{i=0}^{k-1} (log X_{n-i,n} - log X_{n-k,n})^j``.
    """
    x, n = _check_sample(sample, k)
    top = np.sort(np.partition(x, n - k - 1)[n - k - 1:])
    if not top[0] > 0:
        raise RequiresPositiveThreshold(f"threshold X_(n-k) = {top[0]} is not positive")
    logs = np.log(top[1:]) - math.log(top[0])
    m1 = float(np.mean(logs))
    m2 = float(np.mean(logs * logs))
    if not m2 > 0:
        raise DegenerateSample("all top-k values equal the threshold")
    ratio = m1 * m1 / m2
    if ratio == 1.0:
        raise DegenerateSample("M1^2/M2 == 1")
    return m1 + 1.0 - 0.5 / (1.0 - ratio), 2.0 * m1 ** 3 / m2


def fit_excess_set(e: ExcessSet, method: str = "mle", sample=None) -> FitResult:
    """Fit one estimator family to an existing excess set.

    The moment estimator works on log order statistics and needs the
    original ``sample`` (sorted or not).
    """
    if method == "mle":
        return solve_mle(e)
    if method == "explicit_zero":
        return _result(e, *explicit_zero_estimator(e), "explicit_zero")
    if method == "moment":
        if sample is None:
            raise InvalidInput("the moment estimator needs the original sample")
        return _result(e, *moment_estimator(sample, e.k), "moment")
    raise InvalidInput(f"unknown method {method!r}; expected one of {METHODS}")


def fit(sample, k: int, method: str = "mle") -> FitResult:
    """Fit one estimator family to the top ``k`` observations of ``sample``."""
    if method not in METHODS:
        raise InvalidInput(f"unknown method {method!r}; expected one of {METHODS}")
    return fit_excess_set(extract_excesses(sample, k), method, sample)
