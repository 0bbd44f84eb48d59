"""Exact second-order tail models and a Monte Carlo harness.

The model family has tail quantile function

    F^<-(1 - s) = (s^-g - 1)/g + A s^-(g + rho),    A = c / (g + rho),

so that with ``a(t) = t^-g`` and ``Phi(t) = c t^-rho`` the second-order
ratio equals ``psi(x, g, rho)`` with no remainder.  ``c = 0`` is the exact
GPD(g, 1) tail.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import estimation
from .asymptotics import AsymptoticLaw, SecondOrderSpec, asymptotic_law
from .errors import InfeasibleSchedule, InvalidInput, InvalidModel, TailMLEError

FAILURE_FLAG_RATE = 0.05
_MONOTONE_GRID = np.logspace(-8, 0, 10_000)


@dataclass(frozen=True)
class SecondOrderModel:
    gamma0: float
    rho: float = -1.0
    c: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.gamma0) and math.isfinite(self.rho) and math.isfinite(self.c)):
            raise InvalidModel("model parameters must be finite")
        if not self.gamma0 > -0.5:
            raise InvalidModel(f"gamma0 must exceed -1/2, got {self.gamma0}")
        if self.c != 0:
            if not self.rho < 0:
                raise InvalidModel("rho must be negative when c != 0")
            if abs(self.gamma0 + self.rho) < 1e-12:
                raise InvalidModel("gamma0 + rho = 0 is not representable by this family")
        q = tail_quantile(self, _MONOTONE_GRID)
        if not np.all(np.diff(q) < 0):
            raise InvalidModel(f"tail quantile is not strictly decreasing for c={self.c}")

    @property
    def pure_gpd(self) -> bool:
        return self.c == 0

    @property
    def amplitude(self) -> float:
        """Coefficient ``A`` of the second-order term of the quantile function."""
        return 0.0 if self.pure_gpd else self.c / (self.gamma0 + self.rho)

    def a(self, t):
        t = np.asarray(t)
        return np.power(t, t.dtype.type(-self.gamma0)) if t.dtype == np.longdouble else np.power(t, -self.gamma0)

    def phi(self, t):
        t = np.asarray(t)
        if t.dtype == np.longdouble:
            return t.dtype.type(self.c) * np.power(t, t.dtype.type(-self.rho))
        return self.c * np.power(t, -self.rho)


def tail_quantile(model: SecondOrderModel, t):
    """``F^<-(1 - t)`` for ``t`` in (0, 1].

    Long-double input is evaluated in long double; anything else in float64.
    """
    arr = np.asarray(t)
    dtype = np.longdouble if arr.dtype == np.longdouble else np.float64
    arr = arr.astype(dtype)
    if np.any(~((arr > 0) & (arr <= 1))):
        raise InvalidInput("tail probability must lie in (0, 1]")
    lt = np.log(arr)
    g = dtype(model.gamma0)
    base = -lt if g == 0 else np.expm1(-g * lt) / g
    if not model.pure_gpd:
        amp = dtype(model.c) / (g + dtype(model.rho))
        base = base + amp * np.exp(-(g + dtype(model.rho)) * lt)
    if arr.ndim == 0:
        return base[()] if dtype is np.longdouble else float(base)
    return base


def sample_model(model: SecondOrderModel, n: int, seed=None) -> np.ndarray:
    if n < 1:
        raise InvalidInput("n must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    return tail_quantile(model, 1.0 - rng.random(n))


def k_schedule(model: SecondOrderModel, n: int, lam: float) -> int:
    """Number of order statistics with ``sqrt(k) Phi(k/n) = lam``."""
    if lam < 0:
        raise InvalidInput("lambda must be non-negative")
    if lam == 0:
        raise InfeasibleSchedule("lambda = 0 does not determine k; pass k explicitly")
    if model.c <= 0:
        raise InfeasibleSchedule("a positive lambda needs a positive amplitude c")
    rho = model.rho
    f = lambda lk: 0.5 * lk + math.log(model.c) - rho * (lk - math.log(n)) - math.log(lam)
    lo, hi = 0.0, math.log(n)
    if f(lo) > 0 or f(hi) < 0:
        raise InfeasibleSchedule(f"no k in [1, {n}] gives sqrt(k) Phi(k/n) = {lam}")
    k = math.exp(brentq(f, lo, hi, xtol=1e-14))
    return int(min(max(round(k), 2), n - 1))


@dataclass
class MonteCarloConfig:
    model: SecondOrderModel
    n: int
    k: int | None = None
    lam: float | None = None
    replications: int = 1000
    estimators: tuple = ("mle",)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.estimators = tuple(self.estimators)
        bad = set(self.estimators) - set(estimation.METHODS)
        if bad or not self.estimators:
            raise InvalidInput(f"unknown estimators {sorted(bad)}")
        if self.replications < 2:
            raise InvalidInput("replications must be >= 2")
        if self.k is None:
            if self.lam is None:
                raise InvalidInput("give either k or lambda")
            self.k = k_schedule(self.model, self.n, self.lam)
        if not 2 <= self.k < self.n:
            raise InvalidInput(f"need 2 <= k < n, got k={self.k}, n={self.n}")

    @property
    def effective_lambda(self) -> float:
        """``sqrt(k) Phi(k/n)`` at the realized integer k."""
        return float(math.sqrt(self.k) * self.model.phi(self.k / self.n))


@dataclass
class EstimatorSummary:
    name: str
    estimates: np.ndarray
    standardized: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def ok(self) -> np.ndarray:
        return np.all(np.isfinite(self.standardized), axis=1)

    @property
    def n_ok(self) -> int:
        return int(self.ok.sum())

    @property
    def failures(self) -> int:
        return self.standardized.shape[0] - self.n_ok

    @property
    def failure_rate(self) -> float:
        return self.failures / self.standardized.shape[0]

    @property
    def flagged(self) -> bool:
        return self.failure_rate > FAILURE_FLAG_RATE

    @property
    def mean(self) -> np.ndarray:
        return self.standardized[self.ok].mean(axis=0)

    @property
    def cov(self) -> np.ndarray:
        c = np.cov(self.standardized[self.ok], rowvar=False)
        return 0.5 * (c + c.T)

    def z_scores(self, target_mean) -> np.ndarray:
        se = np.sqrt(np.diag(self.cov) / self.n_ok)
        return (self.mean - np.asarray(target_mean)) / se


@dataclass
class MonteCarloReport:
    config: MonteCarloConfig
    target: AsymptoticLaw
    summaries: dict

    def __getitem__(self, name) -> EstimatorSummary:
        return self.summaries[name]

    def paired_gap(self, first: str, second: str) -> float:
        """Mean of ``|sqrt(k)(gamma_first - gamma_second)|`` over joint successes."""
        a = self.summaries[first].estimates[:, 0]
        b = self.summaries[second].estimates[:, 0]
        both = np.isfinite(a) & np.isfinite(b)
        return float(np.mean(np.abs(a[both] - b[both])) * math.sqrt(self.config.k))

    def gamma_coverage(self, level: float = 0.95, estimator: str = "mle") -> float:
        """Share of plug-in ``gamma`` intervals (no bias term) that contain ``gamma0``."""
        from .asymptotics import normal_quantile_for_level

        z = normal_quantile_for_level(level)
        g = self.summaries[estimator].estimates[:, 0]
        g = g[np.isfinite(g)]
        half = z * (1.0 + g) / math.sqrt(self.config.k)
        lo = np.maximum(g - half, -0.5)
        g0 = self.config.model.gamma0
        return float(np.mean((lo <= g0) & (g0 <= g + half)))

    def to_dict(self) -> dict:
        cfg = self.config
        target_mean = self.target.mean
        out = {
            "model": {"gamma0": cfg.model.gamma0, "rho": cfg.model.rho, "c": cfg.model.c},
            "n": cfg.n,
            "k": cfg.k,
            "replications": cfg.replications,
            "seed": cfg.seed,
            "lambda_effective": cfg.effective_lambda,
            "target": self.target.to_dict(),
            "estimators": {},
        }
        for name, s in self.summaries.items():
            entry = {
                "successes": s.n_ok,
                "failures": s.failures,
                "failure_rate": s.failure_rate,
                "flagged": s.flagged,
                "errors": dict(sorted(s.errors.items())),
            }
            if s.n_ok >= 2:
                entry.update(
                    mean=s.mean.tolist(),
                    cov=s.cov.tolist(),
                    z_scores=s.z_scores(target_mean).tolist(),
                )
            out["estimators"][name] = entry
        return out


def _scale_target(cfg: MonteCarloConfig, name: str) -> float:
    t = cfg.k / cfg.n
    a = float(cfg.model.a(t))
    if name == "moment":
        # the log-spacing scale estimates a(t) / F^<-(1 - t)
        return a / tail_quantile(cfg.model, t)
    return a


def replicate(cfg: MonteCarloConfig, index: int) -> dict:
    """Estimates ``(gamma_hat, sigma_hat)`` or an error name for replication ``index``.

    Each replication draws from its own child of the master seed, so the
    result does not depend on which other replications were run.
    """
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(index,))
    x = sample_model(cfg.model, cfg.n, ss)
    out = {}
    for name in cfg.estimators:
        try:
            r = estimation.fit(x, cfg.k, name)
            if name == "mle" and not r.converged:
                out[name] = "ConvergenceFailure"
            else:
                out[name] = (r.gamma_hat, r.sigma_hat)
        except TailMLEError as exc:
            out[name] = type(exc).__name__
    return out


def _replicate_args(args):
    return replicate(*args)


def aggregate(cfg: MonteCarloConfig, rows) -> MonteCarloReport:
    """Fold replication results, given in replication-index order, into a report."""
    rk = math.sqrt(cfg.k)
    spec = SecondOrderSpec(cfg.model.gamma0, cfg.model.rho, cfg.effective_lambda)
    summaries = {}
    for name in cfg.estimators:
        est = np.full((len(rows), 2), np.nan)
        errors = Counter()
        for i, row in enumerate(rows):
            v = row[name]
            if isinstance(v, str):
                errors[v] += 1
            else:
                est[i] = v
        std = np.column_stack([
            rk * (est[:, 0] - cfg.model.gamma0),
            rk * (est[:, 1] / _scale_target(cfg, name) - 1.0),
        ])
        summaries[name] = EstimatorSummary(name, est, std, dict(errors))
    return MonteCarloReport(cfg, asymptotic_law(spec), summaries)


def run_monte_carlo(cfg: MonteCarloConfig) -> MonteCarloReport:
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_replicate_args, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        rows = [replicate(*j) for j in jobs]
    return aggregate(cfg, rows)
