"""Generalized Pareto maximum likelihood for the extreme value index."""
from .asymptotics import (
    AsymptoticLaw,
    SecondOrderSpec,
    asymptotic_law,
    bias_mu,
    bias_mu_numeric,
    confidence_interval,
    covariance_sigma,
    psi,
)
from .estimation import (
    ExcessSet,
    FitResult,
    check_zero_gamma,
    explicit_zero_estimator,
    extract_excesses,
    fit,
    log_likelihood,
    moment_estimator,
    profile_gamma,
    score,
    solve_mle,
)
from .gpd import GpdParams
from .simulation import (
    MonteCarloConfig,
    MonteCarloReport,
    SecondOrderModel,
    k_schedule,
    run_monte_carlo,
    sample_model,
    tail_quantile,
)

__version__ = "0.1.0"
