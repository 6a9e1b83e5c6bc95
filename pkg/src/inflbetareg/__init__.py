"""Robust and maximum likelihood estimation for inflated beta regression."""

from .diagnostics import by_part_residuals, envelope, quantile_residuals, robust_weights
from .fitting import FitResult, fit_model
from .inference import (
    CovarianceResult,
    WaldTest,
    cov_discrete,
    cov_mlme,
    cov_mlse,
    full_covariance,
    wald_test,
    wald_test_value,
)
from .links import Link, LinkSpec, get_link
from .model import (
    ObservationSet,
    ParamVector,
    beta_log_density,
    conditional_moments,
    inflated_log_density,
    linear_predictors,
    log_likelihood,
    logit_beta_log_density,
)
from .objectives import (
    EstimatingFunctionValue,
    TuningConstants,
    lmdpde_estfun,
    lmdpde_objective,
    lsmle_estfun,
    lsmle_objective,
    mdpde_disc_estfun,
    mdpde_disc_objective,
    mle_score,
    power_integral,
)
from .optimize import ConvergenceReport, OptimizerConfig, default_start, maximize
from .simulate import (
    EstimatorSpec,
    MonteCarloSummary,
    ScenarioSpec,
    contaminate_continuous,
    contaminate_discrete,
    generate_clean,
    run_monte_carlo,
)
from .special import QuadratureSpec, digamma, expit, integrate, log_beta, logit, trigamma
from .tuning import TuningGrid, TuningTrace, default_grids, select_alpha, sqv, standardized_estimates

__version__ = "0.1.0"
