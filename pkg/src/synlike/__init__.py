"""synlike: simulation-based Bayesian inference with synthetic likelihoods.

Estimate posteriors for models whose likelihood is intractable but cheap to
simulate: a synthetic likelihood (parametric or semi-parametric density fit
to simulated summary statistics) stands in for the true likelihood inside a
pseudo-marginal Metropolis-Hastings sampler.  Covariance shrinkage keeps
the simulation budget down, with a tool to pick the penalty by targeting
the estimator's noise level.
"""

from .errors import (
    ConfigError,
    DegenerateChainWarning,
    DegenerateMarginError,
    InitializationError,
    InsufficientSimulationsError,
    ModelValidationError,
    PenaltyGridWarning,
    ShrinkageNumericalError,
    SimulationError,
    SynlikeError,
)
from .estimators import (
    SemiParamFit,
    SlEstimate,
    gaussian_rank_correlation,
    kde_gaussian,
    semiparam_fit,
    semiparam_sl,
    silverman_bandwidth,
    standard_sl,
    unbiased_sl,
)
from .model import Model
from .models import (
    gaussian_toy_model,
    gaussian_toy_posterior,
    ma2_log_prior,
    ma2_model,
    ma2_observed_summary,
    ma2_proposal_covariance,
    ma2_simulate,
    ma2_true_covariance,
)
from .numerics import (
    MomentEstimates,
    effective_sample_size,
    moments,
    mvn_logpdf,
    ranks,
    std_normal_cdf,
    std_normal_quantile,
)
from .penalty import PenaltyGrid, select_penalty
from .rng import RngStream
from .sampler import (
    Chain,
    MhConfig,
    estimate_loglik,
    inverse_logit_transform,
    log_jacobian,
    logit_transform,
    run_mcmc,
)
from .shrinkage import (
    NO_SHRINKAGE,
    GlassoResult,
    ShrinkageSpec,
    glasso,
    glasso_correlation,
    warton_correlation,
    warton_covariance,
)

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ConfigError",
    "DegenerateChainWarning",
    "DegenerateMarginError",
    "GlassoResult",
    "InitializationError",
    "InsufficientSimulationsError",
    "MhConfig",
    "Model",
    "ModelValidationError",
    "MomentEstimates",
    "NO_SHRINKAGE",
    "PenaltyGrid",
    "PenaltyGridWarning",
    "RngStream",
    "SemiParamFit",
    "ShrinkageNumericalError",
    "SimulationError",
    "SlEstimate",
    "SynlikeError",
    "ShrinkageSpec",
    "effective_sample_size",
    "estimate_loglik",
    "gaussian_rank_correlation",
    "gaussian_toy_model",
    "gaussian_toy_posterior",
    "glasso",
    "glasso_correlation",
    "inverse_logit_transform",
    "kde_gaussian",
    "log_jacobian",
    "logit_transform",
    "ma2_log_prior",
    "ma2_model",
    "ma2_observed_summary",
    "ma2_proposal_covariance",
    "ma2_simulate",
    "ma2_true_covariance",
    "moments",
    "mvn_logpdf",
    "ranks",
    "run_mcmc",
    "select_penalty",
    "semiparam_fit",
    "semiparam_sl",
    "silverman_bandwidth",
    "standard_sl",
    "std_normal_cdf",
    "std_normal_quantile",
    "unbiased_sl",
    "warton_correlation",
    "warton_covariance",
]
