"""Ignorance intervals for continuous-treatment dose-response estimation.

Estimates bounds on conditional and average potential-outcome functions
under a user-specified violation of the no-hidden-confounding assumption,
with percentile-bootstrap confidence intervals and a synthetic benchmark
whose ground truth is analytic.
"""

from .bootstrap import (
    BootstrapEnsemble,
    ConfidenceBound,
    apo_ci,
    capo_ci,
    fit_ensemble,
    load_ensemble,
    quantile,
    resample,
    save_ensemble,
)
from .bounds import (
    BoundGridSpec,
    GradientOpts,
    KLDiagnostic,
    Lambda,
    SensitivityBound,
    SigmoidWeight,
    StepWeight,
    apo_bounds,
    capo_bounds_batch,
    capo_bounds_grid,
    capo_bounds_gradient,
    capo_bounds_line,
    grid_bounds_discrete,
    kl_diagnostic,
    mixture_bounds_grid,
    mixture_bounds_gradient,
    mixture_bounds_line,
    mu_w,
    rho,
)
from .data import Dataset, read_csv
from .density import (
    ConditionalDensityModel,
    DensityModelConfig,
    init_model,
    nll,
    nll_gradient,
    train,
)
from .errors import (
    DegenerateDistributionError,
    DoseboundError,
    InputError,
    NumericError,
    SupportViolationError,
    TrainingDivergedError,
)
from .mixture import MixtureDensity, conditional_mean, log_density, sample
from .quadrature import (
    GaussHermiteRule,
    gh_expect_gaussian,
    gh_expect_mixture,
    hermite_rule,
    mc_expect,
)
from .synthetic import (
    SyntheticConfig,
    beta_binomial_pmf,
    generate,
    lambda_star,
    true_apo,
    true_capo,
    true_capo_given_u,
)

__version__ = "0.1.0"
