"""Multivariate log Gaussian Cox processes: simulation, cross pair
correlation estimation, regularized least squares fitting, and model
selection by two-dimensional cross-validation."""

from .model import (
    ModelParams,
    Window,
    UNIT_SQUARE,
    exp_correlation,
    beta_vector,
    cross_pcf,
    proportion_of_variance,
    latent_covariances,
    row_distance_matrix,
    q_eff,
)
from .patterns import MultiPointPattern, Intensity, constant_intensity
from .pcf import (
    PcfEstimate,
    estimate_pcf,
    translation_overlap,
    default_lag_grid,
    default_bandwidth,
    default_weights,
    log_pcf_response,
    HAVE_COMPILED_KERNEL,
)
from .design import (
    Penalty,
    DesignBlocks,
    build_design,
    noiseless_design,
    objective_Q,
    objective_Q_lambda,
    grad_Q,
)
from .optimizer import (
    FitConfig,
    FitResult,
    fit,
    fit_path,
    default_init,
    fit_joint_bfgs,
)

__version__ = "0.1.0"
