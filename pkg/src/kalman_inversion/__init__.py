"""Derivative-free Bayesian inversion with the unscented Kalman inversion.

The iteration uses the adaptive evolution covariance Sigma_omega = C_n and the
artificial observation covariance Sigma_nu = 2 Sigma_eta, so that its
stationary Gaussian approximates the posterior under a flat prior.
"""
from .engine import (
    Algorithm,
    InverseProblem,
    InversionPolicy,
    IterationRecord,
    OmegaPolicy,
    check_stationarity,
    exki_step,
    predict,
    run_inversion,
    uki_step,
)
from .errors import *  # noqa: F401,F403
from .gaussian import GaussianBelief, JointGaussian, cholesky_factor, condition_gaussian, gaussian_kl
from .unscented import SigmaEnsemble, UnscentedWeights, compute_weights, generate_sigma_points, transform_estimate

__version__ = "0.1.0"
