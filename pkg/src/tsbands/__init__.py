"""Simultaneous confidence bands for nonparametric time series regression.

Kernel estimates of the mean and volatility functions of
``Y_i = mu(X_i) + sigma(X_i) eps_i`` from dependent data, with jackknife
bias correction, RSC bandwidth selection, simultaneous bands with
extreme-value or finite-sample cutoffs, and Monte Carlo coverage tools.
"""

from .bands import (
    ConfidenceBand,
    EvaluationGrid,
    asymptotic_cutoff,
    finite_sample_cutoff,
    polynomial,
    scb_mean,
    scb_variance,
    validate_parametric,
)
from .bandwidth import RSCConfig, fit_pipeline, irsc, rsc_at, select_bandwidth
from .errors import TsBandsError
from .estimators import (
    SampleSet,
    density_nw,
    local_linear_fit,
    mean_jackknife,
    mean_nw,
    nu_epsilon_hat,
    variance_jackknife,
    variance_residual,
)
from .kernels import Kernel, get_kernel, make_epanechnikov, make_fourth_order
from .processes import ProcessSpec, generate

__version__ = "0.1.0"

__all__ = [
    "ConfidenceBand",
    "EvaluationGrid",
    "Kernel",
    "ProcessSpec",
    "RSCConfig",
    "SampleSet",
    "TsBandsError",
    "asymptotic_cutoff",
    "density_nw",
    "finite_sample_cutoff",
    "fit_pipeline",
    "generate",
    "get_kernel",
    "irsc",
    "local_linear_fit",
    "make_epanechnikov",
    "make_fourth_order",
    "mean_jackknife",
    "mean_nw",
    "nu_epsilon_hat",
    "polynomial",
    "rsc_at",
    "scb_mean",
    "scb_variance",
    "select_bandwidth",
    "validate_parametric",
    "variance_jackknife",
    "variance_residual",
]
