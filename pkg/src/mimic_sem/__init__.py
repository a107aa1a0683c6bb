"""MIMIC latent-index estimation: ML fitting with robust SEs, fit indices,
scoring and ranking of units, and loess smoothing of the index against income."""

from .model import (
    Dataset,
    ImpliedMoments,
    ModelSpec,
    ParameterSet,
    implied_moments,
    rescale_latent,
    standardize_loadings,
)
from .estimation import (
    FitConfig,
    FitResult,
    fit_ml,
    log_likelihood,
    robust_se,
    significance_stars,
)
from .kernels import BACKEND

__version__ = "0.1.0"
