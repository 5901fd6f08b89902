"""Empirical Bayes for Poisson and normal means via hierarchical Bayes under priors on priors."""

from .mixture import (
    POISSON,
    DegenerateSupportError,
    DiscretePrior,
    TruncatedPmf,
    bayes_posterior_mean,
    bayes_posterior_mean_ratio,
    divergence,
    marginal_pmf,
    mixture_divergence_bounds,
    moment_match,
    poisson_logpmf,
    posterior_moment,
)
from .pop import PoPKind, PoPSpec, neural_prior, pop_mass_estimate, sample_prior, truncate_prior
from .hb import (
    PosteriorState,
    ZeroLikelihoodError,
    hb_estimate,
    hb_estimate_loo,
    init_state,
    lengen_estimate,
    posterior_mean,
    posterior_update,
)

__version__ = "0.1.0"
