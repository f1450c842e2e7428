"""Deterministic offspring selection for sequential Monte Carlo.

KL and TV reshuffling, the usual stochastic resamplers, a bootstrap
particle filter with optional joint-likelihood tracking, conditional SMC
and particle Gibbs for the stochastic volatility model.
"""

from reshuffle.particles import (
    Genealogy,
    ParticleSystem,
    ParticleCollapse,
    ess,
    extract_trajectory,
    log_normalize,
    make_rng,
    multiplicity_to_ancestors,
)
from reshuffle.selection import (
    SelectionScheme,
    brute_force_kl_optimum,
    brute_force_tv_optimum,
    kl_objective,
    kl_reshuffle,
    ml_select,
    multinomial_resample,
    stratified_resample,
    systematic_resample,
    tv_objective,
    tv_reshuffle,
)
from reshuffle.models import NLModel, SVModel, StateSpaceModel, log_returns, read_prices, simulate
from reshuffle.filters import FilterConfig, FilterOutput, bpf, bpf_with_likelihood, csmc_kernel
from reshuffle.estimators import estimate, loss
from reshuffle.gibbs import (
    ChainRecord,
    IGPrior,
    PGConfig,
    acf,
    chain_median,
    particle_gibbs,
    sample_beta2,
    sample_phi,
    sample_sigma2,
)

__version__ = "0.1.0"
