"""Likelihood inference for exponential-trawl processes.

An integer-valued trawl process with exponential trawl function is the
observed sum ``Y_t = sum_y y C_t^(y)`` of hidden counts of live events, each
mark ``y`` arriving at rate ``nu(y)`` and every event living an
``Exponential(phi)`` time.  The package provides exact filtering and
smoothing of the hidden counts, the observed-data likelihood, and EM,
direct and partial-likelihood estimators.
"""
from .errors import *  # noqa: F401,F403
from .estimate import (
    EmTrace,
    SufficientStats,
    direct_mle,
    e_step,
    em_fit,
    initial_bounds,
    m_step,
    mcle,
    moment_start,
    mple_geometric,
    mple_levy,
    mple_phi,
)
from .filtering import (
    FilterOutput,
    FilterRecord,
    conditional_intensity,
    decay_update,
    initial_distribution,
    jump_update,
    run_filter,
)
from .likelihood import exact_log_likelihood, initial_loglik, log_likelihood, loglik_terms
from .model import (
    CompleteData,
    JumpPath,
    LevyMeasure,
    StateDistribution,
    StateVector,
    TrawlModel,
    geometric,
    geometric_levy,
    poisson,
    skellam,
)
from .simulate import HiddenTrace, complete_data, simulate
from .smoother import SmootherOutput, SmoothedJumpWeights, backward_jump_update, run_smoother

__version__ = "0.1.0"
