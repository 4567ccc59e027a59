"""Observed-data log-likelihood by prediction decomposition.

    l(theta) = sum_tau log lambda_{tau-}(dY_tau)
               - int_0^T (||nu|| + phi E[D_{t-} | F_{t-}]) dt
               + log P(Y_0 = y0)

The integral is approximated by the trapezoid rule on the global grid of
spacing ``delta`` merged with the jump times.  :func:`exact_log_likelihood`
uses instead the closed form of the integral over each inactivity period,
``phi * int_0^L E[D] = -log sum_j p(j) exp(-phi ||j|| L)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _fastpair
from .errors import TruncationError, ZeroIntensityJump
from .filtering import LOST_MASS_TOL, _is_pair, _make_kernel, initial_log_normalizer, run_filter
from .model import EPS_PRUNE, J_MAX, JumpPath, TrawlModel


@dataclass(frozen=True)
class LogLikelihood:
    """Terms of the log-likelihood; ``total = jump_term - integral_term + initial_term``."""

    jump_term: float
    integral_term: float
    initial_term: float
    delta: float | None

    @property
    def total(self) -> float:
        return self.jump_term - self.integral_term + self.initial_term


def initial_loglik(model: TrawlModel, y0: int, j_max: int = J_MAX) -> float:
    """``log P(sum_y y C0_y = y0)``; the same normalizer the filter uses."""
    return initial_log_normalizer(model, y0, j_max)


def loglik_terms(
    model: TrawlModel,
    path: JumpPath,
    delta: float | None,
    include_initial: bool = True,
    eps: float = EPS_PRUNE,
    j_max: int = J_MAX,
    fast: bool = True,
) -> LogLikelihood:
    """Log-likelihood breakdown.  ``delta=None`` integrates exactly."""
    jump, log_survival, grid_integral, log_norm = _forward_sums(model, path, delta, eps, j_max, fast)
    base = model.levy.total * path.horizon
    if delta is None:
        integral = base - log_survival
    else:
        integral = base + model.phi * grid_integral
    init = log_norm if include_initial else 0.0
    return LogLikelihood(jump, integral, init, delta)


def _forward_sums(model, path, delta, eps, j_max, fast):
    """``(sum log lambda, sum log survival, grid integral of E[D], log P(Y0))``."""
    if fast and _fastpair.pair_pass is not None and _is_pair(model):
        kern, log_norm = _make_kernel(model, path, eps, j_max)
        nu_minus, nu_plus = model.levy.mass
        status, at, jump, log_s, integral = _fastpair.pair_pass(
            path.times, path.sizes, float(path.horizon), kern.k0, kern.probs, kern.q, kern.a,
            nu_minus, nu_plus, model.phi, eps, j_max, -1.0 if delta is None else float(delta), LOST_MASS_TOL,
        )
        if status == _fastpair.ZERO_INTENSITY:
            raise ZeroIntensityJump(f"jump {at} of size {path.sizes[at]} has zero intensity under the model")
        if status == _fastpair.TRUNCATED:
            raise TruncationError(f"pruning discarded more than {LOST_MASS_TOL:g} probability near jump {at}")
        return jump, log_s, integral, log_norm
    out = run_filter(model, path, delta=delta, eps=eps, j_max=j_max, record=False, fast=fast)
    return float(np.log(out.lams).sum()), out.log_survival, out.integral, out.log_normalizer


def log_likelihood(
    model: TrawlModel,
    path: JumpPath,
    delta: float = 0.5,
    include_initial: bool = True,
    eps: float = EPS_PRUNE,
    j_max: int = J_MAX,
) -> float:
    """Grid-approximated log-likelihood ``l_{F_T}`` (``l_{F_T | Y0}`` without the initial term)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return loglik_terms(model, path, delta, include_initial, eps, j_max).total


def exact_log_likelihood(
    model: TrawlModel, path: JumpPath, include_initial: bool = True, eps: float = EPS_PRUNE, j_max: int = J_MAX
) -> float:
    """Log-likelihood with the intensity integral evaluated in closed form."""
    return loglik_terms(model, path, None, include_initial, eps, j_max).total


def complete_loglik(data, nu: dict, phi: float) -> float:
    """Complete-data log-likelihood of a fully observed hidden system.

    Counts the stationary Poisson law of the initial state, the arrivals
    (rate ``nu(y)``, exposure ``T``) and the departures (rate ``phi`` per live
    event, exposure ``int D``).  Constants not involving the parameters are kept.
    """
    T = data.horizon
    ll = data.n_departures * math.log(phi) - phi * data.risk_integral
    for y, rate in nu.items():
        c0 = data.initial_state[y]
        na = data.arrival_counts.get(y, 0)
        ll += na * math.log(rate) - rate * T
        ll += c0 * math.log(rate / phi) - rate / phi - math.lgamma(c0 + 1)
    return ll
