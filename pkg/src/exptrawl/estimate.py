"""Estimators for exponential-trawl models.

* :func:`mcle` -- closed-form maximizer of the complete-data likelihood.
* :func:`em_fit` -- exact EM: smoothed sufficient statistics plugged into the
  same closed form.
* :func:`direct_mle` -- Nelder-Mead on the grid-approximated observed likelihood.
* :func:`mple_levy`, :func:`mple_geometric`, :func:`mple_phi`,
  :func:`initial_bounds` -- the non-negative (positive-support) case.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateData, NegativePathValue, NotConverged, TrawlError
from .filtering import run_filter
from .likelihood import log_likelihood, loglik_terms
from .model import (
    EPS_PRUNE,
    J_MAX,
    TAIL_TOL,
    CompleteData,
    JumpPath,
    LevyMeasure,
    TrawlModel,
    geometric_levy,
)
from .smoother import run_smoother

GOLDEN = (math.sqrt(5) - 1) / 2


# ---------------------------------------------------------------------------
# closed-form complete-data estimator


def _closed_form(T, mark_counts, n_arr, n_dep, d0, integral):
    """``mark_counts[y] = N^A_y + C0_y``; ``n_arr``, ``n_dep`` are the total
    arrival and departure counts."""
    if not integral > 0:
        raise DegenerateData("integral of the hidden total is zero: phi is not identified")
    n_jumps = n_arr + n_dep
    if n_jumps + d0 <= 0:
        raise DegenerateData("no events observed")
    xi = n_dep - d0 - integral / T
    phi = (xi + math.sqrt(xi * xi + 4 * n_jumps / T * integral)) / (2 * integral)
    if not phi > 0:
        raise DegenerateData("closed-form phi is not positive (no jumps)")
    scale = T + 1 / phi
    nu = {}
    for y, c in sorted(mark_counts.items()):
        if not c > 0:
            raise DegenerateData(f"mark {y}: no arrivals and no initial events")
        nu[y] = c / scale
    return TrawlModel(LevyMeasure.from_dict(nu), phi)


def mcle(data: CompleteData, support=None) -> TrawlModel:
    """Complete-data MLE.  ``support`` defaults to the marks present in ``data``."""
    marks = sorted(support) if support is not None else data.marks()
    counts = {y: data.arrival_counts.get(y, 0) + data.initial_state[y] for y in marks}
    return _closed_form(
        data.horizon, counts, data.n_arrivals, data.n_departures, data.initial_state.total, data.risk_integral
    )


# ---------------------------------------------------------------------------
# EM


@dataclass(frozen=True)
class SufficientStats:
    """Smoothed expectations of the complete-data statistics given ``F_T``."""

    arrivals: dict  # E[N^A_y]
    departures: dict  # E[N^D_y]
    initial: dict  # E[C0_y]
    initial_total: float  # E[D0]
    risk_integral: float  # int E[D_{t-}] dt

    @property
    def n_jumps(self) -> float:
        return sum(self.arrivals.values()) + sum(self.departures.values())


def _stats_from_smoother(sm) -> SufficientStats:
    f = sm.filter
    marks = f.marks
    path = f.path
    sizes = path.sizes
    arrivals = {y: float(sm.arrival_prob[sizes == y].sum()) for y in marks}
    departures = {y: float(sm.departure_prob[sizes == -y].sum()) for y in marks}
    init = dict(zip(marks, (sm.initial_probs @ f.initial_counts).tolist()))
    levels = sm.mean_total_steps()
    edges = np.concatenate([[0.0], path.times, [path.horizon]])
    return SufficientStats(arrivals, departures, init, float(levels[0]), float(levels @ np.diff(edges)))


def _e_step(model, path, monitor_delta, eps, j_max):
    out = run_filter(model, path, eps=eps, j_max=j_max)
    stats = _stats_from_smoother(run_smoother(model, out))
    ll = None
    if monitor_delta is not None:
        ll = log_likelihood(model, path, monitor_delta, True, eps, j_max)
    return stats, ll


def e_step(model: TrawlModel, path: JumpPath, eps: float = EPS_PRUNE, j_max: int = J_MAX) -> SufficientStats:
    """Smoothed sufficient statistics.  ``int E[D | F_T]`` is integrated exactly,
    since the smoothed mean is a step function between jumps."""
    return _e_step(model, path, None, eps, j_max)[0]


def m_step(stats: SufficientStats, T: float) -> TrawlModel:
    """Closed-form complete-data maximizer evaluated at expected statistics."""
    counts = {y: stats.arrivals[y] + stats.initial[y] for y in stats.arrivals}
    return _closed_form(
        T, counts, sum(stats.arrivals.values()), sum(stats.departures.values()),
        stats.initial_total, stats.risk_integral,
    )


@dataclass(frozen=True)
class EmIteration:
    params: np.ndarray  # parameters at which the E-step ran
    loglik: float | None  # monitor log-likelihood at those parameters
    max_change: float  # max |theta_{k+1} - theta_k|


@dataclass
class EmTrace:
    iterations: list = field(default_factory=list)
    converged: bool = False

    @property
    def logliks(self) -> np.ndarray:
        return np.array([it.loglik for it in self.iterations], dtype=float)

    @property
    def params(self) -> np.ndarray:
        return np.array([it.params for it in self.iterations])

    def __len__(self):
        return len(self.iterations)


def em_fit(
    initial: TrawlModel,
    path: JumpPath,
    tol: float = 1e-6,
    max_iter: int = 500,
    monitor_delta: float | None = 0.01,
    eps: float = EPS_PRUNE,
    j_max: int = J_MAX,
    raise_on_failure: bool = True,
):
    """EM on ``l_{F_T}``; stops when every parameter moves by less than ``tol``.

    Each iteration records the monitor log-likelihood (grid spacing
    ``monitor_delta``; ``None`` disables it) at the parameters the E-step used.
    Returns ``(model, EmTrace)``.  If ``max_iter`` is reached, raises
    :class:`NotConverged` carrying ``(model, trace)`` unless
    ``raise_on_failure`` is false.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    model = initial
    trace = EmTrace()
    for _ in range(max_iter):
        stats, ll = _e_step(model, path, monitor_delta, eps, j_max)
        new = m_step(stats, path.horizon)
        change = float(np.max(np.abs(new.params() - model.params())))
        trace.iterations.append(EmIteration(model.params(), ll, change))
        model = new
        if change < tol:
            trace.converged = True
            return model, trace
    if raise_on_failure:
        raise NotConverged(f"EM did not converge in {max_iter} iterations", best=(model, trace))
    return model, trace


# ---------------------------------------------------------------------------
# direct maximization


def direct_mle(
    initial: TrawlModel,
    path: JumpPath,
    delta: float = 0.5,
    include_initial: bool = True,
    xatol: float = 1e-8,
    fatol: float = 1e-8,
    max_eval: int = 5000,
    eps: float = EPS_PRUNE,
    j_max: int = J_MAX,
    full_output: bool = False,
    history: list | None = None,
):
    """Maximize the grid log-likelihood by Nelder-Mead over ``log`` parameters.

    Infeasible points (zero-intensity jumps, truncation failures) score
    ``-inf``.  With ``full_output`` also returns the scipy result.  Every
    evaluation is appended to ``history`` as ``(params, loglik)`` when given.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")

    def objective(x):
        theta = np.exp(x)
        try:
            ll = log_likelihood(initial.with_params(theta), path, delta, include_initial, eps, j_max)
        except TrawlError:
            ll = -math.inf
        if history is not None:
            history.append((theta, ll))
        return -ll

    x0 = np.log(initial.params())
    res = minimize(
        objective, x0, method="Nelder-Mead",
        options={"xatol": xatol, "fatol": fatol, "maxfev": max_eval, "maxiter": max_eval},
    )
    if not np.isfinite(res.fun):
        raise NotConverged("no feasible point found", best=initial)
    model = initial.with_params(np.exp(res.x))
    if not res.success:
        raise NotConverged(f"Nelder-Mead stopped: {res.message}", best=model)
    return (model, res) if full_output else model


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("TRAWL_THREADS", "1")))
    except ValueError:
        return 1


def profile_loglik(model: TrawlModel, path: JumpPath, phis, delta: float | None = 0.5, include_initial=True):
    """``l(nu, phi)`` over a list of ``phi`` values with ``nu`` held fixed.

    ``delta=None`` integrates exactly.  Evaluations run on up to
    ``TRAWL_THREADS`` worker threads.
    """
    def one(phi):
        return loglik_terms(model.with_phi(phi), path, delta, include_initial).total

    phis = list(phis)
    n = _workers()
    if n == 1:
        return np.array([one(p) for p in phis])
    with ThreadPoolExecutor(max_workers=n) as pool:
        return np.array(list(pool.map(one, phis)))


# ---------------------------------------------------------------------------
# non-negative case


def golden_max(f, lo: float, hi: float, tol: float = 1e-8, max_iter: int = 500):
    """Maximize a unimodal ``f`` on ``[lo, hi]`` by golden-section search.

    Returns ``(x, f(x))`` once the bracket is shorter than ``tol``.
    """
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    else:
        raise NotConverged("golden-section search did not shrink the bracket")
    return (c, fc) if fc >= fd else (d, fd)


def _require_nonnegative(path: JumpPath):
    if path.y0 < 0 or (len(path) and path.values().min() < 0):
        raise NegativePathValue("the path takes negative values; the non-negative model does not apply")


def _size_counts(path: JumpPath) -> dict:
    sizes, counts = np.unique(path.sizes, return_counts=True)
    return dict(zip(sizes.tolist(), counts.tolist()))


def mple_levy(path: JumpPath) -> LevyMeasure:
    """Partial-likelihood estimate ``nu(y) = N^(y) / T`` over the observed positive jump sizes."""
    _require_nonnegative(path)
    counts = {y: c for y, c in _size_counts(path).items() if y > 0}
    if not counts:
        raise DegenerateData("no positive jumps observed")
    return LevyMeasure.from_dict({y: c / path.horizon for y, c in counts.items()})


@dataclass(frozen=True)
class GeometricFit:
    total: float
    eta: float
    partial_loglik: float

    def levy(self, tail_tol: float = TAIL_TOL) -> LevyMeasure:
        return geometric_levy(self.total, self.eta, tail_tol)


def geometric_partial_loglik(path: JumpPath, total: float, eta: float) -> float:
    """``sum_y [N^(y) log nu(y | eta) - nu(y | eta) T]`` for ``nu(y) = total * eta (1 - eta)^(y - 1)``."""
    counts = {y: c for y, c in _size_counts(path).items() if y > 0}
    n = sum(counts.values())
    excess = sum((y - 1) * c for y, c in counts.items())
    ll = n * math.log(total * eta) - total * path.horizon
    if excess:
        ll += excess * math.log1p(-eta)
    return ll


def mple_geometric(path: JumpPath, tol: float = 1e-8) -> GeometricFit:
    """Fit the geometric Levy basis by nested golden-section search:
    ``eta`` on ``(0, 1)`` outside, ``log total`` inside."""
    _require_nonnegative(path)
    if not any(y > 0 for y in path.sizes.tolist()):
        raise DegenerateData("no positive jumps observed")
    T = path.horizon
    lo, hi = math.log(1e-12 / T), math.log(1e12 / T)

    def inner(eta):
        return golden_max(lambda lt: geometric_partial_loglik(path, math.exp(lt), eta), lo, hi, tol)

    eta, best = golden_max(lambda e: inner(e)[1], 0.0 + 1e-12, 1.0 - 1e-12, tol)
    log_total, _ = inner(eta)
    for edge in (lo, hi):
        if abs(log_total - edge) < 10 * tol:
            raise NotConverged("total mass at the search boundary")
    return GeometricFit(math.exp(log_total), eta, best)


def profile_phi(
    path: JumpPath,
    levy: LevyMeasure,
    bracket=(1e-4, 1e2),
    delta: float | None = None,
    tol: float = 1e-6,
    include_initial: bool = True,
    history: list | None = None,
):
    """``argmax_phi l(levy, phi)`` by golden-section search over ``log phi``.

    Returns ``(phi, loglik)``.  ``delta=None`` uses the exact intensity
    integral.  An optimum on the edge of ``bracket`` raises
    :class:`NotConverged`.  Evaluations are appended to ``history`` as
    ``(phi, loglik)`` when given.
    """
    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    infeasible = []

    def f(lp):
        try:
            ll = loglik_terms(TrawlModel(levy, math.exp(lp)), path, delta, include_initial).total
        except TrawlError:
            ll = -math.inf
            infeasible.append(lp)
        if history is not None:
            history.append((math.exp(lp), ll))
        return ll

    lp, val = golden_max(f, lo, hi, tol)
    if not np.isfinite(val):
        raise NotConverged("likelihood infeasible across the bracket")
    if min(lp - lo, hi - lp) < 10 * tol:
        raise NotConverged(f"phi optimum at the bracket edge ({math.exp(lp):.3g})", best=math.exp(lp))
    # an infeasible region inside the bracket acts as an edge too
    if infeasible and min(abs(lp - x) for x in infeasible) < 10 * tol:
        raise NotConverged(f"phi optimum at the edge of the feasible region ({math.exp(lp):.3g})",
                           best=math.exp(lp))
    return math.exp(lp), val


def mple_phi(
    path: JumpPath,
    levy: LevyMeasure,
    bracket=(1e-4, 1e2),
    delta: float | None = None,
    tol: float = 1e-6,
    include_initial: bool = True,
    history: list | None = None,
) -> float:
    """Second stage of the partial-likelihood fit: ``phi`` maximizing the
    observed likelihood with the Levy measure fixed (see :func:`profile_phi`)."""
    _require_nonnegative(path)
    return profile_phi(path, levy, bracket, delta, tol, include_initial, history)[0]


def initial_bounds(path: JumpPath, marks=None) -> dict:
    """Deterministic bounds on the initial hidden counts of a non-negative path.

    ``lower[y] = sup_t (N_t^(-y) - N_t^(y))`` and
    ``upper[y] = floor((Y0 - sum_{y' != y} y' lower[y']) / y)``.
    Returns ``{y: (lower, upper)}``.
    """
    _require_nonnegative(path)
    if marks is None:
        top = max([path.y0] + [abs(s) for s in path.sizes.tolist()])
        marks = range(1, top + 1)
    marks = sorted(int(y) for y in marks)
    if any(y <= 0 for y in marks):
        raise ValueError("marks must be positive")
    sizes = path.sizes
    lower = {}
    for y in marks:
        step = (sizes == -y).astype(np.int64) - (sizes == y).astype(np.int64)
        lower[y] = int(max(0, np.cumsum(step).max())) if len(step) else 0
    weighted = sum(y * c for y, c in lower.items())
    return {y: (lower[y], (path.y0 - (weighted - y * lower[y])) // y) for y in marks}


# ---------------------------------------------------------------------------
# starting values


def moment_start(path: JumpPath, support) -> TrawlModel:
    """Method-of-moments flavoured start: ``nu(y) = N^(y) / (2T)`` and ``phi``
    equal to the jump frequency ``N / T``.  Sizes never observed get half a jump."""
    T = path.horizon
    counts = _size_counts(path)
    nu = {y: max(counts.get(y, 0), 0.5) / (2 * T) for y in support}
    phi = max(len(path), 1) / T
    return TrawlModel(LevyMeasure.from_dict(nu), phi)
