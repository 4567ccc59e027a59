"""Slow, independent references for the filter and smoother.

Nothing here reuses the production recursions: :func:`ctmc_forward` runs a
discretized hidden Markov chain on a truncated product state space, and
:func:`enumerate_joint` sums the exact complete-data density over every hidden
explanation of a short path.  Laws are returned as ``{count tuple: prob}``
with tuples ordered like ``model.support``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import StateSpaceOverflow, TooManyJumps
from .model import JumpPath, TrawlModel

MAX_STATES = 4096
MAX_JUMPS = 5
MAX_CONFIGS = 2_000_000


def _log_poisson(k, mean):
    if mean == 0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(mean) - mean - math.lgamma(k + 1)


# ---------------------------------------------------------------------------
# discretized CTMC forward recursion


@dataclass
class CtmcMarginals:
    """Filtered laws at each jump: ``before[i]`` is ``p_{tau-,tau-}``, ``after[i]`` is ``p_{tau,tau}``."""

    times: np.ndarray
    before: list
    after: list
    final: dict


def ctmc_forward(model: TrawlModel, path: JumpPath, dt: float, j_max: int = 15) -> CtmcMarginals:
    """Hidden-Markov forward pass with one-step kernel ``I + Q dt``.

    Jump ``i`` is placed in step ``ceil(tau_i / dt)``; every other step is
    conditioned on the observed value staying put.  Arrivals beyond ``j_max``
    are killed, so the chain is sub-stochastic at the truncation boundary.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    marks = np.array(model.support, dtype=np.int64)
    m = len(marks)
    if (j_max + 1) ** m > MAX_STATES:
        raise StateSpaceOverflow(f"{(j_max + 1) ** m} states exceed the cap {MAX_STATES}")
    states = np.array(list(itertools.product(range(j_max + 1), repeat=m)), dtype=np.int64)
    n = len(states)
    nu = np.array(model.levy.mass)
    exit_rate = nu.sum() + model.phi * states.sum(axis=1)
    if dt * exit_rate.max() >= 1:
        raise ValueError("dt too large for the one-step kernel")
    index = {tuple(s): i for i, s in enumerate(states.tolist())}
    P = np.eye(n) - np.diag(exit_rate * dt)
    for i, s in enumerate(states.tolist()):
        for k in range(m):
            up = list(s)
            up[k] += 1
            if tuple(up) in index:
                P[i, index[tuple(up)]] += nu[k] * dt
            if s[k] > 0:
                down = list(s)
                down[k] -= 1
                P[i, index[tuple(down)]] += model.phi * s[k] * dt
    value = states @ marks

    init = np.array([sum(_log_poisson(c, nu[k] / model.phi) for k, c in enumerate(s)) for s in states.tolist()])
    pi = np.where(value == path.y0, np.exp(init), 0.0)
    if pi.sum() == 0:
        raise ValueError("initial value unreachable on the truncated space")
    pi /= pi.sum()

    def law(vec):
        live = np.flatnonzero(vec > 0)
        tot = vec[live].sum()
        return {tuple(states[i].tolist()): vec[i] / tot for i in live}

    before, after = [], []
    y = path.y0
    k_prev = 0
    for t, size in zip(path.times.tolist(), path.sizes.tolist()):
        k = max(math.ceil(t / dt), k_prev + 1)
        sel = value == y
        A = P[np.ix_(sel, sel)]
        sub = pi[sel] @ np.linalg.matrix_power(A, k - k_prev - 1)
        sub /= sub.sum()
        pi = np.zeros(n)
        pi[sel] = sub
        before.append(law(pi))
        y += size
        nxt = value == y
        moved = pi[sel] @ P[np.ix_(sel, nxt)]
        if moved.sum() == 0:
            raise ValueError("observed jump impossible on the truncated space")
        pi = np.zeros(n)
        pi[nxt] = moved / moved.sum()
        after.append(law(pi))
        k_prev = k
    k_end = max(math.ceil(path.horizon / dt), k_prev)
    sel = value == y
    sub = pi[sel] @ np.linalg.matrix_power(P[np.ix_(sel, sel)], k_end - k_prev)
    pi = np.zeros(n)
    pi[sel] = sub / sub.sum()
    return CtmcMarginals(path.times.copy(), before, after, law(pi))


# ---------------------------------------------------------------------------
# exhaustive enumeration of hidden explanations


@dataclass
class JointEnumeration:
    """Exact posterior quantities from brute-force enumeration.

    ``smoothed_before[i]`` is ``p_{tau_i-,T}``; ``arrival_prob[i]`` and
    ``departure_prob[i]`` decompose jump ``i``; ``log_normalizer`` is the log of
    the total density, i.e. the observed-data log-likelihood including the
    initial-value term.
    """

    n_configs: int
    log_normalizer: float
    initial: dict
    smoothed_before: list
    final: dict
    arrival_prob: np.ndarray
    departure_prob: np.ndarray
    arrivals: dict
    departures: dict
    initial_means: dict
    initial_total: float
    risk_integral: float


def enumerate_joint(model: TrawlModel, path: JumpPath, c0_cap: int = 8) -> JointEnumeration:
    """Sum the exact complete-data density over every initial state with counts
    ``<= c0_cap`` and every arrival/departure labelling of the observed jumps."""
    n = len(path)
    if n > MAX_JUMPS:
        raise TooManyJumps(f"{n} jumps exceed the enumeration limit {MAX_JUMPS}")
    marks = list(model.support)
    m = len(marks)
    nu = dict(zip(marks, model.levy.mass))
    nu_total = sum(nu.values())
    phi = model.phi
    times = path.times.tolist()
    sizes = path.sizes.tolist()
    gaps = np.diff([0.0] + times + [path.horizon]).tolist()

    if (c0_cap + 1) ** m > MAX_CONFIGS:
        raise StateSpaceOverflow(f"{(c0_cap + 1) ** m} candidate initial states exceed the cap {MAX_CONFIGS}")
    starts = [c for c in itertools.product(range(c0_cap + 1), repeat=m)
              if sum(y * k for y, k in zip(marks, c)) == path.y0]
    options = []
    for y in sizes:
        opts = []
        if y in nu:
            opts.append(("A", marks.index(y)))
        if -y in nu:
            opts.append(("D", marks.index(-y)))
        options.append(opts)
    n_configs = len(starts) * math.prod(len(o) for o in options)
    if n_configs > MAX_CONFIGS:
        raise StateSpaceOverflow(f"{n_configs} configurations exceed the cap {MAX_CONFIGS}")

    logw, records = [], []
    for c0 in starts:
        prior = sum(_log_poisson(k, nu[y] / phi) for y, k in zip(marks, c0))
        for labels in itertools.product(*options):
            c = list(c0)
            logd = prior
            seq = [tuple(c)]
            risk = 0.0
            ok = True
            for i, (kind, k) in enumerate(labels):
                d = sum(c)
                risk += d * gaps[i]
                if kind == "A":
                    logd += math.log(nu[marks[k]])
                    c[k] += 1
                else:
                    if c[k] == 0:
                        ok = False
                        break
                    logd += math.log(phi * c[k])
                    c[k] -= 1
                seq.append(tuple(c))
            if not ok:
                continue
            risk += sum(c) * gaps[-1]
            logd -= nu_total * path.horizon + phi * risk
            logw.append(logd)
            records.append((seq, labels, risk))
    if not logw:
        raise ValueError("no hidden explanation of the path within the cap")
    logw = np.array(logw)
    top = logw.max()
    w = np.exp(logw - top)
    z = w.sum()
    w /= z

    def accumulate(key_of):
        out = {}
        for wi, rec in zip(w.tolist(), records):
            key = key_of(rec)
            out[key] = out.get(key, 0.0) + wi
        return out

    initial = accumulate(lambda r: r[0][0])
    smoothed = [accumulate(lambda r, i=i: r[0][i]) for i in range(n)]
    final = accumulate(lambda r: r[0][-1])
    arrival = np.array([sum(wi for wi, r in zip(w, records) if r[1][i][0] == "A") for i in range(n)])
    departure = np.array([sum(wi for wi, r in zip(w, records) if r[1][i][0] == "D") for i in range(n)])
    arrivals = {y: 0.0 for y in marks}
    departures = {y: 0.0 for y in marks}
    for wi, (_, labels, _) in zip(w.tolist(), records):
        for kind, k in labels:
            (arrivals if kind == "A" else departures)[marks[k]] += wi
    init_means = {y: sum(p * s[k] for s, p in initial.items()) for k, y in enumerate(marks)}
    return JointEnumeration(
        n_configs=len(records),
        log_normalizer=float(top + math.log(z)),
        initial=initial,
        smoothed_before=smoothed,
        final=final,
        arrival_prob=arrival,
        departure_prob=departure,
        arrivals=arrivals,
        departures=departures,
        initial_means=init_means,
        initial_total=sum(init_means.values()),
        risk_integral=float(sum(wi * r[2] for wi, r in zip(w.tolist(), records))),
    )
