"""Exact simulation of the hidden event system and the observed trawl path.

Randomness comes from NumPy's Philox4x32-10 counter-based bit generator keyed by
the integer seed, so a ``(model, horizon, seed)`` triple reproduces the same
trace on every platform.  Draws are consumed in a fixed order: the initial
counts, then for each mark in increasing order the residual lifetimes of its
initial events, its number of arrivals, the arrival times and their lifetimes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CompleteData, JumpPath, StateVector, TrawlModel

ARRIVAL = 1
DEPARTURE = -1


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class HiddenTrace:
    """Initial hidden counts plus every arrival/departure in ``(0, T]``.

    ``kinds`` holds :data:`ARRIVAL` or :data:`DEPARTURE`; the observed jump of an
    event is ``kinds * marks``.
    """

    initial_state: StateVector
    times: np.ndarray
    marks: np.ndarray
    kinds: np.ndarray

    def events(self):
        kind = {ARRIVAL: "arrival", DEPARTURE: "departure"}
        return [(t, m, kind[k]) for t, m, k in zip(self.times.tolist(), self.marks.tolist(), self.kinds.tolist())]

    def counts_path(self, marks) -> np.ndarray:
        """Hidden counts after each event; row ``i`` is the state after event ``i``."""
        marks = list(marks)
        col = np.searchsorted(marks, self.marks)
        steps = np.zeros((len(self.times), len(marks)), dtype=np.int64)
        steps[np.arange(len(self.times)), col] = self.kinds
        c0 = np.array([self.initial_state[y] for y in marks], dtype=np.int64)
        return c0 + np.cumsum(steps, axis=0)

    def state_at(self, t: float) -> StateVector:
        k = np.searchsorted(self.times, t, side="right")
        counts = dict(self.initial_state.items)
        for m, kind in zip(self.marks[:k].tolist(), self.kinds[:k].tolist()):
            counts[m] = counts.get(m, 0) + kind
        return StateVector.from_dict(counts)


def sample_initial_state(model: TrawlModel, seed=None, rng=None) -> StateVector:
    """Stationary draw: independent ``Poisson(nu(y) / phi)`` counts per mark."""
    rng = make_rng(seed) if rng is None else rng
    means = np.array(model.levy.mass) / model.phi
    draws = rng.poisson(means)
    return StateVector(tuple(zip(model.support, draws.tolist())))


def _strictly_increasing(times: np.ndarray) -> np.ndarray:
    times = times.copy()
    if len(times) and times[0] <= 0:
        times[0] = np.nextafter(0.0, 1.0)
    for i in np.flatnonzero(np.diff(times) <= 0) + 1:
        # collisions are rare; fix them sequentially so cascades resolve
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    return times


def simulate(model: TrawlModel, horizon: float, seed=None, rng=None):
    """Simulate ``(JumpPath, HiddenTrace)`` on ``(0, horizon]`` from the stationary regime.

    Arrivals of mark ``y`` form a Poisson process of rate ``nu(y)``; each event,
    including those alive at time 0, lives an ``Exponential(phi)`` time.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = make_rng(seed) if rng is None else rng
    c0 = sample_initial_state(model, rng=rng)
    times, marks, kinds = [], [], []
    for y, nu in zip(model.support, model.levy.mass):
        life0 = rng.exponential(1 / model.phi, size=c0[y])
        n = rng.poisson(nu * horizon)
        arrive = np.sort(rng.uniform(0.0, horizon, size=n))
        leave = arrive + rng.exponential(1 / model.phi, size=n)
        dep = np.concatenate([life0, leave])
        dep = dep[dep <= horizon]
        times += [arrive, dep]
        marks += [np.full(n, y), np.full(len(dep), y)]
        kinds += [np.full(n, ARRIVAL), np.full(len(dep), DEPARTURE)]
    times = np.concatenate(times) if times else np.empty(0)
    marks = np.concatenate(marks).astype(np.int64) if marks else np.empty(0, np.int64)
    kinds = np.concatenate(kinds).astype(np.int64) if kinds else np.empty(0, np.int64)
    # arrivals sort before departures at equal times so counts stay nonnegative
    order = np.lexsort((-kinds, times))
    times = _strictly_increasing(times[order])
    trace = HiddenTrace(c0, times, marks[order], kinds[order])
    path = JumpPath(c0.value, horizon, times, trace.kinds * trace.marks)
    return path, trace


def replay(trace: HiddenTrace, horizon: float) -> JumpPath:
    """Rebuild the observed path from a hidden trace: ``Y = sum_y y * C^(y)``."""
    marks = sorted(set(trace.marks.tolist()) | set(trace.initial_state.as_dict()))
    if not marks:
        return JumpPath(0, horizon)
    counts = trace.counts_path(marks)
    values = counts @ np.array(marks)
    y0 = trace.initial_state.value
    sizes = np.diff(np.concatenate([[y0], values]))
    return JumpPath(y0, horizon, trace.times, sizes)


def complete_data(trace: HiddenTrace, horizon: float, path: JumpPath | None = None) -> CompleteData:
    """Sufficient complete-data statistics of a hidden trace on ``(0, horizon]``."""
    arrivals, departures = {}, {}
    for m, k in zip(trace.marks.tolist(), trace.kinds.tolist()):
        target = arrivals if k == ARRIVAL else departures
        target[m] = target.get(m, 0) + 1
    d0 = trace.initial_state.total
    d_after = d0 + np.cumsum(trace.kinds)
    levels = np.concatenate([[d0], d_after])
    edges = np.concatenate([[0.0], trace.times, [horizon]])
    risk = float(levels @ np.diff(edges))
    return CompleteData(horizon, trace.initial_state, arrivals, departures, risk, path)
