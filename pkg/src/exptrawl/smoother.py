"""Exact backward smoother for the hidden count vector.

The smoothed law is constant in time during inactivity.  Across a jump of size
``y`` at ``tau`` it is pulled back through the filter's one-step explanation of
the jump: each pre-jump state either received an arrival of mark ``y`` or lost
an event of mark ``-y``, and the two partial sums give the smoothed arrival and
departure probabilities of the jump.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentSupport
from .filtering import FilterOutput
from .model import JumpPath, StateDistribution, TrawlModel

SUPPORT_TOL = 1e-9


@dataclass(frozen=True)
class SmoothedJumpWeights:
    """``P(jump was an arrival of its size | F_T)`` and ``P(... a departure of -size | F_T)``."""

    time: float
    size: int
    arrival_prob: float
    departure_prob: float


def _pullback(before_probs, lam, arr_rate, dep_rate, arr_idx, dep_idx, ratio):
    """Unnormalized arrival and departure parts of ``p_{tau-,T}`` on the before-states."""
    ext = np.append(ratio, 0.0)  # index -1 (impossible or pruned target) reads zero
    scale = before_probs / lam
    arr = scale * arr_rate * ext[arr_idx]
    dep = scale * dep_rate * ext[dep_idx]
    return arr, dep


def backward_jump_update(
    p_smooth_after: StateDistribution,
    p_filt_before: StateDistribution,
    p_filt_after: StateDistribution,
    lam: float,
    jump_size: int,
    model: TrawlModel,
):
    """One backward step across a jump.  Returns ``(p_{tau-,T}, SmoothedJumpWeights)``.

    States are matched by their count vectors, so the three laws may list them
    in any order.  Smoothed mass on states the filter does not know about is an
    error beyond ``1e-9``.
    """
    if not lam > 0:
        raise ValueError("intensity must be positive")
    y = int(jump_size)
    marks = list(p_filt_after.marks)
    index = {tuple(r): i for i, r in enumerate(p_filt_after.counts.tolist())}
    ratio = np.zeros(len(index))
    stray = 0.0
    for row, p in zip(p_smooth_after.counts.tolist(), p_smooth_after.probs.tolist()):
        i = index.get(tuple(row))
        if i is None:
            stray += p
        else:
            ratio[i] = p / p_filt_after.probs[i]
    if stray > SUPPORT_TOL:
        raise InconsistentSupport(f"smoothed law puts {stray:.3g} mass outside the filtering support")

    counts = p_filt_before.counts
    n = len(counts)
    arr_idx = np.full(n, -1)
    dep_idx = np.full(n, -1)
    dep_rate = np.zeros(n)
    arr_rate = model.rate(y)
    for i, row in enumerate(counts.tolist()):
        if y in marks and arr_rate > 0:
            r = list(row)
            r[marks.index(y)] += 1
            arr_idx[i] = index.get(tuple(r), -1)
        if -y in marks and row[marks.index(-y)] > 0:
            k = marks.index(-y)
            r = list(row)
            r[k] -= 1
            dep_idx[i] = index.get(tuple(r), -1)
            dep_rate[i] = model.phi * row[k]
    arr, dep = _pullback(p_filt_before.probs, lam, arr_rate, dep_rate, arr_idx, dep_idx, ratio)
    total = arr.sum() + dep.sum()
    probs = (arr + dep) / total
    live = probs > 0
    dist = StateDistribution(p_filt_before.marks, counts[live], probs[live], p_filt_before.anchor)
    return dist, SmoothedJumpWeights(float("nan"), y, arr.sum() / total, dep.sum() / total)


@dataclass(eq=False)
class SmootherOutput:
    """Smoothed laws at the jump times plus the arrival/departure weights.

    ``before_probs[i]`` is ``p_{tau_i-,T}`` on the states of the filter's
    ``before(i)`` law; ``initial_probs`` is ``p_{0,T}`` on the initial states.
    """

    filter: FilterOutput
    before_probs: list
    arrival_prob: np.ndarray
    departure_prob: np.ndarray
    initial_probs: np.ndarray

    @property
    def path(self) -> JumpPath:
        return self.filter.path

    def _dist(self, counts, probs, anchor):
        live = probs > 0
        return StateDistribution(self.filter.marks, counts[live], probs[live], anchor)

    def smoothed_before(self, i) -> StateDistribution:
        f = self.filter
        return self._dist(f.steps[i].before_counts, self.before_probs[i], f._anchor(i))

    @property
    def at_jumps(self) -> list:
        """``p_{tau-,T}`` at every jump."""
        return [self.smoothed_before(i) for i in range(len(self.before_probs))]

    @property
    def initial_smoothed(self) -> StateDistribution:
        """``p_{0,T}``."""
        f = self.filter
        return self._dist(f.initial_counts, self.initial_probs, f.path.y0)

    @property
    def weights(self) -> list:
        p = self.path
        return [
            SmoothedJumpWeights(t, s, a, d)
            for t, s, a, d in zip(
                p.times.tolist(), p.sizes.tolist(), self.arrival_prob.tolist(), self.departure_prob.tolist()
            )
        ]

    def mean_paths(self):
        """Smoothed means at the jump left limits, as ``(times, means)``."""
        f = self.filter
        means = np.array([q @ s.before_counts for q, s in zip(self.before_probs, f.steps)])
        return self.path.times.copy(), means.reshape(-1, len(f.marks))

    def mean_total_steps(self):
        """``E[D_t | F_T]`` as a right-continuous step function: values on
        ``[0, tau_1), [tau_1, tau_2), ..., [tau_n, T]``."""
        d0 = float(self.initial_probs @ self.filter.initial_counts.sum(axis=1))
        return d0 + np.concatenate([[0.0], np.cumsum(self.arrival_prob - self.departure_prob)])


def run_smoother(model: TrawlModel, filter_output: FilterOutput, path: JumpPath | None = None) -> SmootherOutput:
    """Backward pass from ``p_{T,T}`` through every jump to ``p_{0,T}``."""
    f = filter_output
    if path is not None and path != f.path:
        raise ValueError("filter output was computed on a different path")
    if model != f.model:
        raise ValueError("filter output was computed under a different model")
    if len(f.steps) != len(f.path):
        raise ValueError("filter output has no per-jump records (run_filter(record=True))")
    n = len(f.steps)
    # p_{T,T} lives on the surviving after-states of the last jump (or the initial states)
    last = f.steps[-1].after_probs if n else f.initial_probs
    smooth = np.zeros(len(last))
    smooth[f.final_keep] = f.final_probs
    before = [None] * n
    arrival = np.zeros(n)
    departure = np.zeros(n)
    for i in range(n - 1, -1, -1):
        s = f.steps[i]
        arr, dep = _pullback(s.before_probs, s.lam, s.arr_rate, s.dep_rate, s.arr_idx, s.dep_idx, smooth / s.after_probs)
        a, d = arr.sum(), dep.sum()
        total = a + d
        q = (arr + dep) / total
        before[i] = q
        arrival[i], departure[i] = a / total, d / total
        prev = f.steps[i - 1].after_probs if i else f.initial_probs
        smooth = np.zeros(len(prev))
        smooth[s.keep] = q
    return SmootherOutput(f, before, arrival, departure, smooth)
