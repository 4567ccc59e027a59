"""Exact forward filter for the hidden count vector.

Between jumps the filtering law is reweighted by ``exp(-phi * ||j||_1 * dt)``;
at a jump of size ``y`` each state either received an arrival of mark ``y``
(rate ``nu(y)``) or lost one event of mark ``-y`` (rate ``phi * j_{-y}``).

Distributions are handled as a pair of arrays: an integer ``counts`` matrix
with one row per state and one column per mark of the model support, and a
``probs`` vector.  States whose probability falls below ``eps`` times the total
are dropped after each update, as are states with a count above ``j_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import (
    TruncationError,
    UnreachableInitialValue,
    ZeroIntensityJump,
)
from .model import EPS_PRUNE, J_MAX, JumpPath, StateDistribution, TrawlModel

LOST_MASS_TOL = 1e-9
_GRID_CHUNK = 1 << 18


# ---------------------------------------------------------------------------
# initial distribution


def _poisson_logpmf(mean: float, n: int) -> np.ndarray:
    k = np.arange(n + 1)
    return k * math.log(mean) - mean - gammaln(k + 1)


def _target_windows(marks, j_max):
    """For each prefix length, the range of partial sums that can still reach any target."""
    lo = [0] * (len(marks) + 1)
    hi = [0] * (len(marks) + 1)
    for i in range(len(marks) - 1, -1, -1):
        y = marks[i]
        lo[i] = lo[i + 1] + min(0, y * j_max)
        hi[i] = hi[i + 1] + max(0, y * j_max)
    return lo, hi


def _initial_normalizer(marks, log_pmfs, y0, j_max) -> float:
    """``P(sum_y y C_y = y0)`` by direct summation over the truncated lattice."""
    lo_rem, hi_rem = _target_windows(marks, j_max)
    # dist maps partial sum -> probability, stored densely over [base, base + len)
    base, dist = 0, np.ones(1)
    for i, y in enumerate(marks):
        pmf = np.exp(log_pmfs[i])
        new_base = base + min(0, y * j_max)
        new = np.zeros(len(dist) + abs(y) * j_max)
        for c, p in enumerate(pmf):
            if p == 0.0:
                continue
            start = base + y * c - new_base
            new[start:start + len(dist)] += p * dist
        # drop partial sums from which y0 is unreachable
        lo = max(new_base, y0 - hi_rem[i + 1])
        hi = min(new_base + len(new) - 1, y0 - lo_rem[i + 1])
        if hi < lo:
            return 0.0
        dist = new[lo - new_base:hi - new_base + 1]
        base = lo
    return float(dist[y0 - base]) if base <= y0 < base + len(dist) else 0.0


def _enumerate_states(marks, log_pmfs, y0, j_max, log_floor):
    """All count vectors with ``sum y * j_y == y0`` and log mass above ``log_floor``."""
    m = len(marks)
    max_tail = np.zeros(m + 1)
    for i in range(m - 1, -1, -1):
        max_tail[i] = max_tail[i + 1] + log_pmfs[i].max()
    lo_rem, hi_rem = _target_windows(marks, j_max)
    rows, logps = [], []
    current = [0] * m

    def visit(i, partial, logp):
        y = marks[i]
        if i == m - 1:
            rest = y0 - partial
            if rest % y:
                return
            c = rest // y
            if 0 <= c <= j_max and logp + log_pmfs[i][c] >= log_floor:
                current[i] = c
                rows.append(list(current))
                logps.append(logp + log_pmfs[i][c])
            current[i] = 0
            return
        for c in range(j_max + 1):
            lp = logp + log_pmfs[i][c]
            s = partial + y * c
            if lp + max_tail[i + 1] < log_floor:
                # pmf values past the mode only decrease
                if c > 0 and log_pmfs[i][c] < log_pmfs[i][c - 1]:
                    break
                continue
            if not (y0 - hi_rem[i + 1] <= s <= y0 - lo_rem[i + 1]):
                if (y > 0 and s > y0 - lo_rem[i + 1]) or (y < 0 and s < y0 - hi_rem[i + 1]):
                    break
                continue
            current[i] = c
            visit(i + 1, s, lp)
        current[i] = 0

    visit(0, 0, 0.0)
    return np.array(rows, dtype=np.int64).reshape(-1, m), np.array(logps)


def _log_pmfs(model, j_max):
    return [_poisson_logpmf(m, j_max) for m in model.stationary_means().values()]


def _checked_log_norm(model, log_pmfs, y0, j_max):
    norm = _initial_normalizer(model.support, log_pmfs, y0, j_max)
    if not norm >= 1e-300:
        raise UnreachableInitialValue(
            f"P(Y0 = {y0}) = {norm:.3g} under the model: initial value is unreachable"
        )
    return math.log(norm)


def initial_log_normalizer(model: TrawlModel, y0: int, j_max: int = J_MAX) -> float:
    """``log P(sum_y y C0_y = y0)`` under the stationary law, counts capped at ``j_max``."""
    return _checked_log_norm(model, _log_pmfs(model, j_max), int(y0), j_max)


def _initial(model: TrawlModel, y0: int, eps: float = EPS_PRUNE, j_max: int = J_MAX):
    marks = model.support
    log_pmfs = _log_pmfs(model, j_max)
    log_norm = _checked_log_norm(model, log_pmfs, y0, j_max)
    counts, logps = _enumerate_states(marks, log_pmfs, y0, j_max, log_norm + math.log(eps))
    probs = np.exp(logps - log_norm)
    lost = 1.0 - probs.sum()
    if lost > LOST_MASS_TOL:
        raise TruncationError(f"initial distribution lost {lost:.3g} probability to pruning")
    return counts, probs / probs.sum(), log_norm


def initial_distribution(
    model: TrawlModel, y0: int, eps: float = EPS_PRUNE, j_max: int = J_MAX, return_log_norm: bool = False
):
    """Stationary product-Poisson law of the counts conditioned on ``sum_y y C_y = y0``.

    With ``return_log_norm`` also return ``log P(Y0 = y0)``.
    """
    counts, probs, log_norm = _initial(model, y0, eps, j_max)
    dist = StateDistribution(model.support, counts, probs, y0)
    return (dist, log_norm) if return_log_norm else dist


# ---------------------------------------------------------------------------
# raw-array updates


def _prune(probs, eps):
    """Indices of states kept after relative pruning, and the discarded mass fraction."""
    total = probs.sum()
    keep = np.flatnonzero(probs >= eps * total)
    lost = 1.0 - probs[keep].sum() / total
    return keep, lost


def _decay_raw(counts, probs, elapsed, phi, eps):
    """Returns ``(keep, probs, log_survival)`` where ``log_survival`` is
    ``log sum_j p(j) exp(-phi ||j|| elapsed)``, minus ``phi`` times the exact
    integral of ``E[D]`` over the elapsed time."""
    norms = counts.sum(axis=1)
    d_min = norms.min()
    w = probs * np.exp(-phi * (norms - d_min) * elapsed)
    log_survival = math.log(w.sum()) - phi * d_min * elapsed
    keep, lost = _prune(w, eps)
    if lost > LOST_MASS_TOL:
        raise TruncationError(f"decay pruning discarded {lost:.3g} probability")
    w = w[keep]
    return keep, w / w.sum(), log_survival


def _row_keys(rows):
    """Integer keys that identify rows of a nonnegative integer matrix."""
    active = np.flatnonzero(rows.any(axis=0))
    sub = rows[:, active]
    base = int(sub.max(initial=0)) + 1
    if base ** len(active) < 2 ** 62:
        radix = base ** np.arange(len(active), dtype=np.int64)
        return sub @ radix
    return None


def _merge(rows, weights):
    """Sum weights of identical rows.  Returns unique rows (sorted), sums and inverse map."""
    keys = _row_keys(rows)
    if keys is not None:
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        merged_rows = rows[first]
    else:
        merged_rows, inverse = np.unique(rows, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
    sums = np.bincount(inverse, weights=weights, minlength=len(merged_rows))
    return merged_rows, sums, inverse


@dataclass
class _JumpResult:
    counts: np.ndarray
    probs: np.ndarray
    lam: float
    arr_idx: np.ndarray  # after-state index reached by an arrival, -1 if none
    dep_idx: np.ndarray  # after-state index reached by a departure, -1 if none
    arr_rate: float
    dep_rate: np.ndarray  # phi * j_{-y} per before-state


def _jump_raw(marks, counts, probs, y, model, eps, j_max) -> _JumpResult:
    n = len(probs)
    nu = model.rate(y)
    rows, weights, slots = [], [], []
    arr_idx = np.full(n, -1)
    dep_idx = np.full(n, -1)
    dep_rate = np.zeros(n)
    if nu > 0:
        a = counts.copy()
        a[:, marks.index(y)] += 1
        rows.append(a)
        weights.append(nu * probs)
        slots.append(("a", np.arange(n)))
    if -y in marks:
        k = marks.index(-y)
        dep_rate = model.phi * counts[:, k].astype(float)
        src = np.flatnonzero(counts[:, k] > 0)
        d = counts[src]
        d[:, k] -= 1
        rows.append(d)
        weights.append(dep_rate[src] * probs[src])
        slots.append(("d", src))
    lam = float(sum(w.sum() for w in weights))
    if not lam > 0:
        raise ZeroIntensityJump(f"jump of size {y} has zero intensity under the model")
    rows = np.vstack(rows)
    weights = np.concatenate(weights)
    capped = rows.max(axis=1) > j_max
    capped_mass = weights[capped].sum() / lam
    merged, sums, inverse = _merge(rows, np.where(capped, 0.0, weights))
    keep, lost = _prune(sums, eps)
    lost = capped_mass + (1 - capped_mass) * lost
    if lost > LOST_MASS_TOL:
        raise TruncationError(f"jump update discarded {lost:.3g} probability (j_max={j_max})")
    remap = np.full(len(sums), -1)
    remap[keep] = np.arange(len(keep))
    target = np.where(capped, -1, remap[inverse])
    pos = 0
    for kind, src in slots:
        part = target[pos:pos + len(src)]
        (arr_idx if kind == "a" else dep_idx)[src] = part
        pos += len(src)
    new_probs = sums[keep]
    return _JumpResult(merged[keep], new_probs / new_probs.sum(), lam, arr_idx, dep_idx, nu, dep_rate)


# ---------------------------------------------------------------------------
# public single-step updates


def decay_update(dist: StateDistribution, elapsed: float, phi: float, eps: float = EPS_PRUNE) -> StateDistribution:
    """Condition on no jump during ``elapsed`` time units."""
    if elapsed < 0:
        raise ValueError("elapsed time must be nonnegative")
    keep, probs, _ = _decay_raw(dist.counts, dist.probs, elapsed, phi, eps)
    return StateDistribution(dist.marks, dist.counts[keep], probs, dist.anchor)


def jump_update(
    dist: StateDistribution, jump_size: int, model: TrawlModel, eps: float = EPS_PRUNE, j_max: int = J_MAX
):
    """Condition on a jump of ``jump_size``.  Returns ``(new distribution, intensity)``.

    The intensity is the left-limit conditional intensity of the observed jump.
    """
    res = _jump_raw(dist.marks, dist.counts, dist.probs, int(jump_size), model, eps, j_max)
    return StateDistribution(dist.marks, res.counts, res.probs, dist.anchor + int(jump_size)), res.lam


def conditional_intensity(dist: StateDistribution, model: TrawlModel) -> dict:
    """Conditional intensity of every jump size reachable under the model.

    ``lambda(y) = nu(y) + phi * E[C^(-y)]``; sizes are the support and its negation.
    """
    sizes = sorted(set(model.support) | {-y for y in model.support})
    return {y: model.rate(y) + model.phi * dist.mean(-y) for y in sizes}


# ---------------------------------------------------------------------------
# intensity integral on a grid


def grid_offsets(start: float, stop: float, delta: float) -> np.ndarray:
    """Offsets from ``start`` of the nodes of the global ``delta`` grid inside
    ``(start, stop)``, bracketed by ``0`` and ``stop - start``."""
    k0 = math.floor(start / delta) + 1
    k1 = math.ceil(stop / delta) - 1
    inner = np.arange(k0, k1 + 1) * delta
    inner = inner[(inner > start) & (inner < stop)]
    return np.concatenate([[0.0], inner - start, [stop - start]])


def expected_total_on(norms, probs, phi, offsets) -> np.ndarray:
    """``E[D]`` under the decayed law at each offset, for a law given at offset 0."""
    if len(norms) > 1 and np.all(np.diff(norms) > 0):
        d, w = norms, probs
    else:
        d, inv = np.unique(norms, return_inverse=True)
        w = np.bincount(inv.reshape(-1), weights=probs)
    shift = d - d.min()
    out = np.empty(len(offsets))
    for s in range(0, len(offsets), _GRID_CHUNK):
        off = offsets[s:s + _GRID_CHUNK]
        e = w * np.exp(-phi * np.outer(off, shift))
        out[s:s + _GRID_CHUNK] = (e @ d) / e.sum(axis=1)
    return out


def trapezoid(values, offsets) -> float:
    return float(np.dot((values[1:] + values[:-1]) * 0.5, np.diff(offsets)))


# ---------------------------------------------------------------------------
# forward-pass kernels


class _GeneralKernel:
    """Filter state over an explicit list of count vectors."""

    def __init__(self, model, counts, probs, eps, j_max):
        self.model, self.marks = model, model.support
        self.counts, self.probs = counts, probs
        self.eps, self.j_max = eps, j_max

    def norms(self):
        return self.counts.sum(axis=1)

    def states(self):
        return self.counts

    def decay(self, elapsed):
        keep, self.probs, log_s = _decay_raw(self.counts, self.probs, elapsed, self.model.phi, self.eps)
        self.counts = self.counts[keep]
        return keep, log_s

    def jump(self, y):
        res = _jump_raw(self.marks, self.counts, self.probs, y, self.model, self.eps, self.j_max)
        self.counts, self.probs = res.counts, res.probs
        return res


class _PairStates:
    """Implicit counts for a ``{-a, +a}`` support: ``C^(-a) = k``, ``C^(+a) = q + k``."""

    __slots__ = ("k0", "n", "q")

    def __init__(self, k0, n, q):
        self.k0, self.n, self.q = k0, n, q

    def materialize(self):
        k = np.arange(self.k0, self.k0 + self.n, dtype=np.int64)
        return np.column_stack([k, self.q + k])


class _PairKernel:
    """Dense filter state for a support ``{-a, +a}``.

    States are indexed by ``k = C^(-a)`` over a contiguous range; only the two
    ends of the range are pruned.  Interior states below the pruning level are
    kept, which changes probabilities by less than ``eps``.
    """

    def __init__(self, model, counts, probs, y0, eps, j_max):
        self.model = model
        self.a = model.support[1]
        self.nu_minus, self.nu_plus = model.levy.mass
        self.eps, self.j_max = eps, j_max
        order = np.argsort(counts[:, 0])
        ks = counts[order, 0]
        self.k0 = int(ks[0])
        self.probs = np.zeros(int(ks[-1]) - self.k0 + 1)
        self.probs[ks - self.k0] = probs[order]
        tiny = self.probs == 0
        if tiny.any():
            # pruned interior states of the initial law: tiny, positive placeholders
            self.probs[tiny] = probs.min() * 1e-3
            self.probs /= self.probs.sum()
        self.q = y0 // self.a

    def norms(self):
        return 2 * np.arange(self.k0, self.k0 + len(self.probs)) + self.q

    def states(self):
        return _PairStates(self.k0, len(self.probs), self.q)

    def _trim(self, w, cap_hi=None):
        total = w.sum()
        thr = self.eps * total
        lo = 0
        hi = len(w) - 1 if cap_hi is None else min(len(w) - 1, cap_hi)
        capped = w[hi + 1:].sum() / total if hi < len(w) - 1 else 0.0
        while lo < hi and w[lo] < thr:
            lo += 1
        while hi > lo and w[hi] < thr:
            hi -= 1
        kept = w[lo:hi + 1]
        lost = 1.0 - kept.sum() / total
        if lost > LOST_MASS_TOL:
            raise TruncationError(f"pruning discarded {lost:.3g} probability (capped {capped:.3g})")
        return lo, kept / kept.sum()

    def decay(self, elapsed):
        phi = self.model.phi
        w = self.probs * np.exp(-2 * phi * elapsed * np.arange(len(self.probs)))
        log_s = math.log(w.sum()) - phi * (2 * self.k0 + self.q) * elapsed
        lo, self.probs = self._trim(w)
        self.k0 += lo
        return np.arange(lo, lo + len(self.probs)), log_s

    def jump(self, y):
        phi, a, p, n, k0 = self.model.phi, self.a, self.probs, len(self.probs), self.k0
        ks = np.arange(k0, k0 + n)
        if y == a:
            # arrival k -> k, departure of a negative event k -> k - 1
            dep_rate = phi * ks.astype(float)
            new_lo = max(k0 - 1, 0)
            w = np.zeros(k0 + n - new_lo)
            off = k0 - new_lo
            w[off:off + n] += self.nu_plus * p
            if k0 >= 1:
                w[:n] += dep_rate * p
            else:
                w[:n - 1] += (dep_rate * p)[1:]
            arr_dest = ks - new_lo
            dep_dest = np.where(ks >= 1, ks - 1 - new_lo, -1)
            arr_rate, q_new = self.nu_plus, self.q + 1
        elif y == -a:
            # arrival of a negative event k -> k + 1, departure of a positive one k -> k
            dep_rate = phi * (self.q + ks).astype(float)
            new_lo = k0
            w = np.zeros(n + 1)
            w[1:] += self.nu_minus * p
            w[:n] += dep_rate * p
            arr_dest = ks + 1 - new_lo
            dep_dest = np.where(self.q + ks >= 1, ks - new_lo, -1)
            arr_rate, q_new = self.nu_minus, self.q - 1
        else:
            raise ZeroIntensityJump(f"jump of size {y} has zero intensity under the model")
        lam = float(arr_rate + dep_rate @ p)
        if not lam > 0:
            raise ZeroIntensityJump(f"jump of size {y} has zero intensity under the model")
        # largest allowed k keeps both counts within j_max
        cap_hi = min(self.j_max, self.j_max - q_new) - new_lo
        lo, probs = self._trim(w, cap_hi)
        self.k0 = new_lo + lo
        self.probs, self.q = probs, q_new
        m = len(probs)
        arr_idx = arr_dest - lo
        dep_idx = dep_dest - lo
        arr_idx[(arr_idx < 0) | (arr_idx >= m)] = -1
        dep_idx[(dep_dest < 0) | (dep_idx < 0) | (dep_idx >= m)] = -1
        return _JumpResult(None, probs, lam, arr_idx, dep_idx, arr_rate, dep_rate)


def _is_pair(model):
    s = model.support
    return len(s) == 2 and s[0] == -s[1]


def _make_kernel(model, path, eps, j_max, fast=True):
    counts, probs, log_norm = _initial(model, path.y0, eps, j_max)
    if fast and _is_pair(model):
        kern = _PairKernel(model, counts, probs, path.y0, eps, j_max)
    else:
        kern = _GeneralKernel(model, counts, probs, eps, j_max)
    return kern, log_norm


def _counts(states):
    return states.materialize() if isinstance(states, _PairStates) else states


# ---------------------------------------------------------------------------
# full forward pass


@dataclass(frozen=True)
class FilterRecord:
    """Left-limit filtering law at a jump, with the intensity of every size."""

    time: float
    distribution: StateDistribution
    intensities: dict


class FilterStep:
    """Filter quantities at one jump.

    ``before_*`` describe ``p_{tau-,tau-}`` and ``after_*`` describe
    ``p_{tau,tau}``.  ``keep`` lists which states of the previous after-law
    survived the decay; ``arr_idx``/``dep_idx`` give, for each before-state, the
    after-state reached by an arrival of the jump's mark or by a departure of
    the opposite mark (``-1`` when impossible or pruned).
    """

    __slots__ = (
        "time", "size", "lam", "keep", "_before", "before_probs", "_after", "after_probs",
        "arr_idx", "dep_idx", "arr_rate", "dep_rate",
    )

    def __init__(self, time, size, lam, keep, before, before_probs, after, after_probs,
                 arr_idx, dep_idx, arr_rate, dep_rate):
        self.time, self.size, self.lam, self.keep = time, size, lam, keep
        self._before, self.before_probs = before, before_probs
        self._after, self.after_probs = after, after_probs
        self.arr_idx, self.dep_idx = arr_idx, dep_idx
        self.arr_rate, self.dep_rate = arr_rate, dep_rate

    @property
    def before_counts(self):
        self._before = _counts(self._before)
        return self._before

    @property
    def after_counts(self):
        self._after = _counts(self._after)
        return self._after


@dataclass(eq=False)
class GridTrace:
    """Filtered means on the union of the ``delta`` grid and the jump times.

    Values are left limits, so at a jump time they describe the pre-jump law.
    """

    times: np.ndarray
    mean_total: np.ndarray
    marks: tuple
    means: np.ndarray  # (n_times, n_marks)


@dataclass(eq=False)
class FilterOutput:
    model: TrawlModel
    path: JumpPath
    initial_counts: np.ndarray
    initial_probs: np.ndarray
    log_normalizer: float
    steps: list
    final_states: object
    final_probs: np.ndarray
    final_keep: np.ndarray
    lams: np.ndarray
    grid: GridTrace | None = None
    integral: float | None = None  # trapezoid value of int E[D_{t-}] dt on the grid
    log_survival: float = 0.0  # -phi * int E[D_{t-}] dt, exactly
    eps: float = EPS_PRUNE
    j_max: int = J_MAX

    @property
    def marks(self):
        return self.model.support

    def _dist(self, counts, probs, anchor):
        return StateDistribution(self.marks, counts, probs, anchor)

    def _anchor(self, i):
        """Observed value before jump ``i`` (after all jumps when ``i == len``)."""
        return self.path.y0 if i == 0 else int(self.path.values()[i - 1])

    @property
    def initial(self) -> StateDistribution:
        """``p_{0,0}``."""
        return self._dist(self.initial_counts, self.initial_probs, self.path.y0)

    @property
    def final_counts(self):
        self.final_states = _counts(self.final_states)
        return self.final_states

    @property
    def final(self) -> StateDistribution:
        """Filtering law at the horizon, ``p_{T,T}``."""
        return self._dist(self.final_counts, self.final_probs, self.path.final_value)

    def before(self, i) -> StateDistribution:
        s = self.steps[i]
        return self._dist(s.before_counts, s.before_probs, self._anchor(i))

    def after(self, i) -> StateDistribution:
        s = self.steps[i]
        return self._dist(s.after_counts, s.after_probs, self._anchor(i + 1))

    @property
    def at_jumps(self) -> list:
        """Per jump: ``(p_{tau-,tau-}, p_{tau,tau}, lambda_{tau-})``."""
        return [(self.before(i), self.after(i), s.lam) for i, s in enumerate(self.steps)]

    @property
    def intensities(self) -> np.ndarray:
        """Left-limit intensity of each observed jump."""
        return self.lams

    def records(self):
        for i, s in enumerate(self.steps):
            dist = self.before(i)
            yield FilterRecord(s.time, dist, conditional_intensity(dist, self.model))

    def mean_paths(self):
        """Left-limit filtered means at the jump times, as ``(times, means)``
        with ``means`` of shape ``(n_jumps, n_marks)``."""
        means = np.array([s.before_probs @ s.before_counts for s in self.steps])
        return self.path.times.copy(), means.reshape(-1, len(self.marks))


def run_filter(
    model: TrawlModel,
    path: JumpPath,
    delta: float | None = None,
    eps: float = EPS_PRUNE,
    j_max: int = J_MAX,
    record: bool = True,
    fast: bool = True,
    store_grid: bool | None = None,
) -> FilterOutput:
    """Run the exact filter along ``path``.

    With ``delta`` the filtered means are also evaluated on the global grid of
    spacing ``delta`` (plus the jump times) during inactivity, and the
    trapezoid value of ``int E[D_{t-}] dt`` is stored in ``integral``.
    ``record=False`` keeps only the jump intensities and the final law.
    ``fast=False`` disables the dense kernel used for ``{-a, +a}`` supports.
    ``store_grid`` (default: ``record``) controls whether the grid values are
    kept in ``grid``; the integral is accumulated either way.
    """
    store_grid = record if store_grid is None else store_grid
    if delta is not None and not delta > 0:
        raise ValueError("delta must be positive")
    phi = model.phi
    kern, log_norm = _make_kernel(model, path, eps, j_max, fast)
    init_counts, init_probs = _counts(kern.states()), kern.probs
    steps, lams = [], []
    grid_t, grid_d, grid_m = [], [], []
    integral = 0.0
    log_survival = 0.0
    t_prev = 0.0
    bounds = path.times.tolist() + [path.horizon]
    sizes = path.sizes.tolist()
    n = len(sizes)
    for i, t in enumerate(bounds):
        elapsed = t - t_prev
        if delta is not None:
            off = grid_offsets(t_prev, t, delta) if elapsed > 0 else np.zeros(1)
            vals = expected_total_on(kern.norms(), kern.probs, phi, off)
            integral += trapezoid(vals, off)
            if store_grid:
                grid_t.append(t_prev + off[:-1])
                grid_d.append(vals[:-1])
                grid_m.append(_means_on(_counts(kern.states()), kern.probs, phi, off[:-1]))
        keep, log_s = kern.decay(elapsed)
        log_survival += log_s
        if i == n:
            if delta is not None and store_grid:
                c = _counts(kern.states())
                grid_t.append(np.array([t]))
                grid_d.append(np.array([kern.probs @ c.sum(axis=1)]))
                grid_m.append((kern.probs @ c)[None, :])
            break
        before, before_probs = kern.states(), kern.probs
        res = kern.jump(sizes[i])
        lams.append(res.lam)
        if record:
            steps.append(
                FilterStep(
                    t, sizes[i], res.lam, keep, before, before_probs, kern.states(), kern.probs,
                    res.arr_idx, res.dep_idx, res.arr_rate, res.dep_rate,
                )
            )
        t_prev = t
    grid = None
    if delta is not None and store_grid:
        grid = GridTrace(np.concatenate(grid_t), np.concatenate(grid_d), model.support, np.vstack(grid_m))
    return FilterOutput(
        model, path, init_counts, init_probs, log_norm, steps, kern.states(), kern.probs, keep,
        np.array(lams), grid, integral if delta is not None else None, log_survival, eps, j_max,
    )


def _means_on(counts, probs, phi, offsets):
    norms = counts.sum(axis=1)
    shift = norms - norms.min()
    e = probs * np.exp(-phi * np.outer(offsets, shift))
    return (e @ counts) / e.sum(axis=1)[:, None]
