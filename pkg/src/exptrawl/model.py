"""Parameter and data containers.

A model is a finite Lévy measure on the nonzero integers (arrival rate per
mark) together with the decay rate ``phi`` of the exponential trawl.  Observed
data are a :class:`JumpPath`; hidden states are count vectors over the marks.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    EmptySupport,
    InvalidPath,
    ModelError,
    NonPositiveMass,
    NonPositivePhi,
    ZeroMark,
)

EPS_PRUNE = 1e-12
J_MAX = 50
TAIL_TOL = 1e-12


def _check_levy(support, mass):
    if len(support) == 0:
        raise EmptySupport("Lévy measure has empty support")
    if len(support) != len(mass):
        raise ModelError("support and mass lengths differ")
    for y in support:
        if int(y) != y:
            raise ModelError(f"mark {y!r} is not an integer")
        if y == 0:
            raise ZeroMark("mark 0 is not allowed: marks must be nonzero integers")
    if len(set(support)) != len(support):
        raise ModelError(f"marks must be distinct, got {support}")
    for y, m in zip(support, mass):
        if not np.isfinite(m) or m <= 0:
            raise NonPositiveMass(f"nu({y}) = {m} must be positive and finite")


@dataclass(frozen=True)
class LevyMeasure:
    """Finite Lévy measure: ``mass[i]`` is the arrival rate of mark ``support[i]``.

    Marks are stored in increasing order.
    """

    support: tuple
    mass: tuple

    def __post_init__(self):
        support = tuple(int(y) if float(y).is_integer() else y for y in self.support)
        mass = tuple(float(m) for m in self.mass)
        _check_levy(support, mass)
        order = sorted(range(len(support)), key=lambda i: support[i])
        object.__setattr__(self, "support", tuple(support[i] for i in order))
        object.__setattr__(self, "mass", tuple(mass[i] for i in order))

    @classmethod
    def from_dict(cls, rates: Mapping[int, float]) -> "LevyMeasure":
        return cls(tuple(rates.keys()), tuple(rates.values()))

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.mass))

    def rate(self, y: int) -> float:
        """Arrival rate of mark ``y``; zero off the support."""
        try:
            return self.mass[self.support.index(y)]
        except ValueError:
            return 0.0

    @property
    def total(self) -> float:
        return float(sum(self.mass))

    @property
    def nonnegative(self) -> bool:
        return self.support[0] > 0


@dataclass(frozen=True)
class TrawlModel:
    levy: LevyMeasure
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", float(self.phi))
        validate_model(self)

    @property
    def support(self) -> tuple:
        return self.levy.support

    def rate(self, y: int) -> float:
        return self.levy.rate(y)

    def stationary_means(self) -> dict:
        """Mean of the stationary Poisson law of each hidden count."""
        return {y: m / self.phi for y, m in zip(self.levy.support, self.levy.mass)}

    def params(self) -> np.ndarray:
        """Parameter vector ``(nu(y) for y in support) + (phi,)``."""
        return np.array(self.levy.mass + (self.phi,))

    def with_params(self, params) -> "TrawlModel":
        params = np.asarray(params, dtype=float)
        return TrawlModel(LevyMeasure(self.support, tuple(params[:-1])), params[-1])

    def with_phi(self, phi: float) -> "TrawlModel":
        return TrawlModel(self.levy, phi)


def validate_model(model: TrawlModel) -> TrawlModel:
    """Check every model invariant, raising the matching error.  Returns the model."""
    _check_levy(model.levy.support, model.levy.mass)
    if not np.isfinite(model.phi) or model.phi <= 0:
        raise NonPositivePhi(f"phi = {model.phi} must be positive")
    return model


def skellam(nu_plus: float, nu_minus: float, phi: float) -> TrawlModel:
    return TrawlModel(LevyMeasure((1, -1), (nu_plus, nu_minus)), phi)


def poisson(nu: float, phi: float) -> TrawlModel:
    return TrawlModel(LevyMeasure((1,), (nu,)), phi)


def geometric_levy(total: float, eta: float, tail_tol: float = TAIL_TOL) -> LevyMeasure:
    """Geometric measure ``nu(y) = total * eta * (1 - eta)**(y - 1)`` for ``y >= 1``.

    Truncated at the smallest ``y_max`` whose tail intensity
    ``total * (1 - eta)**y_max`` is below ``tail_tol``.
    """
    if not 0 < eta <= 1:
        raise ModelError(f"eta = {eta} must lie in (0, 1]")
    if total <= 0:
        raise NonPositiveMass(f"total mass {total} must be positive")
    if eta == 1:
        return LevyMeasure((1,), (total,))
    y_max = 1
    while total * (1 - eta) ** y_max >= tail_tol:
        y_max += 1
    ys = np.arange(1, y_max + 1)
    return LevyMeasure(tuple(int(y) for y in ys), tuple(total * eta * (1 - eta) ** (ys - 1)))


def geometric(total: float, eta: float, phi: float, tail_tol: float = TAIL_TOL) -> TrawlModel:
    return TrawlModel(geometric_levy(total, eta, tail_tol), phi)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JumpPath:
    """Observed trawl path: initial value, horizon and the jumps in ``(0, horizon]``."""

    y0: int
    horizon: float
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    sizes: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        times = _frozen(self.times, float).reshape(-1)
        sizes_f = np.asarray(self.sizes).reshape(-1)
        if len(times) != len(sizes_f):
            raise InvalidPath("times and sizes lengths differ")
        if np.any(sizes_f != np.round(sizes_f)):
            raise InvalidPath("jump sizes must be integers")
        sizes = _frozen(sizes_f, np.int64)
        if int(self.y0) != self.y0:
            raise InvalidPath(f"y0 = {self.y0} must be an integer")
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise InvalidPath(f"horizon = {self.horizon} must be positive")
        if np.any(sizes == 0):
            raise InvalidPath("zero-size jumps are not allowed")
        if len(times):
            if times[0] <= 0 or times[-1] > horizon:
                raise InvalidPath("jump times must lie in (0, horizon]")
            if np.any(np.diff(times) <= 0):
                raise InvalidPath("jump times must be strictly increasing")
        object.__setattr__(self, "y0", int(self.y0))
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_events(cls, y0: int, horizon: float, events: Iterable) -> "JumpPath":
        events = list(events)
        times = [t for t, _ in events]
        sizes = [y for _, y in events]
        return cls(y0, horizon, np.array(times, dtype=float), np.array(sizes, dtype=np.int64))

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, JumpPath):
            return NotImplemented
        return (
            self.y0 == other.y0
            and self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.sizes, other.sizes)
        )

    def events(self):
        return list(zip(self.times.tolist(), self.sizes.tolist()))

    def values(self) -> np.ndarray:
        """``Y`` just after each jump."""
        return self.y0 + np.cumsum(self.sizes)

    @property
    def final_value(self) -> int:
        return int(self.y0 + self.sizes.sum())

    def value_at(self, t: float) -> int:
        k = np.searchsorted(self.times, t, side="right")
        return int(self.y0 + self.sizes[:k].sum())

    def restrict(self, horizon: float) -> "JumpPath":
        """The same path observed only up to ``horizon``."""
        keep = self.times <= horizon
        return JumpPath(self.y0, horizon, self.times[keep], self.sizes[keep])


def counts_from_path(path: JumpPath) -> Counter:
    """Number of jumps of each size; missing sizes count as zero."""
    sizes, counts = np.unique(path.sizes, return_counts=True)
    return Counter(dict(zip(sizes.tolist(), counts.tolist())))


@dataclass(frozen=True)
class StateVector:
    """Sparse hidden count vector: sorted ``(mark, count)`` pairs with count >= 1."""

    items: tuple = ()

    def __post_init__(self):
        items = tuple(sorted((int(y), int(c)) for y, c in self.items if c != 0))
        for y, c in items:
            if c < 0:
                raise ModelError(f"negative count {c} for mark {y}")
            if y == 0:
                raise ZeroMark("mark 0 is not allowed")
        if len({y for y, _ in items}) != len(items):
            raise ModelError("duplicate marks in state vector")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_dict(cls, counts: Mapping[int, int]) -> "StateVector":
        return cls(tuple(counts.items()))

    def __getitem__(self, y):
        for mark, c in self.items:
            if mark == y:
                return c
        return 0

    def as_dict(self) -> dict:
        return dict(self.items)

    @property
    def total(self) -> int:
        return sum(c for _, c in self.items)

    @property
    def value(self) -> int:
        return sum(y * c for y, c in self.items)


@dataclass(frozen=True, eq=False)
class StateDistribution:
    """Probability table over hidden count vectors sharing one observed value.

    ``counts[i, k]`` is the count of mark ``marks[k]`` in state ``i``; every
    state satisfies ``sum_k marks[k] * counts[i, k] == anchor``.
    """

    marks: tuple
    counts: np.ndarray
    probs: np.ndarray
    anchor: int

    def __post_init__(self):
        counts = _frozen(self.counts, np.int64).reshape(len(self.probs), len(self.marks))
        probs = _frozen(self.probs, float)
        if len(probs) == 0:
            raise ModelError("empty state distribution")
        if np.any(counts < 0):
            raise ModelError("negative hidden counts")
        if np.any(probs <= 0) or np.any(probs > 1 + 1e-15):
            raise ModelError("state probabilities must lie in (0, 1]")
        if abs(probs.sum() - 1) > 1e-12:
            raise ModelError(f"probabilities sum to {probs.sum()!r}, not 1")
        if np.any(counts @ np.asarray(self.marks, dtype=np.int64) != self.anchor):
            raise ModelError("a state violates the anchor constraint")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "anchor", int(self.anchor))

    @classmethod
    def from_dict(cls, marks, table: Mapping, anchor: int) -> "StateDistribution":
        """Build from ``{StateVector or dict: prob}``; probabilities are normalized."""
        marks = tuple(marks)
        rows, probs = [], []
        for state, p in table.items():
            state = state.as_dict() if isinstance(state, StateVector) else dict(state)
            rows.append([state.get(y, 0) for y in marks])
            probs.append(p)
        probs = np.asarray(probs, dtype=float)
        return cls(marks, np.array(rows, dtype=np.int64), probs / probs.sum(), anchor)

    def __len__(self):
        return len(self.probs)

    def states(self) -> list:
        return [StateVector(tuple(zip(self.marks, row))) for row in self.counts.tolist()]

    def as_dict(self) -> dict:
        return dict(zip(self.states(), self.probs.tolist()))

    def mean(self, y: int) -> float:
        """Expected count of mark ``y`` (zero for marks outside ``marks``)."""
        if y not in self.marks:
            return 0.0
        return float(self.probs @ self.counts[:, self.marks.index(y)])

    def means(self) -> dict:
        return dict(zip(self.marks, (self.probs @ self.counts).tolist()))

    def norms(self) -> np.ndarray:
        """``||j||_1`` of every state."""
        return self.counts.sum(axis=1)

    def mean_total(self) -> float:
        return float(self.probs @ self.norms())

    def var_total(self) -> float:
        d = self.norms()
        m = self.probs @ d
        return float(self.probs @ (d - m) ** 2)

    def marginal(self, y: int) -> dict:
        """Marginal pmf of the count of mark ``y``."""
        col = self.counts[:, self.marks.index(y)]
        out = {}
        for c, p in zip(col.tolist(), self.probs.tolist()):
            out[c] = out.get(c, 0.0) + p
        return dict(sorted(out.items()))


@dataclass(frozen=True)
class CompleteData:
    """Fully observed hidden system on ``(0, horizon]``.

    ``arrival_counts[y]`` and ``departure_counts[y]`` count arrivals and
    departures of mark ``y``; ``risk_integral`` is the time integral of the
    total hidden count ``D``.
    """

    horizon: float
    initial_state: StateVector
    arrival_counts: Mapping
    departure_counts: Mapping
    risk_integral: float
    path: JumpPath | None = None

    def __post_init__(self):
        if self.horizon <= 0:
            raise ModelError("horizon must be positive")
        if self.risk_integral < 0:
            raise ModelError("risk integral must be nonnegative")
        for y, c in self.terminal_counts().items():
            if c < 0:
                raise ModelError(f"mark {y}: more departures than initial plus arrivals")

    def marks(self) -> list:
        return sorted(
            set(self.initial_state.as_dict()) | set(self.arrival_counts) | set(self.departure_counts)
        )

    def terminal_counts(self) -> dict:
        return {
            y: self.initial_state[y] + self.arrival_counts.get(y, 0) - self.departure_counts.get(y, 0)
            for y in self.marks()
        }

    @property
    def n_arrivals(self):
        return sum(self.arrival_counts.values())

    @property
    def n_departures(self):
        return sum(self.departure_counts.values())
