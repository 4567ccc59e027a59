import math

import numpy as np
import pytest

from exptrawl.errors import DegenerateData, NegativePathValue, NotConverged
from exptrawl.estimate import (
    SufficientStats,
    direct_mle,
    e_step,
    em_fit,
    golden_max,
    initial_bounds,
    m_step,
    mcle,
    moment_start,
    mple_geometric,
    mple_levy,
    mple_phi,
    profile_loglik,
    profile_phi,
)
from exptrawl.likelihood import complete_loglik, exact_log_likelihood, log_likelihood
from exptrawl.model import CompleteData, JumpPath, LevyMeasure, StateVector, poisson, skellam
from exptrawl.simulate import complete_data, simulate


@pytest.fixture(scope="module")
def short_path():
    m = skellam(1.3, 1.1, 3.4)
    path, _ = simulate(m, 30.0, seed=21)
    return m, path


def worked_data():
    return CompleteData(10.0, StateVector.from_dict({1: 1}), {1: 4}, {1: 3}, 20.0)


# ---------------------------------------------------------------------------
# complete data


def test_mcle_worked_example():
    fit = mcle(worked_data())
    phi = math.sqrt(56) / 40
    assert fit.phi == pytest.approx(phi, rel=1e-15)
    assert fit.rate(1) == pytest.approx(5 / (10 + 1 / phi), rel=1e-15)


def test_mcle_is_stationary_point():
    data = worked_data()
    fit = mcle(data)
    x = np.log(fit.params())

    def ll(v):
        nu, phi = np.exp(v)
        return complete_loglik(data, {1: nu}, phi)

    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        grad = (ll(x + e) - ll(x - e)) / (2 * h)
        assert abs(grad) <= 1e-6


def test_mcle_degenerate():
    with pytest.raises(DegenerateData):
        mcle(CompleteData(5.0, StateVector.from_dict({}), {}, {}, 0.0), support=[1])
    with pytest.raises(DegenerateData):
        mcle(CompleteData(5.0, StateVector.from_dict({1: 2}), {}, {}, 0.0))


def test_poisson_e_step_is_exact():
    m = poisson(0.8, 0.4)
    path, trace = simulate(m, 80.0, seed=3)
    data = complete_data(trace, 80.0)
    stats = e_step(m, path)
    assert stats.arrivals[1] == pytest.approx(data.arrival_counts[1], abs=1e-12)
    assert stats.departures[1] == pytest.approx(data.departure_counts[1], abs=1e-12)
    assert stats.initial[1] == pytest.approx(data.initial_state[1], abs=1e-12)
    assert stats.risk_integral == pytest.approx(data.risk_integral, rel=1e-12)
    a, b = m_step(stats, 80.0), mcle(data)
    np.testing.assert_allclose(a.params(), b.params(), rtol=1e-12)


def test_zero_event_e_step(fast_truth):
    path = JumpPath(2, 1.5)
    stats = e_step(fast_truth, path)
    assert stats.n_jumps == 0
    assert stats.risk_integral == pytest.approx(stats.initial_total * 1.5, rel=1e-14)


def test_m_step_positive():
    stats = SufficientStats({-1: 0.3, 1: 2.2}, {-1: 1.1, 1: 0.4}, {-1: 0.2, 1: 0.7}, 0.9, 3.3)
    fit = m_step(stats, 4.0)
    assert np.all(fit.params() > 0)


# ---------------------------------------------------------------------------
# EM and direct maximization


def test_em_fixed_point_and_ascent(short_path):
    m, path = short_path
    fit, trace = em_fit(moment_start(path, m.support), path, tol=1e-11, monitor_delta=0.01)
    assert trace.converged
    again = m_step(e_step(fit, path), path.horizon)
    np.testing.assert_allclose(again.params(), fit.params(), atol=1e-8)
    steps = np.diff(trace.logliks)
    # EM is exact; only the delta = 0.01 monitor can wobble
    assert steps.min() >= -1e-6 - 1e-3


def test_em_poisson_fixed_point():
    m = poisson(0.8, 0.4)
    path, trace = simulate(m, 100.0, seed=6)
    target = mcle(complete_data(trace, 100.0))
    # the posterior is degenerate, so one M-step reaches the MCLE from any start ...
    fit, tr = em_fit(m, path, tol=1e-10)
    assert len(tr) == 2
    np.testing.assert_allclose(fit.params(), target.params(), rtol=1e-12)
    # ... and a start at that fixed point converges in one iteration
    fit, tr = em_fit(target, path, tol=1e-10)
    assert len(tr) == 1 and tr.converged


def test_em_not_converged(short_path):
    m, path = short_path
    with pytest.raises(NotConverged) as info:
        em_fit(moment_start(path, m.support), path, max_iter=2, monitor_delta=None)
    model, trace = info.value.best
    assert len(trace) == 2 and not trace.converged
    model, trace = em_fit(moment_start(path, m.support), path, max_iter=2, monitor_delta=None,
                          raise_on_failure=False)
    assert not trace.converged
    with pytest.raises(ValueError):
        em_fit(m, path, tol=0.0)


def test_direct_matches_em_and_beats_truth(short_path):
    m, path = short_path
    start = moment_start(path, m.support)
    em, _ = em_fit(start, path, monitor_delta=None)
    dm = direct_mle(start, path, delta=0.01)
    np.testing.assert_allclose(dm.params(), em.params(), rtol=1e-2)
    assert log_likelihood(dm, path, 0.01) >= log_likelihood(m, path, 0.01)
    with pytest.raises(ValueError):
        direct_mle(start, path, delta=-1.0)


def test_profile_loglik_threads(short_path, monkeypatch):
    m, path = short_path
    phis = [2.0, 3.4, 5.0]
    ref = [log_likelihood(m.with_phi(p), path, 0.5) for p in phis]
    np.testing.assert_allclose(profile_loglik(m, path, phis), ref, rtol=1e-14)
    monkeypatch.setenv("TRAWL_THREADS", "3")
    np.testing.assert_allclose(profile_loglik(m, path, phis), ref, rtol=1e-14)


def test_golden_max():
    x, fx = golden_max(lambda v: -(v - 0.3) ** 2 + 2, -1.0, 2.0, tol=1e-10)
    # a quadratic peak is flat below sqrt(machine eps) in x
    assert x == pytest.approx(0.3, abs=3e-8) and fx == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# non-negative case


def test_mple_levy_direct_frequency():
    path = JumpPath(0, 10.0, [1, 2, 3, 4, 5], [1] * 5)
    assert mple_levy(path).as_dict() == {1: 0.5}
    with pytest.raises(NegativePathValue):
        mple_levy(JumpPath(0, 10.0, [1.0], [-1]))
    with pytest.raises(DegenerateData):
        mple_levy(JumpPath(3, 10.0, [1.0], [-1]))


def test_mple_geometric_closed_form():
    path = JumpPath(0, 20.0, [1, 2, 3, 4, 5, 6, 7], [1, 2, 1, 3, -1, 1, 2])
    fit = mple_geometric(path)
    pos = [s for s in path.sizes.tolist() if s > 0]
    assert fit.total == pytest.approx(len(pos) / 20.0, rel=1e-6)
    assert fit.eta == pytest.approx(len(pos) / sum(pos), rel=1e-6)


def test_mple_phi_poisson_closed_form():
    m = poisson(0.8, 0.4)
    path, _ = simulate(m, 200.0, seed=5)
    levy = mple_levy(path)
    nu = levy.rate(1)
    edges = np.concatenate([[0.0], path.times, [path.horizon]])
    integral = float(np.concatenate([[path.y0], path.values()]) @ np.diff(edges))
    n_dep = int((path.sizes < 0).sum())
    # stationarity in phi of  N^D log phi - phi int D + y0 log(nu / phi) - nu / phi
    b = n_dep - path.y0
    phi = (b + math.sqrt(b * b + 4 * nu * integral)) / (2 * integral)
    assert mple_phi(path, levy, tol=1e-10) == pytest.approx(phi, rel=1e-6)


def test_mple_phi_without_departures():
    path = JumpPath(0, 30.0, [1.0, 5.0, 11.0], [1, 1, 1])
    levy = mple_levy(path)
    # without departures the conditional likelihood decreases in phi
    with pytest.raises(NotConverged):
        mple_phi(path, levy, include_initial=False)
    with pytest.raises(NotConverged):
        mple_phi(path, levy, bracket=(1e-2, 10.0), include_initial=False)
    with pytest.raises(NegativePathValue):
        mple_phi(JumpPath(0, 3.0, [1.0], [-1]), levy)


def test_profile_phi_history(short_path):
    path = JumpPath(3, 40.0, [1.0, 6.0, 8.0, 20.0], [-1, 1, -1, -1])
    history = []
    phi, ll = profile_phi(path, LevyMeasure((1,), (0.1,)), history=history)
    assert ll == max(h[1] for h in history)
    assert ll == pytest.approx(exact_log_likelihood(poisson(0.1, phi), path), rel=1e-12)


def test_bounds_without_events():
    assert initial_bounds(JumpPath(7, 5.0), marks=[1, 2, 3]) == {1: (0, 7), 2: (0, 3), 3: (0, 2)}


def test_bounds_follow_departures():
    path = JumpPath(5, 10.0, [1, 2, 3, 4], [-2, -1, 2, -2])
    b = initial_bounds(path, marks=[1, 2])
    # two net size-2 departures before any size-2 arrival is offset
    assert b[2][0] == 1 and b[1][0] == 1
    assert b[1] == (1, 5 - 2 * 1) and b[2] == (1, (5 - 1) // 2)
    with pytest.raises(ValueError):
        initial_bounds(path, marks=[0])


def test_moment_start():
    path = JumpPath(0, 10.0, [1, 2, 3], [1, 1, -1])
    m = moment_start(path, (-1, 1))
    assert m.rate(1) == pytest.approx(2 / 20) and m.rate(-1) == pytest.approx(1 / 20)
    assert m.phi == pytest.approx(0.3)
    assert moment_start(JumpPath(0, 10.0), (1,)).rate(1) == pytest.approx(0.5 / 20)
