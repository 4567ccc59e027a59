import numpy as np
import pytest

from conftest import law_of, max_gap
from exptrawl.errors import InconsistentSupport
from exptrawl.filtering import decay_update, run_filter
from exptrawl.model import JumpPath, StateDistribution, poisson, skellam
from exptrawl.oracle import enumerate_joint
from exptrawl.simulate import simulate
from exptrawl.smoother import backward_jump_update, run_smoother


def test_poisson_weights_are_certain():
    m = poisson(0.8, 0.4)
    path, _ = simulate(m, 40.0, seed=2)
    sm = run_smoother(m, run_filter(m, path))
    up = path.sizes > 0
    np.testing.assert_array_equal(sm.arrival_prob[up], 1.0)
    np.testing.assert_array_equal(sm.departure_prob[~up], 1.0)


def test_last_jump_reduction(fast_truth):
    path, _ = simulate(fast_truth, 3.0, seed=5)
    f = run_filter(fast_truth, path)
    before, after, lam = f.at_jumps[-1]
    y = int(path.sizes[-1])
    dist, w = backward_jump_update(after, before, after, lam, y, fast_truth)
    k = fast_truth.support.index(-y)
    factor = (fast_truth.rate(y) + fast_truth.phi * before.counts[:, k]) / lam
    np.testing.assert_allclose(dist.probs, before.probs * factor, rtol=1e-12)
    assert w.arrival_prob == pytest.approx(fast_truth.rate(y) / lam, rel=1e-12)


def test_backward_update_matches_run_smoother(fast_truth):
    path, _ = simulate(fast_truth, 4.0, seed=3)
    f = run_filter(fast_truth, path)
    sm = run_smoother(fast_truth, f)
    smooth_after = f.final  # smoothed law right after the last jump, carried unchanged
    for i in range(len(path) - 1, -1, -1):
        before, after, lam = f.at_jumps[i]
        smooth_after, w = backward_jump_update(smooth_after, before, after, lam, int(path.sizes[i]), fast_truth)
        assert max_gap(law_of(smooth_after), law_of(sm.smoothed_before(i))) < 1e-13
        assert w.arrival_prob == pytest.approx(sm.arrival_prob[i], abs=1e-13)
    assert max_gap(law_of(smooth_after), law_of(sm.initial_smoothed)) < 1e-13


def test_one_jump_against_enumeration(fast_truth):
    path = JumpPath(0, 0.5, [0.2], [1])
    sm = run_smoother(fast_truth, run_filter(fast_truth, path, eps=1e-16))
    ref = enumerate_joint(fast_truth, path)
    assert sm.arrival_prob[0] == pytest.approx(ref.arrival_prob[0], abs=1e-12)
    assert max_gap(law_of(sm.initial_smoothed), ref.initial) < 1e-12


def test_three_jumps_against_enumeration(fast_truth):
    path = JumpPath(1, 0.6, [0.1, 0.25, 0.4], [1, -1, -1])
    sm = run_smoother(fast_truth, run_filter(fast_truth, path, eps=1e-14))
    ref = enumerate_joint(fast_truth, path)
    for i in range(3):
        assert max_gap(law_of(sm.smoothed_before(i)), ref.smoothed_before[i]) < 1e-10
    np.testing.assert_allclose(sm.arrival_prob, ref.arrival_prob, atol=1e-10)
    np.testing.assert_allclose(sm.departure_prob, ref.departure_prob, atol=1e-10)


def test_zero_event_path(fast_truth):
    path = JumpPath(2, 1.5)
    f = run_filter(fast_truth, path)
    sm = run_smoother(fast_truth, f)
    assert sm.weights == []
    assert max_gap(law_of(sm.initial_smoothed), law_of(f.final)) < 1e-15
    ref = decay_update(f.initial, 1.5, fast_truth.phi)
    assert max_gap(law_of(sm.initial_smoothed), law_of(ref)) < 1e-14


def test_weights_and_mass(fast_truth):
    path, _ = simulate(fast_truth, 10.0, seed=9)
    sm = run_smoother(fast_truth, run_filter(fast_truth, path))
    np.testing.assert_allclose(sm.arrival_prob + sm.departure_prob, 1.0, atol=1e-10)
    for q in sm.before_probs:
        assert abs(q.sum() - 1) <= 1e-10
    steps = sm.mean_total_steps()
    assert steps.shape == (len(path) + 1,)
    assert np.all(steps >= -1e-12)
    for w, t in zip(sm.weights, path.times):
        assert w.time == t


def test_variance_reduction(fast_truth):
    # compared on a fixed time grid: at jump left limits the filtered law is a
    # prediction that ignores the jump itself, so no ordering holds there
    diffs = []
    for seed in range(50):
        path, _ = simulate(fast_truth, 5.0, seed=seed)
        f = run_filter(fast_truth, path)
        sm = run_smoother(fast_truth, f)
        for t in np.arange(0.25, 5.0, 0.25):
            filt = run_filter(fast_truth, path.restrict(t)).final.var_total()
            k = int(np.searchsorted(path.times, t, side="right"))
            # p_{t,T} is carried unchanged until the next jump
            smooth = sm.smoothed_before(k) if k < len(path) else f.final
            diffs.append(smooth.var_total() - filt)
    diffs = np.array(diffs)
    # one-sided test at the 5% level that smoothing does not increase variance
    z = diffs.mean() / (diffs.std(ddof=1) / np.sqrt(len(diffs)))
    assert z < 1.645
    assert diffs.mean() < 0


def test_inconsistent_support(fast_truth):
    path = JumpPath(0, 1.0, [0.5], [1])
    f = run_filter(fast_truth, path)
    before, after, lam = f.at_jumps[0]
    bogus = StateDistribution(after.marks, [[40, 41]], [1.0], 1)
    with pytest.raises(InconsistentSupport):
        backward_jump_update(bogus, before, after, lam, 1, fast_truth)


def test_rejects_mismatched_inputs(fast_truth):
    path, _ = simulate(fast_truth, 2.0, seed=1)
    f = run_filter(fast_truth, path)
    with pytest.raises(ValueError):
        run_smoother(skellam(1.0, 1.0, 1.0), f)
    with pytest.raises(ValueError):
        run_smoother(fast_truth, f, JumpPath(0, 2.0))
    with pytest.raises(ValueError):
        run_smoother(fast_truth, run_filter(fast_truth, path, record=False))
