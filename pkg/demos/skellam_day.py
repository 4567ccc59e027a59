"""A day of Skellam price changes: filter, smooth and fit.

Simulates 21 hours of +-1 ticks, tracks the hidden counts, and compares EM with
direct maximization of the grid log-likelihood.

    python3 demos/skellam_day.py [seed]
"""
import sys
import time

import numpy as np

from exptrawl import (
    direct_mle,
    em_fit,
    log_likelihood,
    moment_start,
    run_filter,
    run_smoother,
    simulate,
    skellam,
)

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
truth = skellam(0.013, 0.011, 0.034)
path, trace = simulate(truth, 75_600.0, seed=seed)
print(f"{len(path)} jumps over {path.horizon:.0f} s, Y0 = {path.y0}, Y_T = {path.final_value}")

# filtered vs smoothed size of the hidden population at the jump times
filt = run_filter(truth, path)
smooth = run_smoother(truth, filt)
_, filt_means = filt.mean_paths()
_, smooth_means = smooth.mean_paths()
true_counts = np.array([trace.state_at(t - 1e-9).total for t in path.times])
for name, means in (("filter", filt_means), ("smoother", smooth_means)):
    rmse = np.sqrt(((means.sum(axis=1) - true_counts) ** 2).mean())
    print(f"RMSE of E[D] at jump left limits, {name:>8}: {rmse:.3f}")
w = smooth.weights
print(f"jumps explained as arrivals (posterior mean): {sum(x.arrival_prob for x in w):.1f} of {len(w)}")

# estimation
start = moment_start(path, truth.support)
t0 = time.perf_counter()
em, em_trace = em_fit(start, path)
t_em = time.perf_counter() - t0
t0 = time.perf_counter()
dm = direct_mle(start, path, delta=0.5)
t_dm = time.perf_counter() - t0
print(f"\n{'':>8} {'nu-':>9} {'nu+':>9} {'phi':>9} {'loglik(0.01)':>14}")
for name, m in (("truth", truth), ("EM", em), ("direct", dm)):
    nu_m, nu_p, phi = m.params()
    print(f"{name:>8} {nu_m:9.5f} {nu_p:9.5f} {phi:9.5f} {log_likelihood(m, path, 0.01):14.4f}")
print(f"\nEM: {len(em_trace)} iterations in {t_em:.1f} s; direct: {t_dm:.1f} s")
