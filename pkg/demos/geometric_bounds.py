"""Non-negative counts with a geometric Levy basis.

Shows how the deterministic bounds on the initial hidden counts close in on
the truth as the path grows, then fits the model by partial likelihood.

    python3 demos/geometric_bounds.py [seed]
"""
import sys

from exptrawl import geometric, initial_bounds, mple_geometric, mple_phi, simulate
from exptrawl.model import JumpPath

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
truth = geometric(3.0, 0.5, 0.5)
path, trace = simulate(truth, 300.0, seed=seed)
c0 = trace.initial_state
marks = [1, 2, 3, 4]
print(f"Y0 = {path.y0}; true initial counts " + ", ".join(f"C0({y}) = {c0[y]}" for y in marks))

print(f"\n{'t':>5} " + " ".join(f"{'[lo, hi](' + str(y) + ')':>12}" for y in marks))
for t in (0, 1, 2, 5, 10, 15, 25, 50):
    k = int((path.times <= t).sum())
    prefix = JumpPath(path.y0, path.horizon, path.times[:k], path.sizes[:k])
    b = initial_bounds(prefix, marks)
    print(f"{t:5d} " + " ".join(f"{str(list(b[y])):>12}" for y in marks))

fit = mple_geometric(path)
phi = mple_phi(path, fit.levy(), bracket=(1e-2, 10.0))
print(f"\npartial likelihood: ||nu|| = {fit.total:.3f} (3), eta = {fit.eta:.3f} (0.5), phi = {phi:.3f} (0.5)")
