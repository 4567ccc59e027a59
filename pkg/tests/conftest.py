import numpy as np
import pytest

from exptrawl.model import skellam

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} -- {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def truth():
    """Skellam parameters of the day-length example (rates per second)."""
    return skellam(0.013, 0.011, 0.034)


@pytest.fixture
def fast_truth():
    """Same stationary law, all rates scaled by 100."""
    return skellam(1.3, 1.1, 3.4)


def law_of(dist):
    """``{count tuple: prob}`` of a StateDistribution."""
    return {tuple(r): p for r, p in zip(dist.counts.tolist(), dist.probs.tolist())}


def max_gap(a, b):
    return max(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def marginal_gap(a, b, m):
    """Max gap between per-coordinate marginals of two ``{tuple: prob}`` laws."""
    worst = 0.0
    for k in range(m):
        ma, mb = {}, {}
        for s, p in a.items():
            ma[s[k]] = ma.get(s[k], 0.0) + p
        for s, p in b.items():
            mb[s[k]] = mb.get(s[k], 0.0) + p
        worst = max(worst, max_gap(ma, mb))
    return worst
