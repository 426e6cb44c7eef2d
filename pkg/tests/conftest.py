import sys
import numpy as np
import pytest
from hypothesis import strategies as st

from cfmarket.market import ground_truth, sample_beliefs

H = 1e-5


def fd_grad(f, x, h=H):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jac(f, x, h=H):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=1)


def rel_err(approx, exact):
    approx, exact = np.asarray(approx), np.asarray(exact)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-8))


def vectors(K, lo=-4.0, hi=4.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=K, max_size=K).map(np.array)


@st.composite
def interior_simplex(draw, min_k=2, max_k=8, floor=1e-3):
    K = draw(st.integers(min_k, max_k))
    w = np.array(draw(st.lists(st.floats(floor, 1.0), min_size=K, max_size=K)))
    return w / w.sum()


@pytest.fixture(scope="session")
def desk_pop():
    return sample_beliefs(ground_truth("single_peaked", 5), 10, 0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
