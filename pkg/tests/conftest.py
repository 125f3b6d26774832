import numpy as np
import pytest

from tfot.wls import FitWindow, WhitenedSystem


def random_spd(rng, m, scale=1.0):
    A = rng.standard_normal((m, m))
    return scale * (A @ A.T + m * np.eye(m))


def random_window(rng, T=10, m=2, order_truth=3, blocked=True):
    times = np.arange(1, T + 1, dtype=float)
    C = rng.standard_normal((order_truth + 1, m))
    s = times - times[0]
    Y = np.vander(s, order_truth + 1, increasing=True) @ C + rng.standard_normal((T, m))
    var = np.array([random_spd(rng, m) for _ in range(T)]) if blocked else np.eye(m)
    return FitWindow(times, Y, var)


def random_system(rng, n_rows=12, n_cols=4, dim=1):
    Z = rng.standard_normal((n_rows, n_cols))
    y = rng.standard_normal(n_rows)
    return WhitenedSystem(Z, y, dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
