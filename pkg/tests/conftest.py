import numpy as np
import pytest

from tripletmine.imaging import DenseFeatures


def make_dense(features, xs, ys, side):
    """DenseFeatures over an arbitrary window pool (rows=1, cols=N)."""
    features = np.asarray(features, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    return DenseFeatures(features, xs, ys, 1, len(xs), side, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
