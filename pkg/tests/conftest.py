import numpy as np
import pytest

from snapmsi import FilterArrayPattern, MultispectralImage, SensitivityMatrix, SpectralGrid


def small_grid(count=6, start=420.0, step=10.0):
    return SpectralGrid(start, step, count)


def random_cube(rng, h, w, grid):
    return MultispectralImage(rng.uniform(0.0, 1.0, (h, w, grid.count)), grid)


def random_sens(rng, k, grid):
    return SensitivityMatrix(rng.uniform(0.0, 1.0, (k, grid.count)), grid)


def random_pattern(rng, th, tw, k):
    """Random tile where every filter appears at least once."""
    cells = np.concatenate([np.arange(k), rng.integers(0, k, th * tw - k)])
    rng.shuffle(cells)
    return FilterArrayPattern(cells.reshape(th, tw), k)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
