import numpy as np
import pytest
from hypothesis import settings

from pmixlab.spectral import Grid, ScalarField

settings.register_profile("pmixlab", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("pmixlab")


def trig_values(modes, *coords):
    """Evaluate sum of a cos(2 pi k.x) + b sin(2 pi k.x) at arbitrary points."""
    out = 0.0
    for k, a, b in modes:
        ph = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, coords))
        out = out + a * np.cos(ph) + b * np.sin(ph)
    return out


def trig_gradient(modes, *coords):
    """Exact gradient of :func:`trig_values`."""
    grads = [0.0] * len(coords)
    for k, a, b in modes:
        ph = 2 * np.pi * sum(ki * xi for ki, xi in zip(k, coords))
        common = -a * np.sin(ph) + b * np.cos(ph)
        for i, ki in enumerate(k):
            grads[i] = grads[i] + 2 * np.pi * ki * common
    return grads


def random_modes(rng, d, count=6, kmax=4):
    modes = []
    while len(modes) < count:
        k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=d))
        if any(k):
            modes.append((k, rng.standard_normal(), rng.standard_normal()))
    return modes


def trig_field(grid, modes):
    return ScalarField.from_values(grid, trig_values(modes, *grid.coords()))


@pytest.fixture
def grid2():
    return Grid(2, 64)


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Register one PASS/FAIL line for the acceptance summary."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
