import numpy as np
import pytest

from moment_match.samples import Bounds, Sample


def central_difference(f, x, step=1e-5):
    """Finite-difference oracle kept separate from the package's own helper."""
    x = np.array(x, dtype=float)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += step
        down[idx] -= step
        out[idx] = (f(up) - f(down)) / (2 * step)
    return out


def rel_error(a, b, floor=1e-8):
    a, b = np.ravel(a), np.ravel(b)
    scale = np.maximum(np.abs(a), np.abs(b))
    keep = scale >= floor
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(a - b)[keep] / scale[keep]))


def random_sample(rng, n, N, bounds=Bounds(0.0, 1.0), margin=0.0):
    lo = bounds.lo + margin * bounds.span
    hi = bounds.hi - margin * bounds.span
    return Sample(rng.uniform(lo, hi, size=(n, N)), bounds)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
