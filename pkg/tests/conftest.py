import numpy as np
import pytest
from hypothesis import settings

from irs_sensing.channel import ArrayGeometry, random_directions, synthesize_channel, DEFAULT_BS_POSITION

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


def make_scene(K=3, M=8, Nx=4, Ny=4, seed=0, **kw):
    geom = ArrayGeometry(M=M, Nx=Nx, Ny=Ny)
    dirs = random_directions(K, np.random.default_rng([seed, 1]))
    return synthesize_channel(geom, DEFAULT_BS_POSITION, directions=dirs, seed=seed, **kw)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scene3():
    return make_scene(K=3)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES = {}


@pytest.fixture
def report():
    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
