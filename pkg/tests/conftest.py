import pytest

from ddsolve.iteration import monolithic_solve
from ddsolve.mesh import build_rect_mesh, decompose_vertical
from ddsolve.problems import get_problem

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unit_5x5():
    """Unit square, h = 1/4 (5 x 5 nodes), split at x = 1/2."""
    return decompose_vertical(build_rect_mesh(1.0, 1.0, 0.25), 0.5)


@pytest.fixture(scope="session")
def unit_9x9():
    return decompose_vertical(build_rect_mesh(1.0, 1.0, 0.125), 0.5)


_decomps = {}


def rect_decomp(h):
    """The default ``[0,3] x [0,2]`` domain split at ``x = 1.5``, shared per ``h``."""
    if h not in _decomps:
        _decomps[h] = decompose_vertical(build_rect_mesh(3.0, 2.0, h), 1.5)
    return _decomps[h]


_references = {}


def reference(name, h, **kw):
    key = (name, h, tuple(sorted(kw.items())))
    if key not in _references:
        _references[key] = monolithic_solve(get_problem(name, **kw), rect_decomp(h))
    return _references[key]
