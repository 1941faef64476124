import numpy as np
import pytest

from semflow.mesh import build_reference_basis
from semflow.meshgen import box_mesh
from semflow.sem_ops import SEMSpace


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False,
                     help="run the multi-hour extended checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="extended check; pass --extended to run")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def square_space():
    """4 x 4 elements on the unit square, N = 6, walls all round."""
    return SEMSpace(box_mesh(4, 4, 6))


@pytest.fixture(scope="session")
def basis8():
    return build_reference_basis(8)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title = results[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
    if 11 not in results:
        terminalreporter.write_line("criterion 11: NOT RUN  extended NACA 0012 RANS check "
                                    "(pass --extended)")
