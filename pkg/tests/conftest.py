import numpy as np
import pytest

from rksampling.kernel import ShiftInvariantKernel
from rksampling.subspace import build_basis


ACCEPTANCE_LOG = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Lines collected here are repeated in the terminal summary."""
    return pytestconfig.stash.setdefault(ACCEPTANCE_LOG, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LOG, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def box_kernel():
    return ShiftInvariantKernel.from_spec("bspline", 1)


@pytest.fixture(scope="session")
def cubic_kernel():
    return ShiftInvariantKernel.from_spec("bspline", 4)


@pytest.fixture(scope="session")
def cubic_gram_kernel():
    return ShiftInvariantKernel.from_spec("bspline", 4, duality="gram_dual")


@pytest.fixture(scope="session")
def box_basis(box_kernel):
    return build_basis(box_kernel, 3, 2, delta0=1.0)


@pytest.fixture(scope="session")
def cubic_basis(cubic_kernel):
    return build_basis(cubic_kernel, 3, 2, delta0=2.0**-5)


@pytest.fixture(scope="session")
def spline_basis(cubic_gram_kernel):
    return build_basis(cubic_gram_kernel, 3, 2, delta0=2.0**-5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
