import pytest

from qsmooth.core import Params
from qsmooth.pipeline import run_block


@pytest.fixture(scope="session")
def default_params():
    return Params()


@pytest.fixture(scope="session")
def default_block(default_params):
    """Every estimator at the default parameters (T = 4, Omega = 2, equal split)."""
    return run_block(default_params)


@pytest.fixture(scope="session")
def short_block():
    return run_block(Params(T=1.0, theta_grid_n=256))
