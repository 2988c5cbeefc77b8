import pytest

from submonolayer.kinetics import solve_monomer_bulk
from submonolayer.model import ModelParams, make_power_law, monomer_only


@pytest.fixture(scope="session")
def traj2():
    """n = 2, alpha = 1, bare start, out to tau = 1e6."""
    p = ModelParams(2)
    return solve_monomer_bulk(p, monomer_only(p), 1e6)


@pytest.fixture(scope="session")
def traj3():
    p = ModelParams(3)
    return solve_monomer_bulk(p, monomer_only(p), 1e6)


@pytest.fixture(scope="session")
def powerlaw2():
    """mu = 2 power-law data truncated at 1e4 and its trajectory to tau = 1e6."""
    p = ModelParams(2)
    d = make_power_law(1.0, 2.0, 10**4, p)
    return p, d, solve_monomer_bulk(p, d, 1e6)
